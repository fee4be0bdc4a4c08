int v[N], s, p, i;

s = 100;
p = 1;
for (i = 0; i < N; i++) {
    s -= v[i];
}
for (i = 0; i < N; i++) {
    p *= 2;
}
