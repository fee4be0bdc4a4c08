int v[N], s, i;

s = 0;
for (i = 0; i < N; i++) {
    s += v[i];
}
for (i = 0; i < N; i++) {
    s += v[i] * v[i];
}
