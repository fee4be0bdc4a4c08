int v[N], c[N], i;

for (i = 0; i < N; i++) {
    if (v[i] > 0) {
        c[i] = v[i];
    } else {
        c[i] = 0 - v[i];
    }
}
