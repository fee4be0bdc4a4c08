int v[N], best, i;

best = v[0];
for (i = 1; i < N; i++) {
    if (v[i] < best) {
        best = v[i];
    }
}
