float m[N * M], x[M], y[N], s;
int i, j;

for (i = 0; i < N; i++) {
    s = 0;
    for (j = 0; j < M; j++) {
        s += m[i * M + j] * x[j];
    }
    y[i] = s;
}
