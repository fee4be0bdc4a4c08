float x[N], y[N], alpha;
int i;

for (i = 0; i < N; i++) {
    y[i] += alpha * x[i];
}
