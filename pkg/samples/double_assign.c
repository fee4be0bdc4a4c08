float v[N], c[N], k1, k2;
int i;

for (i = 0; i < N; i++) {
    c[i] = k1 * v[i];
    c[i] = c[i] + k2 * v[i];
}
