float v[N], out[N], p, q;
int i;

for (i = 0; i < N; i++) {
    out[i] = (p * q + 1) * v[i];
}
