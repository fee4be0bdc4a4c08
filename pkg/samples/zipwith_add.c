float v[N], w[N], z[N];
int i;

#pragma polca zipWith FADD v w z
for (i = 0; i < N; i++) {
    z[i] = v[i] + w[i];
}
