int v[N], c[N], i, j;

j = 0;
for (i = 0; i < N; i++) {
    c[j] = v[j];
    j++;
}
