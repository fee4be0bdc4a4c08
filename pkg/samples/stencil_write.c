int c[N], i;

#pragma stml writes c in {-1,0}
for (i = 1; i < N; i++) {
    c[i - 1] = i;
    c[i] = c[i - 1] * 2;
}
