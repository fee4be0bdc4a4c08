int w[N], n, i;

#pragma polca itn STEP 0 n w
for (i = 0; i < n; i++) {
    w[i] = i * 2;
}
