float v[N], w[N + 1];
int i;

w[0] = 0;
#pragma polca scanl FACC 0 v w
for (i = 0; i < N; i++) {
    w[i + 1] = w[i] + v[i];
}
