float u[N], w[N], r[N], t[N];
int i;

#pragma polca map FIRST u r
for (i = 0; i < N; i++) {
    r[i] = 2 * u[i];
}

#pragma polca map SECOND w t
for (i = 0; i < N; i++) {
    t[i] = w[i] + 1;
}
