float v[N], acc;
int i;

acc = 0;
#pragma polca fold FSUM 0 v acc
for (i = 0; i < N; i++) {
    acc += v[i];
}
