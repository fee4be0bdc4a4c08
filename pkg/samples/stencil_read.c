float c[N], a;
int i;

a = 0;
#pragma stml reads c in {-1,0,+1}
for (i = 1; i < N - 1; i++) {
    a += c[i - 1] + c[i + 1] - 2 * c[i];
}
