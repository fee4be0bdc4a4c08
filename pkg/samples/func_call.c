float v[N], c[N], a;
int i;

float scale(float s, float x) {
    return s * x;
}

#pragma stml pure scale
for (i = 0; i < N; i++) {
    c[i] = scale(a, v[i]);
}
