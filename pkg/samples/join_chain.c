int t, u, r;

t = u + 1;
r = 2 * u;
t = t * 3;
u = r + t;
