float x, y, s, r;

r = x * s + y * s;
