float c[N], v[N], a, b;

#pragma polca map BODY1 v c
for(int i=0;i<N;i++)
#pragma polca def BODY1
#pragma polca input v[i]
#pragma polca output c[i]
   c[i] = a*v[i];

#pragma polca map BODY2 zip(v,c) c
for(int i=0;i<N;i++)
#pragma polca def BODY2
#pragma polca input (v[i],c[i])
#pragma polca output c[i]
   c[i] += b*v[i];
