"""
Lyapunov spectra and proximal dimension
=======================================

The top exponents of a random product coincide exactly r times, where r is
the proximal dimension.  Realified complex groups have r = 2, quaternionic
ones r = 4, the SO(1,7) exterior square r = 6.
"""

import numpy as np

from schubertwalk import groups, walk

for name in ["sl2z", "slc2-in-sl4", "slh2-in-sl8", "so1-7-ext2"]:
    mu = groups.preset(name)
    prof = walk.estimate_lyapunov(mu, 200, 400, seed=7)
    r = walk.detect_proximal_dimension(prof)
    top = np.round(prof.lam[: r + 1], 4)
    print(f"{name:12s} d={mu.dim:2d}  r={r}  lambda_1..r+1 = {top}  sum = {prof.lam.sum():+.1e}")

# %% Limit points of the complex example are complex lines
mu = groups.preset("slc2-in-sl4")
L = walk.sample_limit_set(mu, 2, 200, 200, seed=1)
J = groups.complex_structure(2)
dev = max(walk.hausdorff_to_action(V, J) for V in L.points)
print(f"\nslc2-in-sl4: {len(L.points)} limit points, max d_H(V, iV) = {dev:.1e}")
