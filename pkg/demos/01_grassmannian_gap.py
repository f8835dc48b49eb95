"""
The gap function and the Hausdorff metric on Grassmannians
===========================================================

gap(V, W) measures how transverse two subspaces are: 1 for orthogonal
complements, 0 as soon as they intersect.  d_H is the sine of the largest
principal angle.
"""

import numpy as np

from schubertwalk.exterior import Subspace, exterior_power, gap, hausdorff, line, plucker, wedge

# %% Closed forms in the plane
e1, e2 = Subspace.coordinate(2, [0]), Subspace.coordinate(2, [1])
diag = line([1, 1])
print("gap(e1, e2)       =", gap(e1, e2))
print("gap(e1, e1)       =", gap(e1, e1))
print("gap(diag, e2)     =", gap(diag, e2), " 1/sqrt2 =", 1 / np.sqrt(2))
print("d_H(e1, diag)     =", hausdorff(e1, diag))

# %% The same numbers through Plucker vectors in R^5
rng = np.random.default_rng(0)
V, W = Subspace.random(5, 2, rng), Subspace.random(5, 3, rng)
v, w = plucker(V).coords, plucker(W).coords
print("\ngap(V, W)         =", gap(V, W))
print("||v ^ w||         =", np.linalg.norm(wedge(v, 2, w, 3, 5)))

# %% Exterior powers are functorial
A, B = rng.standard_normal((2, 5, 5))
for k in range(1, 6):
    err = np.linalg.norm(exterior_power(A @ B, k) - exterior_power(A, k) @ exterior_power(B, k))
    print(f"k={k}: ||^k(AB) - ^kA ^kB|| = {err:.2e}")
