"""
Property (S): no Schubert variety contains the limit set
========================================================

For each example we sample the limit set and search for a (d-r)-plane W
that meets every sampled limit point.  A clear positive min-max gap means
the search failed (consistent with (S)); a value at rounding level is a
witness that (S) fails.
"""

from schubertwalk import groups, walk

for name, r in [("slc2-in-sl4", 2), ("slh2-in-sl8", 4), ("so1-7-ext2", 6)]:
    mu = groups.preset(name)
    L = walk.sample_limit_set(mu, r, 200, 500, seed=13)
    rep = walk.test_property_S(L, search_budget=32, seed=0)
    print(f"{name:12s} min_W max_V gap(V, W) = {rep.min_over_W_of_max_gap:.3g}  -> {rep.verdict}")
