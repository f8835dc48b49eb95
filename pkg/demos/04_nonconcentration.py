"""
Non-concentration near Schubert varieties
=========================================

Under (S) the probability that gap(gV, W) is exponentially small decays
exponentially, even for the worst (V, W) the search can find.  Without (S)
(the SO(1,7) example with its witness W) the probability stays large.
"""

import numpy as np

from schubertwalk import deviation, groups

l_values = tuple(range(20, 61, 5))
for name, r in [("slc2-in-sl4", 2), ("so1-7-ext2", 6)]:
    mu = groups.preset(name)
    V, W = deviation.adversarial_pair(mu, r, seed=1)
    cfg = deviation.DeviationConfig(omega=0.2, n=120, l_values=l_values, trials=3000, V=V, W=W, seed=2)
    rep = deviation.verify_gap_nonconcentration(mu, cfg)
    print(f"{name}: p_hat(l) for l = {l_values}: {np.round(rep.p_hat, 4)}  fitted c = {rep.fitted_c}")
