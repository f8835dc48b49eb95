"""
Fourier coefficients of torus walks
===================================

For a rational start p/q the coefficients at q Z^d stay equal to 1 forever;
for a generic start (here a 512-bit surrogate of (sqrt2, sqrt3) mod 1) all
non-zero coefficients in a box decay below any fixed threshold.
"""

from schubertwalk import groups, torus

mu = groups.preset("sl2z")

rat = torus.dichotomy_experiment(mu, torus.parse_point("1/3,1/3"), 0.5, range(0, 31, 5), N=5)
print("rational start 1/3,1/3")
print("  max |nu_hat_n(a)|:", [round(m, 3) for m in rat.max_abs])
print("  persistent frequencies:", rat.persistent_frequencies)

x0 = torus.sqrt_surrogate([2, 3], bits=512)
gen = torus.dichotomy_experiment(mu, x0, 0.3, list(range(0, 11)) + [20, 30], N=5, trials=5000, seed=0)
print("surrogate start (sqrt2, sqrt3)")
print("  max |nu_hat_n(a)|:", [round(m, 3) for m in gen.max_abs])
print("  below t = 0.3 from n =", gen.decay_threshold_n)
print("  covering numbers of A_{t,n}:", gen.covering_numbers)
