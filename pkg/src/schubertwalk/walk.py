"""
Monte Carlo side of the theory: Lyapunov spectra, proximal dimension,
limit sets, the Schubert condition (S), minimal-rank limit operators and
the invariant split of the r-th exterior power.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, log

import numpy as np
from scipy import optimize
from scipy.stats import ks_2samp

from . import products
from .exterior import Subspace, exterior_power, gap, hausdorff, plucker
from .groups import make_measure

DEGENERACY_RATIO = 1e3
S_THRESHOLD = 0.05
EXACT_ZERO = 1e-12


class InconclusiveError(RuntimeError):
    """Raised instead of guessing when the data do not support an answer."""


# --- Lyapunov spectrum ---------------------------------------------------------

@dataclass(frozen=True)
class SpectralProfile:
    lam: np.ndarray
    stderr: np.ndarray
    n: int
    trials: int

    @property
    def stderr_total(self):
        """Standard error attached to sum(lam): root-sum-square of the entries."""
        return float(np.sqrt(np.sum(self.stderr**2)))

    def to_json(self):
        return {"lambda": self.lam.tolist(), "stderr": self.stderr.tolist(), "n": self.n, "trials": self.trials}


def estimate_lyapunov(mu, n, trials, seed, threads=1):
    """Mean over independent products of (1/n) log sigma_k."""
    if n < 1 or trials < 2:
        raise ValueError("need n >= 1 and trials >= 2")
    ls = np.array(products.map_products(mu, n, trials, seed, lambda p, t: p.log_sigma(), threads)) / n
    dev = ls - ls[0]  # shifted moments: exact when every trial agrees
    lam = ls[0] + dev.mean(axis=0)
    return SpectralProfile(lam=lam, stderr=dev.std(axis=0, ddof=1) / np.sqrt(trials), n=n, trials=trials)


def detect_proximal_dimension(profile, equal_tol=0.05, gap_min=0.1):
    """
    Largest r with lam_1 - lam_r <= equal_tol and lam_r - lam_{r+1} >=
    gap_min.  Raises InconclusiveError when no r qualifies.
    """
    lam = np.asarray(profile.lam if isinstance(profile, SpectralProfile) else profile)
    best = None
    for r in range(1, len(lam)):
        if lam[0] - lam[r - 1] <= equal_tol and lam[r - 1] - lam[r] >= gap_min:
            best = r
    if best is None:
        raise InconclusiveError(f"inconclusive spectrum {np.round(lam, 4).tolist()}")
    return best


# --- limit set -------------------------------------------------------------

@dataclass(frozen=True)
class LimitSetSample:
    r: int
    points: list
    horizons: list
    degenerate_excluded: int

    def frames(self):
        return np.array([p.frame for p in self.points])


def _keep(p, r):
    ls = p.log_sigma()
    return ls[r - 1] - ls[r] > log(DEGENERACY_RATIO)


def _collect(mu, r, n, trials, seed, fn, threads):
    if not 1 <= r < mu.dim:
        raise ValueError("need 1 <= r < d")
    out = products.map_products(mu, n, trials, seed, lambda p, t: fn(p) if _keep(p, r) else None, threads)
    kept = [x for x in out if x is not None]
    excluded = len(out) - len(kept)
    if excluded > 0.5 * len(out):
        raise InconclusiveError("spectrum gap too small at this horizon")
    return kept, excluded


def sample_limit_set(mu, r, n, trials, seed, threads=1):
    """V+ of independent products of length n (nearly degenerate ones dropped)."""
    pts, excluded = _collect(mu, r, n, trials, seed, lambda p: p.v_plus(r), threads)
    return LimitSetSample(r=r, points=pts, horizons=[n] * len(pts), degenerate_excluded=excluded)


def nearest_limit_distances(limits, atoms):
    """For each (atom a, point V): min over the other points of d_H(aV, V')."""
    P = limits.frames()
    out = []
    for a in atoms:
        for i, V in enumerate(limits.points):
            aV = V.image(a)
            # d_H of equal-dimensional subspaces via residual singular values
            res = aV.frame[None] - P @ (np.swapaxes(P, 1, 2) @ aV.frame[None])
            dh = np.linalg.norm(res, ord=2, axis=(1, 2))
            dh[i] = np.inf
            out.append(dh.min())
    return np.array(out)


# --- property (S) ------------------------------------------------------------

@dataclass(frozen=True)
class PropertySReport:
    min_over_W_of_max_gap: float
    witness_W: Subspace
    verdict: str
    threshold: float
    starts: int

    def to_json(self):
        return {
            "min_over_W_of_max_gap": self.min_over_W_of_max_gap,
            "verdict": self.verdict,
            "threshold": self.threshold,
            "starts": self.starts,
            "witness_W": self.witness_W.frame.tolist(),
        }


def _max_gap(X, P):
    """max_i gap(V_i, X-perp) = max_i |det(X^T V_i)| for orthonormal X."""
    return float(np.max(np.abs(np.linalg.det(X.T[None] @ P))))


def _soft_objective(x, P, shape, p):
    """(1/p) log mean_i gap_i^p and its gradient, for unnormalized X."""
    X = x.reshape(shape)
    A = X.T[None] @ P
    sign, logdet = np.linalg.slogdet(A)
    G = X.T @ X
    lg = logdet - 0.5 * np.linalg.slogdet(G)[1]
    m = np.max(lg)
    if not np.isfinite(m):
        return -1e3, np.zeros_like(x)
    w = np.exp(p * (lg - m))
    J = m + np.log(np.mean(w)) / p
    w /= w.sum()
    try:
        Ainv = np.linalg.inv(A[w > 1e-300])
    except np.linalg.LinAlgError:
        return J, np.zeros_like(x)
    grad = np.einsum("i,idk,ikj->dj", w[w > 1e-300], P[w > 1e-300], Ainv) - X @ np.linalg.inv(G)
    return J, grad.ravel()


def _orth(X):
    return np.linalg.qr(X)[0]


def search_schubert(P, budget, rng, steps=200, soft_power=16.0):
    """
    Adversarial minimization of f(X) = max_i |det(X^T V_i)| over r-frames X
    (X = W-perp).  Each start runs a smooth soft-max descent and then the
    multiplicative random-perturbation refinement on f itself, the step
    halving on every non-improvement.
    """
    N, d, r = P.shape
    best_val, best_X = np.inf, None
    for _ in range(budget):
        X = _orth(rng.standard_normal((d, r)))
        res = optimize.minimize(
            _soft_objective, X.ravel(), args=(P, (d, r), soft_power), jac=True,
            method="L-BFGS-B", options={"maxiter": 300},
        )
        X = _orth(res.x.reshape(d, r))
        val = _max_gap(X, P)
        step = 0.1
        for _ in range(steps):
            if val == 0.0:
                break
            T = rng.standard_normal((d, r))
            T -= X @ (X.T @ T)
            cand = _orth(X + step * T / np.linalg.norm(T))
            cv = _max_gap(cand, P)
            if cv < val:
                X, val = cand, cv
            else:
                step *= 0.5
                if step < 1e-14:
                    break
        if val < 1e-2:
            X, val = _polish(X, P, val)
        if val < best_val:
            best_val, best_X = val, X
        if best_val < EXACT_ZERO:
            break  # f >= 0, nothing left to find
    return best_val, best_X


def _polish(X, P, val):
    """Least-squares push of all det(X^T V_i) to zero (exact witnesses)."""
    d, r = X.shape

    def resid(x):
        Y = _orth(x.reshape(d, r))
        return np.linalg.det(Y.T[None] @ P)

    res = optimize.least_squares(resid, X.ravel(), xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=50)
    Y = _orth(res.x.reshape(d, r))
    v = _max_gap(Y, P)
    return (Y, v) if v < val else (X, val)


def test_property_S(limits, search_budget=64, seed=0, threshold=S_THRESHOLD, steps=200):
    """
    Look for a (d-r)-plane W meeting every sampled limit point.  Verdict
    "consistent with (S)" when the best min-max gap exceeds ``threshold``.
    """
    if search_budget < 10:
        raise ValueError("search budget must allow at least 10 starts")
    if len(limits.points) < 200:
        raise ValueError("property (S) search needs at least 200 limit points")
    P = limits.frames()
    d = P.shape[1]
    rng = np.random.default_rng(seed)
    val, X = search_schubert(P, search_budget, rng, steps=steps)
    W = Subspace(X).complement() if limits.r < d else None
    verdict = "consistent with (S)" if val > threshold else "violation witness"
    return PropertySReport(
        min_over_W_of_max_gap=val, witness_W=W, verdict=verdict, threshold=threshold, starts=search_budget
    )


test_property_S.__test__ = False  # not a pytest test


# --- minimal-rank limit operators and the split ---------------------------

@dataclass(frozen=True)
class PiGammaSample:
    r: int
    operators: list
    images: list = field(repr=False)
    rowspaces: list = field(repr=False)


def _truncate(p, r):
    left, right = p._frames()
    ls = p.log_sigma()
    sig = np.exp(ls[:r] - ls[0])
    op = (left[:, :r] * sig) @ right[:r]
    return op, Subspace(left[:, :r].copy()), Subspace(right[:r].T.copy())


def estimate_pi_gamma(mu, r, n, trials, seed, threads=1):
    """Normalized products g / sigma_1(g) truncated to rank r."""
    out, _ = _collect(mu, r, n, trials, seed, lambda p: _truncate(p, r), threads)
    return PiGammaSample(
        r=r, operators=[o for o, _, _ in out], images=[i for _, i, _ in out], rowspaces=[k for _, _, k in out]
    )


@dataclass(frozen=True)
class LambdaSplit:
    D: int
    plus_frame: np.ndarray
    zero_frame: np.ndarray
    residual: float
    flags: tuple = ()

    @property
    def dims(self):
        return self.plus_frame.shape[1], self.zero_frame.shape[1]

    def block_measure(self, mu, which):
        """Law of the exterior-power action restricted to one block."""
        blocks = [b[0] if which == "plus" else b[1] for b in self.blocks(mu)]
        return make_measure(blocks, mu.weights, label=f"{mu.label}-{which}", check_integer=False)

    def basis(self):
        return np.hstack([self.plus_frame, self.zero_frame])

    def blocks(self, mu):
        B = self.basis()
        k = self.plus_frame.shape[1]
        r = _rank_from_D(mu.dim, self.D)
        out = []
        for a in mu.atoms:
            C = np.linalg.solve(B, exterior_power(a, r) @ B)
            out.append((C[:k, :k], C[k:, k:], C[:k, k:], C[k:, :k]))
        return out


def _rank_from_D(d, D):
    return next(r for r in range(1, d + 1) if comb(d, r) == D)


def _numerical_rank(M, tol):
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > tol * s[0])), s


def compute_lambda_split(pis, r, mu=None, tol=1e-6, resamples=5, seed=0):
    """
    Lambda_plus = span of the Plucker lines of im(pi); Lambda_0 = common
    kernel of the rank-one maps wedge^r pi, i.e. the orthogonal complement
    of the Plucker lines of the row spaces.  Ranks are cross-checked on
    random half-samples.
    """
    P_im = np.array([plucker(V).coords for V in pis.images])
    P_row = np.array([plucker(V).coords for V in pis.rowspaces])
    D = P_im.shape[1]
    k_plus, _ = _numerical_rank(P_im, tol)
    k_row, _ = _numerical_rank(P_row, tol)
    rng = np.random.default_rng(seed)
    N = len(P_im)
    for _ in range(resamples):
        sel = rng.choice(N, size=max(N // 2, 1), replace=False)
        if (_numerical_rank(P_im[sel], tol)[0], _numerical_rank(P_row[sel], tol)[0]) != (k_plus, k_row):
            raise InconclusiveError("split dimensions unstable across resamples")
    plus = np.linalg.svd(P_im.T, full_matrices=False)[0][:, :k_plus]
    u = np.linalg.svd(P_row.T, full_matrices=True)[0]
    zero = u[:, k_row:]
    flags = []
    # the sum of the limit planes is a Gamma-invariant subspace of R^d
    span = np.hstack([V.frame for V in pis.images])
    if _numerical_rank(span, tol)[0] < span.shape[0]:
        flags.append("reducible-suspect")
    if k_plus + zero.shape[1] != D:
        flags.append("dimension-mismatch")
    if np.linalg.matrix_rank(np.hstack([plus, zero]), tol=1e-8) < plus.shape[1] + zero.shape[1]:
        flags.append("not-direct")
    split = LambdaSplit(D=D, plus_frame=plus, zero_frame=zero, residual=0.0, flags=tuple(flags))
    if mu is not None and "not-direct" not in flags and "dimension-mismatch" not in flags:
        defect = 0.0
        for a_pp, a_00, a_p0, a_0p in split.blocks(mu):
            total = np.linalg.norm(np.block([[a_pp, a_p0], [a_0p, a_00]]), 2)
            cross = [np.linalg.norm(c, 2) if c.size else 0.0 for c in (a_p0, a_0p)]
            defect = max(defect, *(c / total for c in cross))
        if defect > 1e-2:
            flags.append("not-invariant")
        split = LambdaSplit(D=D, plus_frame=plus, zero_frame=zero, residual=float(defect), flags=tuple(flags))
    return split


# --- stationary measure ------------------------------------------------------

def stationary_sample(mu, r, burn_in_n, trials, start, seed, threads=1):
    """Points g . start for independent products g of length burn_in_n."""
    if start.dim != r:
        raise ValueError("start must have dimension r")
    return products.map_products(mu, burn_in_n, trials, seed, lambda p, t: p.image(start), threads)


def gap_profile(points, W):
    return np.array([gap(V, W) for V in points])


def ks_two_start(mu, r, burn_in_n, trials, starts, probes, seed, threads=1):
    """Two-sample KS distance of gap(., W0) between two starting points."""
    a = stationary_sample(mu, r, burn_in_n, trials, starts[0], seed, threads)
    b = stationary_sample(mu, r, burn_in_n, trials, starts[1], seed + 1, threads)
    return [float(ks_2samp(gap_profile(a, W), gap_profile(b, W)).statistic) for W in probes]


def hausdorff_to_action(V, J):
    """d_H(V, J V); zero iff V is J-invariant."""
    return hausdorff(V, V.image(J))


def sample_product(mu, n, seed, trial=0):
    """
    The product g_n ... g_1 of one seeded walk as (M, log_scale) with
    g_n ... g_1 = exp(log_scale) * M.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    return products.product(mu, n, seed, trial).matrix()


def replay_indices(mu, n, seed, trial=0):
    """Atom indices drawn by ``sample_product`` (g_1 first)."""
    return products.draw_indices(mu, n, products.trial_rng(seed, trial))
