"""
Random walks x -> g x on the torus T^d = R^d / Z^d for integer measures.

Two arithmetic modes:

* exact: x = p / q with integer p, reduced; g p mod q is exact and the
  law nu_n = mu^{*n} * delta_x lives on the finite set (1/q) Z^d / Z^d,
  with Fraction masses;
* fixed point: x = v / 2^B with integer v and an error bound eps on the
  distance to the point being tracked.  Integer steps are exact, so eps
  only accumulates the propagated initial error; the ledger uses the
  over-approximation eps <- ||g||_inf * d * eps + 2^-B.

Distances on the torus are sup-norm distances.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from math import gcd, isqrt
from pathlib import Path

import numpy as np

from . import products
from .exterior import Subspace, gap_multi

STATE_CAP = 10**6
SCAN_CAP = 10**7
DEFAULT_BITS = 512
PRECISION_LIMIT = Fraction(1, 2**32)


class PrecisionExhausted(ArithmeticError):
    pass


# --- points ------------------------------------------------------------------

@dataclass(frozen=True)
class TorusPoint:
    mode: str
    coords: tuple          # numerators p (exact) or fixed-point integers v
    q: int                 # denominator (exact) or 2^B (fixed)
    eps: Fraction = Fraction(0)

    @property
    def dim(self):
        return len(self.coords)

    @property
    def bits(self):
        return self.q.bit_length() - 1 if self.mode == "fixed" else None

    @property
    def exhausted(self):
        return self.mode == "fixed" and self.eps >= PRECISION_LIMIT

    def as_float(self):
        return np.array([float(Fraction(c, self.q)) for c in self.coords])

    def fractions(self):
        return tuple(Fraction(c, self.q) for c in self.coords)


def exact_point(values):
    """Exact point from rationals (Fractions, ints or 'a/b' strings), reduced mod 1."""
    fr = [Fraction(v) for v in values]
    q = 1
    for f in fr:
        q = q * f.denominator // gcd(q, f.denominator)
    p = [int(f * q) % q for f in fr]
    g = gcd(q, *p) if p else q
    return TorusPoint("exact", tuple(x // g for x in p), q // g)


def parse_point(text):
    """'1/3,1/3' -> exact point."""
    return exact_point([s.strip() for s in str(text).split(",")])


def fixed_point(values, bits=DEFAULT_BITS):
    """Fixed-point point from exact rationals/ints: v = floor(frac(x) 2^B)."""
    scale = 1 << bits
    coords = []
    for v in values:
        f = Fraction(v) % 1
        coords.append(f.numerator * scale // f.denominator)
    return TorusPoint("fixed", tuple(coords), scale, Fraction(1, scale))


def sqrt_surrogate(radicands, bits=DEFAULT_BITS):
    """(frac(sqrt(m)) for m in radicands) truncated to B bits: a B-bit rational stand-in."""
    scale = 1 << bits
    coords = tuple(isqrt(m * scale * scale) % scale for m in radicands)
    return TorusPoint("fixed", coords, scale, Fraction(1, scale))


def _row_norm(g):
    return max(sum(abs(int(x)) for x in row) for row in g)


def _int_matrix(g):
    g = np.asarray(g)
    if not np.all(g == np.round(g)):
        raise ValueError("torus steps need integer matrices")
    return [[int(x) for x in row] for row in g]


def step(x, g):
    """g x mod 1."""
    gi = _int_matrix(g)
    y = tuple(sum(a * c for a, c in zip(row, x.coords)) % x.q for row in gi)
    if x.mode == "exact":
        return TorusPoint("exact", y, x.q)
    if x.exhausted:
        raise PrecisionExhausted(f"error bound {float(x.eps):.3g} exceeds 2^-32")
    eps = _row_norm(gi) * x.dim * x.eps + Fraction(1, x.q)
    return TorusPoint("fixed", y, x.q, eps)


def torus_distance(x, y):
    """Sup-norm distance on T^d between two points (as Fractions)."""
    out = Fraction(0)
    for a, b in zip(x.fractions(), y.fractions()):
        t = (a - b) % 1
        out = max(out, min(t, 1 - t))
    return out


# --- distributions -----------------------------------------------------------

@dataclass(frozen=True)
class TorusDistribution:
    mode: str                 # "exact-finite" or "empirical"
    n: int
    q: int
    support: tuple = ()       # exact: tuple of numerator tuples
    masses: tuple = ()        # exact: Fractions
    points: tuple = ()        # empirical: TorusPoints
    eps: Fraction = Fraction(0)

    @property
    def trials(self):
        return len(self.points)


def _atoms_and_weights(mu):
    if not mu.integer_flag or mu.exact_weights is None:
        raise ValueError("torus walks need an integer measure with rational weights")
    return [_int_matrix(a) for a in mu.int_atoms], mu.exact_weights


def exact_distributions(mu, x0, horizons):
    """Exact nu_n for every n in horizons (one pushforward pass)."""
    if x0.mode != "exact":
        raise ValueError("exact pushforward needs an exact rational start")
    if x0.q ** x0.dim > STATE_CAP:
        raise ValueError(f"state space q^d = {x0.q ** x0.dim} exceeds {STATE_CAP}; use empirical mode")
    atoms, weights = _atoms_and_weights(mu)
    q = x0.q
    dist = {x0.coords: Fraction(1)}
    out = {}
    hs = sorted(set(int(h) for h in horizons))
    for n in range(hs[-1] + 1):
        if n in hs:
            keys = sorted(dist)
            out[n] = TorusDistribution("exact-finite", n, q, tuple(keys), tuple(dist[k] for k in keys))
        if n == hs[-1]:
            break
        new = {}
        for p, m in dist.items():
            for g, w in zip(atoms, weights):
                y = tuple(sum(a * c for a, c in zip(row, p)) % q for row in g)
                new[y] = new.get(y, 0) + m * w
        dist = new
    return out


def exact_distribution(mu, x0, n):
    """nu_n = mu^{*n} * delta_{x0} by exact pushforward on the q-torsion points."""
    return exact_distributions(mu, x0, [n])[int(n)]


def empirical_distributions(mu, x0, horizons, trials, seed):
    """Independent trajectories with per-trial streams, snapshot at each horizon."""
    atoms, _ = _atoms_and_weights(mu)
    hs = sorted(set(int(h) for h in horizons))
    G = [np.array(g, dtype=object) for g in atoms]
    idx = np.array([products.draw_indices(mu, hs[-1], products.trial_rng(seed, t)) for t in range(trials)])
    idx = idx.reshape(trials, hs[-1])
    X = np.array([list(x0.coords)] * trials, dtype=object)
    q = x0.q
    eps = x0.eps
    growth = max(_row_norm(g) for g in atoms) * x0.dim
    out = {}
    for n in range(hs[-1] + 1):
        if n in hs:
            pts = tuple(TorusPoint(x0.mode, tuple(int(c) for c in row), q, eps) for row in X)
            out[n] = TorusDistribution("empirical", n, q, points=pts, eps=eps)
        if n == hs[-1]:
            break
        if x0.mode == "fixed":
            if eps >= PRECISION_LIMIT:
                raise PrecisionExhausted(f"precision exhausted at step {n}")
            eps = growth * eps + Fraction(1, q)
        for k, g in enumerate(G):
            sel = idx[:, n] == k
            if np.any(sel):
                X[sel] = (X[sel] @ g.T) % q
    return out


def empirical_distribution(mu, x0, n, trials, seed):
    return empirical_distributions(mu, x0, [n], trials, seed)[int(n)]


# --- Fourier coefficients -----------------------------------------------------

@dataclass(frozen=True)
class FourierReport:
    a: tuple
    value: complex
    stderr: float
    exact: bool

    @property
    def abs(self):
        return abs(self.value)


def _residue_masses(dist, a):
    acc = {}
    for p, m in zip(dist.support, dist.masses):
        k = sum(int(x) * int(y) for x, y in zip(a, p)) % dist.q
        acc[k] = acc.get(k, 0) + m
    return acc


def fourier(dist, a):
    """nu_hat(a) = E exp(2 pi i <a, x>)."""
    a = tuple(int(x) for x in a)
    if dist.mode == "exact-finite":
        acc = _residue_masses(dist, a)
        if set(acc) == {0}:
            return FourierReport(a, complex(float(acc[0])), 0.0, True)
        val = sum(float(m) * np.exp(2j * np.pi * k / dist.q) for k, m in acc.items())
        return FourierReport(a, complex(val), 0.0, True)
    X = np.array([p.as_float() for p in dist.points])
    z = np.exp(2j * np.pi * (X @ np.array(a, dtype=float)))
    T = len(z)
    return FourierReport(a, complex(z.mean()), 1.0 / np.sqrt(T), False)


def fourier_is_one(dist, a):
    """Exact test nu_hat(a) == 1 (every support point annihilated by a)."""
    return set(_residue_masses(dist, a)) == {0}


def frequency_box(d, N):
    size = (2 * N + 1) ** d
    if size > SCAN_CAP:
        raise ValueError(f"scan of {size} frequencies exceeds {SCAN_CAP}")
    return np.array(list(itertools.product(range(-N, N + 1), repeat=d)), dtype=np.int64)


def fourier_box(dist, N, chunk=4096):
    """|nu_hat(a)| (complex values) for every a with ||a||_inf <= N."""
    A = frequency_box(len(dist.support[0]) if dist.mode == "exact-finite" else dist.points[0].dim, N)
    if dist.mode == "exact-finite":
        X = np.array(dist.support, dtype=float) / dist.q
        w = np.array([float(m) for m in dist.masses])
    else:
        X = np.array([p.as_float() for p in dist.points])
        w = np.full(len(X), 1.0 / len(X))
    vals = np.empty(len(A), dtype=complex)
    for s in range(0, len(A), chunk):
        vals[s : s + chunk] = np.exp(2j * np.pi * (A[s : s + chunk] @ X.T)) @ w
    return A, vals


def large_coefficient_set(dist, t, N):
    """A_{t,n} intersected with the box ||a||_inf <= N (exact check when |value| = 1)."""
    if dist.mode == "empirical" and dist.trials < 100 / t**2:
        raise ValueError(f"need at least {int(np.ceil(100 / t**2))} trials for threshold t={t}")
    A, vals = fourier_box(dist, N)
    keep = np.abs(vals) >= t
    if dist.mode == "exact-finite":
        # values equal to one are decided exactly, not by rounding
        for i in np.flatnonzero(np.abs(np.abs(vals) - 1) < 1e-9):
            keep[i] = fourier_is_one(dist, A[i]) or abs(vals[i]) >= t
    return [tuple(int(x) for x in a) for a in A[keep]]


# --- covering numbers ----------------------------------------------------------

def covering_number(points, M, ord=2):
    """
    (greedy_cover, separated_lower) for covering by radius-M balls: greedy
    balls centred at data points bound N(A, M) above; a greedy 2M-separated
    subset bounds it below (one ball cannot hold two such points).
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if len(X) == 0:
        return 0, 0
    D = np.linalg.norm(X[:, None, :] - X[None, :, :], ord=ord, axis=2) if ord != 2 else \
        np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(-1))
    uncovered = np.ones(len(X), dtype=bool)
    cover = 0
    while uncovered.any():
        i = np.argmax(uncovered)
        uncovered &= D[i] > M
        cover += 1
    chosen = []
    for i in range(len(X)):
        if all(D[i, j] > 2 * M for j in chosen):
            chosen.append(i)
    return cover, len(chosen)


# --- dichotomy ------------------------------------------------------------------

@dataclass(frozen=True)
class DichotomyReport:
    horizons: list
    mode: str
    max_abs: list                  # max over 0 < ||a|| <= N of |nu_hat_n(a)|
    A_tn_sizes: list
    persistent_frequencies: list
    decay_threshold_n: int | None
    covering_numbers: list
    rows: list                     # (n, a..., re, im, abs, stderr)
    notes: tuple = ()

    def summary(self):
        return {
            "mode": self.mode,
            "horizons": self.horizons,
            "max_abs": self.max_abs,
            "A_tn_sizes": self.A_tn_sizes,
            "persistent_frequencies": self.persistent_frequencies,
            "decay_threshold_n": self.decay_threshold_n,
            "covering_numbers": self.covering_numbers,
            "notes": list(self.notes),
        }

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = len(self.rows[0]) - 5 if self.rows else 0
        w.writerow(["n"] + [f"a{i + 1}" for i in range(d)] + ["re", "im", "abs", "stderr"])
        for row in self.rows:
            w.writerow([row[0], *row[1 : 1 + d], *(repr(float(v)) for v in row[1 + d :])])
        return buf.getvalue()


def dichotomy_experiment(mu, x0, t, horizons, N, trials=20000, seed=0, M=2.0):
    """
    Large Fourier coefficients along a horizon schedule: persistence of the
    q Z^d coefficients for a rational start, decay of max |nu_hat_n| for a
    fixed-point (irrational surrogate) start.
    """
    hs = sorted(int(h) for h in horizons)
    notes = []
    if x0.mode == "exact":
        dists = exact_distributions(mu, x0, hs)
        mode = "exact-finite"
    else:
        notes.append(f"start is a {x0.bits}-bit rational surrogate of an irrational point")
        try:
            dists = empirical_distributions(mu, x0, hs, trials, seed)
        except PrecisionExhausted as exc:
            notes.append(f"partial report: {exc}")
            dists = {}
            for h in hs:
                try:
                    dists[h] = empirical_distributions(mu, x0, [h], trials, seed)[h]
                except PrecisionExhausted:
                    break
        mode = "empirical"
    done = [h for h in hs if h in dists]
    rows, max_abs, sizes, covers = [], [], [], []
    persistent = None
    for n in done:
        dist = dists[n]
        A, vals = fourier_box(dist, N)
        stderr = 0.0 if mode == "exact-finite" else 1.0 / np.sqrt(dist.trials)
        nz = np.any(A != 0, axis=1)
        max_abs.append(float(np.max(np.abs(vals[nz]))) if nz.any() else 0.0)
        big = A[np.abs(vals) >= t]
        sizes.append(int(len(big)))
        covers.append(list(covering_number(big, M)) if len(big) else [0, 0])
        for a, v in zip(A, vals):
            rows.append((n, *(int(x) for x in a), v.real, v.imag, abs(v), stderr))
        if mode == "exact-finite":
            ones = {tuple(int(x) for x in a) for a in A[nz] if fourier_is_one(dist, a)}
            persistent = ones if persistent is None else persistent & ones
    decay_n = None
    if mode == "empirical":
        for i, n in enumerate(done):
            if all(m < t for m in max_abs[i:]):
                decay_n = n
                break
    return DichotomyReport(
        horizons=done, mode=mode, max_abs=max_abs, A_tn_sizes=sizes,
        persistent_frequencies=sorted([list(a) for a in persistent]) if persistent else [],
        decay_threshold_n=decay_n, covering_numbers=covers, rows=rows, notes=tuple(notes),
    )


# --- invertibility lemma ----------------------------------------------------

@dataclass(frozen=True)
class InvertibilityReport:
    rho: float
    C_ratio: float
    L_ratio: float
    v1: float
    v2: float
    v: float
    bound: float
    hypothesis_holds: bool
    det_h: float
    invertible: bool


def invertibility_lemma_check(gs, cs, r):
    """
    h = sum c_i g_i with rho = max s_{r+1}/s_r (g_i), C = max |c_i|/|c_j|,
    L = max s_1(g_i)/s_r(g_j), v1 = gap of the V+_{g_i}, v2 the same for
    the transposes; hypothesis rho < v^3 / (40 k^3 C L).
    """
    gs = [np.asarray(g, dtype=float) for g in gs]
    cs = [float(c) for c in cs]
    k = len(gs)
    d = gs[0].shape[0]
    if d != k * r:
        raise ValueError(f"need d = k r, got d={d}, k={k}, r={r}")
    if any(c == 0 for c in cs):
        raise ValueError("coefficients must be nonzero")
    svd = [np.linalg.svd(g) for g in gs]
    sig = [s for _, s, _ in svd]
    if any(s[-1] <= 1e-14 * s[0] for s in sig):
        raise ValueError("non-invertible g_i")
    rho = max(s[r] / s[r - 1] for s in sig)
    C = max(abs(a) / abs(b) for a in cs for b in cs)
    L = max(si[0] / sj[r - 1] for si in sig for sj in sig)
    v1 = gap_multi([Subspace(u[:, :r]) for u, _, _ in svd])
    v2 = gap_multi([Subspace(vt[:r].T) for _, _, vt in svd])
    v = min(v1, v2)
    bound = v**3 / (40 * k**3 * C * L)
    h = sum(c * g for c, g in zip(cs, gs))
    det_h = float(np.linalg.det(h))
    invertible = abs(det_h) > 1e-12 * np.linalg.norm(h, 2) ** d
    return InvertibilityReport(rho, C, L, v1, v2, v, bound, bool(rho < bound), det_h, bool(invertible))


def random_lemma_tuple(rng, k=2, r=2, log_rho=(-12.0, -1.0)):
    """Tuple (gs, cs) with a controlled gap s_{r+1}/s_r drawn log-uniformly."""
    d = k * r
    gs = []
    for _ in range(k):
        Ku = np.linalg.qr(rng.standard_normal((d, d)))[0]
        Kv = np.linalg.qr(rng.standard_normal((d, d)))[0]
        top = rng.uniform(1.0, 2.0, r)
        low = np.exp(rng.uniform(*log_rho)) * rng.uniform(0.5, 1.0, d - r)
        s = np.sort(np.concatenate([top, low]))[::-1] * np.exp(rng.normal())
        gs.append((Ku * s) @ Kv)
    cs = rng.uniform(0.5, 2.0, k) * rng.choice([-1.0, 1.0], k)
    return gs, cs


def invertibility_sweep(n_tuples, seed, k=2, r=2):
    rng = np.random.default_rng(seed)
    held = singular_held = singular_all = 0
    for _ in range(n_tuples):
        gs, cs = random_lemma_tuple(rng, k, r)
        rep = invertibility_lemma_check(gs, cs, r)
        singular_all += not rep.invertible
        if rep.hypothesis_holds:
            held += 1
            singular_held += not rep.invertible
    return {
        "tuples": n_tuples,
        "hypothesis_holds": held,
        "singular_given_hypothesis": singular_held,
        "singular_unfiltered": singular_all,
        "singular_rate_unfiltered": singular_all / n_tuples,
    }


def write_outputs(report, stem, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{stem}.csv").write_text(report.to_csv())
    (out / f"{stem}.json").write_text(json.dumps(report.summary(), indent=2, sort_keys=True))
