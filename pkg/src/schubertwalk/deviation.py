"""
Empirical checks of the quantitative estimates: non-concentration near
Schubert varieties, contraction towards V+, the deterministic contraction
lemma, large deviations and Holder regularity of the stationary law.

Every probabilistic check produces a DecayReport: hit counts of the
"bad" event per l (or n), Wilson intervals, and a least-squares fit of
-log p_hat against l over the points with at least 10 hits.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from math import comb
from pathlib import Path

import numpy as np
from scipy import stats

from . import products
from .exterior import Subspace, contraction_bound, gap
from .walk import (
    compute_lambda_split,
    estimate_lyapunov,
    estimate_pi_gamma,
    sample_limit_set,
    search_schubert,
)

MIN_HITS = 10
KAPPA_GRID = tuple(np.round(np.arange(0.05, 1.0001, 0.05), 2))
RHO_GRID = tuple(np.geomspace(1e-4, 0.1, 13))


@dataclass(frozen=True)
class DeviationConfig:
    omega: float
    n: int
    l_values: tuple
    trials: int = 1000
    V: Subspace | None = None
    W: Subspace | None = None
    horizons: tuple = ()
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if self.trials < 100:
            raise ValueError("trials must be >= 100")
        if any(l > self.n for l in self.l_values):
            raise ValueError("every l must satisfy l <= n")


@dataclass(frozen=True)
class DecayReport:
    l_values: np.ndarray
    hits: np.ndarray
    trials: int
    p_hat: np.ndarray
    wilson_lo: np.ndarray
    wilson_hi: np.ndarray
    fitted_c: float | None
    intercept: float | None
    r_squared: float | None
    event: str = ""
    notes: tuple = ()
    extra: dict = field(default_factory=dict)

    def rows(self):
        return [
            (int(l), int(h), self.trials, float(p), float(lo), float(hi))
            for l, h, p, lo, hi in zip(self.l_values, self.hits, self.p_hat, self.wilson_lo, self.wilson_hi)
        ]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["l_or_n", "hits", "trials", "p_hat", "wilson_lo", "wilson_hi"])
        for row in self.rows():
            w.writerow([row[0], row[1], row[2], repr(row[3]), repr(row[4]), repr(row[5])])
        return buf.getvalue()

    def summary(self):
        return {
            "event": self.event,
            "fitted_c": self.fitted_c,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "p_hat": self.p_hat.tolist(),
            "notes": list(self.notes),
            **self.extra,
        }


def wilson(hits, trials, level=0.95):
    ci = stats.binomtest(int(hits), int(trials)).proportion_ci(confidence_level=level, method="wilson")
    return ci.low, ci.high


def decay_report(l_values, hits, trials, event="", notes=(), extra=None):
    """Assemble a DecayReport and fit -log p_hat = c l + b on uncensored points."""
    l_values = np.asarray(l_values)
    hits = np.asarray(hits, dtype=int)
    p_hat = hits / trials
    ci = np.array([wilson(h, trials) for h in hits])
    ok = hits >= MIN_HITS
    c = b = r2 = None
    notes = list(notes)
    if ok.sum() >= 3 and np.ptp(p_hat[ok]) > 0:
        fit = stats.linregress(l_values[ok], -np.log(p_hat[ok]))
        c, b, r2 = float(fit.slope), float(fit.intercept), float(fit.rvalue**2)
    else:
        notes.append("fewer than 3 uncensored points; no fit")
    return DecayReport(
        l_values=l_values, hits=hits, trials=trials, p_hat=p_hat, wilson_lo=ci[:, 0], wilson_hi=ci[:, 1],
        fitted_c=c, intercept=b, r_squared=r2, event=event, notes=tuple(notes), extra=extra or {},
    )


def _gap_hits(values, omega, l_values):
    values = np.asarray(values)
    return [int(np.sum(values <= np.exp(-omega * l))) for l in l_values]


def verify_gap_nonconcentration(mu, cfg):
    """p_hat(l) = P(gap(gV, W) <= e^{-omega l}) at horizon n."""
    if cfg.V is None or cfg.W is None or cfg.V.dim + cfg.W.dim != mu.dim:
        raise ValueError("need V of dim r and W of dim d - r")
    vals = products.map_products(mu, cfg.n, cfg.trials, cfg.seed, lambda p, t: gap(p.image(cfg.V), cfg.W), cfg.threads)
    return decay_report(cfg.l_values, _gap_hits(vals, cfg.omega, cfg.l_values), cfg.trials, "gap(gV,W) <= exp(-omega l)",
                        extra={"min_gap": float(np.min(vals))})


def verify_vplus_nonconcentration(mu, cfg):
    """p_hat(l) = P(gap(V+_g, W) <= e^{-omega l}) at horizon n."""
    if cfg.W is None:
        raise ValueError("need W of dim d - r")
    r = mu.dim - cfg.W.dim
    vals = products.map_products(mu, cfg.n, cfg.trials, cfg.seed, lambda p, t: gap(p.v_plus(r), cfg.W), cfg.threads)
    return decay_report(cfg.l_values, _gap_hits(vals, cfg.omega, cfg.l_values), cfg.trials, "gap(V+_g,W) <= exp(-omega l)",
                        extra={"min_gap": float(np.min(vals))})


def verify_contraction(mu, cfg, profile=None):
    """
    p_hat(n) = P(d_H(gV, V+_g) <= e^{-(lam_1 - lam_{r+1} - omega) n}) for n
    in cfg.horizons, and the fit of the failure probability 1 - p_hat.
    """
    V = cfg.V
    r = V.dim
    horizons = tuple(cfg.horizons) or (cfg.n,)
    if profile is None:
        profile = estimate_lyapunov(mu, max(horizons), max(cfg.trials // 4, 100), cfg.seed + 1_000_003, cfg.threads)
    lam = profile.lam
    spread = float(lam[0] - lam[r])
    extra = {"lambda_hat": lam.tolist(), "spectral_gap": spread}
    if spread <= cfg.omega:
        n = len(horizons)
        rep = decay_report(horizons, [cfg.trials] * n, cfg.trials, "d_H(gV,V+_g) <= threshold",
                           notes=("no gap, vacuous",), extra=extra)
        return rep
    rate = spread - cfg.omega
    rows = products.map_products(mu, horizons, cfg.trials, cfg.seed, lambda p, t: p.dh_to_vplus(V, r), cfg.threads)
    dh = np.array(rows)
    good = [int(np.sum(dh[:, i] <= np.exp(-rate * n))) for i, n in enumerate(horizons)]
    fail = decay_report(horizons, [cfg.trials - g for g in good], cfg.trials)
    rep = decay_report(horizons, good, cfg.trials, "d_H(gV,V+_g) <= threshold", extra={
        **extra, "failure_fit_c": fail.fitted_c, "failure_r_squared": fail.r_squared,
    })
    return rep


# --- deterministic lemma -------------------------------------------------------

@dataclass(frozen=True)
class ContractionLemmaReport:
    lhs: float
    rhs: float
    holds: bool


def check_contraction_lemma(g, r, V, slack=1e-6):
    """d_H(gV, V+_g) <= r s_1^(r-1) s_(r+1) / ||(^r g) v||, both sides returned."""
    lhs, rhs = contraction_bound(g, r, V)
    return ContractionLemmaReport(lhs=lhs, rhs=rhs, holds=bool(lhs <= rhs * (1 + slack) + 1e-15))


# --- adversarial targets -----------------------------------------------------

def adversarial_pair(mu, r, n=120, trials=400, budget=32, seed=0, threads=1):
    """
    Worst-case (V, W): W from the Schubert search on the limit set of mu,
    V from the same search on the limit set of the transposed law (V bad
    means V close to meeting V-_g, whose complement is V+ of g^T).
    """
    rng = np.random.default_rng(seed)
    L = sample_limit_set(mu, r, n, trials, seed, threads)
    _, X = search_schubert(L.frames(), budget, rng)
    Lt = sample_limit_set(mu.transpose(), r, n, trials, seed + 1, threads)
    _, Y = search_schubert(Lt.frames(), budget, rng)
    return Subspace(Y), Subspace(X).complement()


# --- large deviations ------------------------------------------------------

def lambda_plus_measure(mu, r, n=200, trials=None, seed=0, threads=1):
    """The exterior-power walk restricted to the estimated Lambda_plus."""
    D = comb(mu.dim, r)
    pis = estimate_pi_gamma(mu, r, n, trials or max(3 * D, 200), seed, threads)
    split = compute_lambda_split(pis, r, mu)
    return split.block_measure(mu, "plus"), split


def verify_large_deviation_suite(mu, cfg, plus_measure=None):
    """
    (i) max_k |(1/n) log s_k(g) - lam_k| >= omega, against n;
    (ii) |(1/n) log ||gx||/||x|| - lam_1| >= omega, against n;
    (iii) |f(gx)| <= e^{-omega l} ||gx|| ||f||, against l at horizon n, on
    mu itself when proximal and on ``plus_measure`` otherwise.
    """
    horizons = tuple(cfg.horizons) or (cfg.n,)
    rng = np.random.default_rng(cfg.seed)
    reference = estimate_lyapunov(mu, 2 * max(horizons), max(cfg.trials // 4, 100), cfg.seed + 7_000_001, cfg.threads)
    lam = reference.lam
    d = mu.dim
    x = rng.standard_normal(d)
    x /= np.linalg.norm(x)

    def per(p, t):
        ls = p.log_sigma() / p.n
        return float(np.max(np.abs(ls - lam))), abs(p.log_norm(x) / p.n - lam[0])

    rows = np.array(products.map_products(mu, horizons, cfg.trials, cfg.seed, per, cfg.threads))
    hits_i = [int(np.sum(rows[:, k, 0] >= cfg.omega)) for k in range(len(horizons))]
    hits_ii = [int(np.sum(rows[:, k, 1] >= cfg.omega)) for k in range(len(horizons))]
    out = {
        "i": decay_report(horizons, hits_i, cfg.trials, "max_k |log s_k/n - lam_k| >= omega", extra={"lambda_ref": lam.tolist()}),
        "ii": decay_report(horizons, hits_ii, cfg.trials, "|log||gx||/n - lam_1| >= omega"),
    }
    target = mu if lam[0] - lam[1] > 0.1 else plus_measure
    if target is None:
        out["iii"] = None
        out["notice"] = "Lambda_plus unavailable; (iii) skipped"
        return out
    D = target.dim
    v = rng.standard_normal(D)
    v /= np.linalg.norm(v)
    f = rng.standard_normal(D)
    f /= np.linalg.norm(f)

    def coeff(p, t):
        M, _ = p.matrix()  # the scale cancels in |f(gv)| / ||gv||
        gv = M @ v
        return abs(f @ gv) / np.linalg.norm(gv)

    vals = products.map_products(target, cfg.n, cfg.trials, cfg.seed + 1, coeff, cfg.threads)
    out["iii"] = decay_report(cfg.l_values, _gap_hits(vals, cfg.omega, cfg.l_values), cfg.trials,
                              "|f(gx)| <= exp(-omega l) ||gx|| ||f||", extra={"representation": target.label})
    return out


# --- Holder regularity --------------------------------------------------------

@dataclass(frozen=True)
class HolderReport:
    kappa_hat: float
    moment_values: list
    cdf: np.ndarray
    cdf_upper: np.ndarray
    rho_grid: np.ndarray

    def summary(self):
        return {"kappa_hat": self.kappa_hat, "moment_values": self.moment_values, "rho_grid": self.rho_grid.tolist()}


def verify_holder_regularity(points, W_probes, rho_grid=RHO_GRID, kappa_grid=KAPPA_GRID, min_samples=2000):
    """
    Largest kappa on the grid with Wilson-upper CDF of gap(., W) below
    rho^kappa for every probe W and every rho; plus the empirical moment
    mean gap^{-kappa_hat} per probe.
    """
    T = len(points)
    if T < min_samples:
        raise ValueError(f"need at least {min_samples} stationary samples, got {T}")
    rho = np.asarray(rho_grid, dtype=float)
    if rho.min() < 1e-4 or rho.max() > 0.5:
        raise ValueError("rho grid must lie in [1e-4, 0.5]")
    gaps = np.array([[gap(V, W) for V in points] for W in W_probes])
    hits = (gaps[:, :, None] <= rho[None, None, :]).sum(axis=1)
    cdf = hits / T
    upper = np.array([[wilson(h, T)[1] for h in row] for row in hits])
    kappa_hat = 0.0
    for k in kappa_grid:
        if np.all(upper <= rho[None, :] ** k):
            kappa_hat = float(k)
    with np.errstate(divide="ignore"):
        moments = [float(np.mean(g ** (-kappa_hat))) for g in gaps]
    return HolderReport(kappa_hat=kappa_hat, moment_values=moments, cdf=cdf, cdf_upper=upper, rho_grid=rho)


def write_outputs(report, stem, out_dir):
    """CSV rows and JSON summary for a DecayReport."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{stem}.csv").write_text(report.to_csv())
    (out / f"{stem}.json").write_text(json.dumps(report.summary(), indent=2, sort_keys=True))
