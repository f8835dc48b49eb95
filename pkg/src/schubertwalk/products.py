"""
Random matrix products in graded form.

A product P = g_n ... g_1 is carried as P = Q diag(exp(s)) U with Q
orthogonal, s the accumulated log-diagonal of the QR steps and U a
well-conditioned matrix of order one.  Singular values are recovered with
relative accuracy (one-sided Jacobi on the column-graded transpose), so
log sigma_d is as trustworthy as log sigma_1 even when the two are
hundreds of nats apart.

Trial t of a run with master seed S draws its atoms from the stream
SeedSequence(S, spawn_key=(t,)), so results do not depend on how trials
are split across threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.linalg import lapack

from .exterior import CartanFrame, Subspace

CHUNK = 128


def trial_rng(master_seed, trial):
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=(int(trial),)))


def draw_indices(mu, n, rng):
    if len(mu) == 1:
        return np.zeros(n, dtype=np.intp)
    return rng.choice(len(mu), size=n, p=mu.weights)


def _qr_step(Q, s, c, U, a):
    """
    Left-multiply the batch Q diag(e^(s+c)) U by the batch of matrices a.

    Columns are pre-pivoted by decreasing s before the QR step, so the
    triangular factor only meets ratios e^(s_j - s_i) <= 1 and U (no
    longer triangular) stays well conditioned.  The log-scales are summed
    with Neumaier compensation: s is the running sum, c its rounding error.
    """
    perm = np.argsort(-s, axis=1, kind="stable")
    s = np.take_along_axis(s, perm, axis=1)
    c = np.take_along_axis(c, perm, axis=1)
    A = np.take_along_axis(a @ Q, perm[:, None, :], axis=2)
    U = np.take_along_axis(U, perm[:, :, None], axis=1)
    q, R = np.linalg.qr(A)
    diag = np.diagonal(R, axis1=1, axis2=2)
    sign = np.where(diag < 0, -1.0, 1.0)
    q = q * sign[:, None, :]
    R = R * sign[:, :, None]
    dabs = np.abs(diag)
    N = R / dabs[:, :, None]
    with np.errstate(over="ignore", invalid="ignore"):
        scale = np.exp(s[:, None, :] - s[:, :, None])
        M = np.where(N == 0.0, 0.0, N * scale)
    U = np.triu(M) @ U
    if not np.all(np.isfinite(U)):
        raise OverflowError("product overflow despite renormalization")
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.log(dabs)
        total = s + x
        err = np.where(np.abs(s) >= np.abs(x), (s - total) + x, (x - total) + s)
        c = c + np.where(np.isfinite(err), err, 0.0)
    return q, total, c, U


MAX_SPREAD = 600.0


def _graded_log_sv(s, c, U):
    """
    Sorted log singular values of diag(exp(s + c)) U (U of shape k x d,
    k <= d, rows well conditioned).  Scale spreads beyond MAX_SPREAD nats
    are split at the largest gap: with D_T above D_B the rows of the lower
    block only see the complement of the upper row space, up to a
    relative error exp(-gap).
    """
    order = np.argsort(-s, kind="stable")
    s, c, U = s[order], c[order], U[order]
    if s[0] - s[-1] > MAX_SPREAD:
        cut = int(np.argmax(s[:-1] - s[1:])) + 1
        q, _ = np.linalg.qr(U[:cut].T, mode="complete")
        top = _graded_log_sv(s[:cut], c[:cut], U[:cut])
        bottom = _graded_log_sv(s[cut:], c[cut:], U[cut:] @ q[:, cut:])
        return np.concatenate([top, bottom])
    centre = 0.5 * (s[0] + s[-1])
    A = np.exp(s - centre)[:, None] * U
    sva, _, _, work, _, info = lapack.dgejsv(
        np.ascontiguousarray(A.T), joba=1, jobu=3, jobv=3, jobr=0, jobp=0
    )
    if info != 0:
        raise np.linalg.LinAlgError(f"dgejsv failed with info={info}")
    with np.errstate(divide="ignore", over="ignore", under="ignore", invalid="ignore"):
        # sigma_k(D U) / d_k lies in [sigma_min(U), ||U||] for D sorted
        # decreasingly, so the order-one ratio pairs with the k-th scale
        # and the compensated scale s_k + c_k enters without extra rounding.
        ratio = (sva / np.exp(s - centre)) * (work[0] / work[1])
        if np.all(np.isfinite(ratio) & (ratio > 0)):
            ls = s + (c + np.log(ratio))
        else:
            ls = np.log(sva) + np.log(work[0] / work[1]) + centre
    return np.sort(ls)[::-1]


class GradedProduct:
    """
    One product P = Q diag(exp(s + c)) U together with its horizon n;
    c holds the compensation of the summed log-scales (zero by default).
    """

    def __init__(self, Q, s, U, n, c=None):
        self.Q, self.s, self.U, self.n = Q, s, U, n
        self.c = np.zeros_like(s) if c is None else c
        self._log_sigma = None
        self._svd = None

    @property
    def dim(self):
        return self.s.shape[0]

    def matrix(self):
        """(M, log_scale) with P = exp(log_scale) * M and ||M|| of order one."""
        shift = float(np.max(self.s))
        return (self.Q * np.exp(self.s - shift)) @ self.U, shift

    def dense(self):
        M, shift = self.matrix()
        return M * np.exp(shift)

    def log_sigma(self):
        """log sigma_1 >= ... >= log sigma_d of P, relatively accurate."""
        if self._log_sigma is None:
            self._log_sigma = _graded_log_sv(self.s, self.c, self.U)
        return self._log_sigma

    def _frames(self):
        if self._svd is None:
            shift = np.max(self.s)
            A = np.exp(self.s - shift)[:, None] * self.U
            k, _, l = np.linalg.svd(A)
            self._svd = (self.Q @ k, l)
        return self._svd

    def cartan(self, r):
        left, right = self._frames()
        ls = self.log_sigma()
        scale = float(ls[0])
        sigma = np.exp(ls - scale)
        degenerate = bool(ls[r - 1] - ls[r] <= 1e-12)
        return CartanFrame(sigma=sigma, left=left, right=right, r=r, log_scale=scale, degenerate=degenerate)

    def v_plus(self, r):
        return Subspace(self._frames()[0][:, :r].copy())

    def v_minus(self, r):
        return Subspace(self._frames()[1][r:].T.copy())

    def image(self, V):
        """The subspace P V, re-orthonormalized."""
        frame = V.frame if isinstance(V, Subspace) else np.asarray(V, dtype=float)
        shift = np.max(self.s)
        B = np.exp(self.s - shift)[:, None] * (self.U @ frame)
        u, _, _ = np.linalg.svd(B, full_matrices=False)
        return Subspace(self.Q @ u)

    def log_norm(self, x):
        """log ||P x|| for a vector x."""
        y = self.U @ np.asarray(x, dtype=float)
        nz = y != 0
        if not np.any(nz):
            return -np.inf
        t = self.s[nz] + np.log(np.abs(y[nz]))
        m = np.max(t)
        return float(m + 0.5 * np.log(np.sum(np.exp(2 * (t - m)))))

    def dh_to_vplus(self, V, r):
        """
        d_H(P V, V+_P) through tan(theta) = sing. values of
        Sigma_b Y_b Y_t^{-1} Sigma_t^{-1} with Y = l V; accurate even when
        the distance is far below machine epsilon.
        """
        _, right = self._frames()
        ls = self.log_sigma()
        Y = right @ V.frame
        Yt, Yb = Y[:r], Y[r:]
        try:
            X = np.linalg.solve(Yt.T, Yb.T).T  # Yb Yt^{-1}
        except np.linalg.LinAlgError:
            return 1.0
        with np.errstate(over="ignore", under="ignore"):
            T = X * np.exp(ls[r:, None] - ls[None, :r])
        if not np.all(np.isfinite(T)):
            return 1.0
        t = np.linalg.norm(T, 2)
        return float(t / np.sqrt(1.0 + t * t))


def _run_chunk(mu, horizons, trials, seed, fn):
    d = mu.dim
    B = len(trials)
    nmax = horizons[-1]
    idx = np.array([draw_indices(mu, nmax, trial_rng(seed, t)) for t in trials]).reshape(B, nmax)
    Q = np.broadcast_to(np.eye(d), (B, d, d)).copy()
    U = Q.copy()
    s = np.zeros((B, d))
    c = np.zeros((B, d))
    out = [[None] * len(horizons) for _ in range(B)]
    h = 0
    for step in range(nmax + 1):
        while h < len(horizons) and horizons[h] == step:
            for b in range(B):
                out[b][h] = fn(GradedProduct(Q[b], s[b], U[b], step, c[b]), trials[b])
            h += 1
        if step < nmax:
            Q, s, c, U = _qr_step(Q, s, c, U, mu.atoms[idx[:, step]])
    return out


def map_products(mu, horizons, trials, seed, fn, threads=1):
    """
    Run ``trials`` independent walks up to max(horizons) and evaluate
    fn(product, trial_index) at every horizon.  Returns a list indexed
    [trial][horizon] in trial order, identical for any thread count.
    """
    single = np.isscalar(horizons)
    hs = [int(horizons)] if single else sorted(int(h) for h in horizons)
    if hs[0] < 0:
        raise ValueError("horizon must be >= 0")
    chunks = [range(a, min(a + CHUNK, trials)) for a in range(0, trials, CHUNK)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(lambda c: _run_chunk(mu, hs, list(c), seed, fn), chunks))
    else:
        parts = [_run_chunk(mu, hs, list(c), seed, fn) for c in chunks]
    res = [row for part in parts for row in part]
    return [row[0] for row in res] if single else res


def product(mu, n, seed, trial=0):
    """The graded product of one trial's walk at horizon n."""
    return _run_chunk(mu, [int(n)], [trial], seed, lambda p, t: p)[0][0]
