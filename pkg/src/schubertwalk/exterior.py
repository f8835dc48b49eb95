"""
Grassmannian and exterior-algebra kernels.

Subspaces are carried as orthonormal frames (d x k arrays, columns an
orthonormal basis).  Exterior powers use the lexicographic basis of
k-subsets of {0, ..., d-1}; the coordinate of e_I in a wedge product of
columns is the minor on the rows I.

All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

ORTHONORMAL_TOL = 1e-10
# gap below this is treated as a nontrivial intersection
INTERSECTION_TOL = 1e-10


def as_matrix(g, invertible=False):
    """Validate a square finite matrix and return it as a float array."""
    g = np.asarray(g, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ValueError("matrix has non-finite entries")
    if invertible:
        sv = np.linalg.svd(g, compute_uv=False)
        if sv[-1] <= 1e-14 * max(sv[0], 1e-300):
            raise ValueError("non-invertible matrix")
    return g


@dataclass(frozen=True)
class Subspace:
    """A k-dimensional subspace of R^d held as an orthonormal d x k frame."""

    frame: np.ndarray

    def __post_init__(self):
        f = np.array(self.frame, dtype=float)
        if f.ndim == 1:
            f = f[:, None]
        if f.ndim != 2 or not 1 <= f.shape[1] <= f.shape[0]:
            raise ValueError(f"frame must be d x k with 1 <= k <= d, got {f.shape}")
        gram = f.T @ f
        if np.max(np.abs(gram - np.eye(f.shape[1]))) > ORTHONORMAL_TOL:
            raise ValueError("frame columns are not orthonormal")
        f.flags.writeable = False
        object.__setattr__(self, "frame", f)

    @classmethod
    def span(cls, vectors):
        """Subspace spanned by the columns of ``vectors`` (must be independent)."""
        a = np.array(vectors, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        q, r = np.linalg.qr(a)
        diag = np.abs(np.diag(r))
        if diag.min() <= 1e-12 * max(diag.max(), 1e-300):
            raise ValueError("spanning vectors are linearly dependent")
        return cls(q)

    @classmethod
    def coordinate(cls, d, indices):
        """span(e_i for i in indices), 0-based."""
        f = np.zeros((d, len(indices)))
        for col, i in enumerate(indices):
            f[i, col] = 1.0
        return cls(f)

    @classmethod
    def random(cls, d, k, rng):
        """Haar-random point of Gr(k, d)."""
        return cls.span(rng.standard_normal((d, k)))

    @property
    def ambient_dim(self):
        return self.frame.shape[0]

    @property
    def dim(self):
        return self.frame.shape[1]

    def projector(self):
        return self.frame @ self.frame.T

    def complement(self):
        """Orthogonal complement (requires dim < ambient_dim)."""
        d, k = self.frame.shape
        if k == d:
            raise ValueError("the whole space has no proper complement")
        u, _, _ = np.linalg.svd(self.frame, full_matrices=True)
        return Subspace(u[:, k:])

    def image(self, g):
        """g V, re-orthonormalized."""
        return Subspace.span(np.asarray(g, dtype=float) @ self.frame)


def line(x):
    """The line R x as a Subspace."""
    x = np.asarray(x, dtype=float).ravel()
    n = np.linalg.norm(x)
    if n == 0:
        raise ValueError("zero vector spans no line")
    return Subspace(x[:, None] / n)


@dataclass(frozen=True)
class CartanFrame:
    """
    Singular value decomposition g = left @ diag(sigma) @ right.

    ``right`` is the l of the Cartan decomposition: its rows are the right
    singular vectors.  ``log_scale`` is added to log(sigma) to recover the
    singular values of a matrix that was stored renormalized.
    """

    sigma: np.ndarray
    left: np.ndarray
    right: np.ndarray
    r: int
    log_scale: float = 0.0
    degenerate: bool = field(default=False)

    @property
    def log_sigma(self):
        with np.errstate(divide="ignore"):
            return np.log(self.sigma) + self.log_scale

    def reconstruct(self):
        return (self.left * self.sigma) @ self.right


def cartan(g, r):
    """
    Cartan (singular value) frame of an invertible matrix, cut at rank r.

    When sigma_r == sigma_{r+1} the LAPACK branch is kept as is and the
    frame is flagged ``degenerate``.
    """
    g = as_matrix(g)
    d = g.shape[0]
    if not 1 <= r < d:
        raise ValueError(f"need 1 <= r < d, got r={r}, d={d}")
    left, sigma, right = np.linalg.svd(g)
    if sigma[-1] <= 1e-14 * max(sigma[0], 1e-300):
        raise ValueError("non-invertible matrix")
    degenerate = bool(sigma[r - 1] - sigma[r] <= 1e-12 * sigma[0])
    return CartanFrame(sigma=sigma, left=left, right=right, r=r, degenerate=degenerate)


def v_plus(frame):
    """V+_g: span of the top r left singular vectors."""
    return Subspace(frame.left[:, : frame.r])


def v_minus(frame):
    """V-_g: span of the right singular vectors r+1, ..., d."""
    return Subspace(frame.right[frame.r :].T)


def _residual(a, b):
    """Component of the columns of a orthogonal to span(b) (both orthonormal)."""
    return a - b @ (b.T @ a)


def gap(V, W):
    """
    Transversality gap ||v ^ w|| / (||v|| ||w||) of two subspaces.

    Equals the product of the sines of the principal angles between V and
    W: 0 iff they intersect, 1 iff they are orthogonal.
    """
    if V.ambient_dim != W.ambient_dim:
        raise ValueError("subspaces live in different ambient spaces")
    if V.dim + W.dim > V.ambient_dim:
        raise ValueError(f"overfull: dim V + dim W = {V.dim + W.dim} > {V.ambient_dim}")
    # orthogonalize the smaller frame against the larger one
    a, b = (V.frame, W.frame) if V.dim <= W.dim else (W.frame, V.frame)
    sv = np.linalg.svd(_residual(a, b), compute_uv=False)
    return float(min(np.prod(sv), 1.0))


def gap_multi(subspaces):
    """
    Volume ||v_1 ^ ... ^ v_k|| / prod ||v_i|| of a tuple of subspaces.

    Zero iff the sum V_1 + ... + V_k is not direct.
    """
    subspaces = list(subspaces)
    if not subspaces:
        raise ValueError("need at least one subspace")
    d = subspaces[0].ambient_dim
    if any(s.ambient_dim != d for s in subspaces):
        raise ValueError("subspaces live in different ambient spaces")
    total = sum(s.dim for s in subspaces)
    if total > d:
        raise ValueError(f"overfull: total dimension {total} > {d}")
    stacked = np.hstack([s.frame for s in subspaces])
    sv = np.linalg.svd(stacked, compute_uv=False)
    return float(min(np.prod(sv), 1.0))


def gap_multi_telescoping(subspaces):
    """prod_j gap(V_j, V_1 + ... + V_{j-1}); agrees with gap_multi."""
    subspaces = list(subspaces)
    value = 1.0
    for j in range(1, len(subspaces)):
        head = np.hstack([s.frame for s in subspaces[:j]])
        u, sv, _ = np.linalg.svd(head, full_matrices=False)
        rank = int(np.sum(sv > INTERSECTION_TOL * sv[0]))
        if rank < head.shape[1]:
            return 0.0
        value *= gap(subspaces[j], Subspace(u[:, :rank]))
    return value


def hausdorff(V, V2):
    """d_H(V, V2) = max over unit v in V of dist(v, V2): sine of the largest principal angle."""
    if V.dim != V2.dim or V.ambient_dim != V2.ambient_dim:
        raise ValueError("hausdorff distance needs subspaces of equal dimension")
    sv = np.linalg.svd(_residual(V.frame, V2.frame), compute_uv=False)
    return float(min(sv[0], 1.0))


@lru_cache(maxsize=None)
def subsets(d, k):
    """Lexicographic k-subsets of range(d) as a read-only (C(d,k), k) array."""
    idx = np.array(list(itertools.combinations(range(d), k)), dtype=np.intp).reshape(-1, k)
    idx.flags.writeable = False
    return idx


def exterior_power(g, k):
    """
    Matrix of the k-th exterior power of g in the lexicographic basis.

    Entry (I, J) is the minor det g[I, J].  Accepts a single matrix or a
    stack of matrices (..., d, d).
    """
    g = np.asarray(g, dtype=float)
    d = g.shape[-1]
    if g.shape[-2] != d:
        raise ValueError("expected square matrices")
    if not 1 <= k <= d:
        raise ValueError(f"exterior degree k={k} out of range 1..{d}")
    if k == 1:
        return g.copy()
    idx = subsets(d, k)
    gi = g[..., idx[:, None, :, None], idx[None, :, None, :]]  # (..., N, N, k, k)
    return np.linalg.det(gi)


@dataclass(frozen=True)
class PluckerVector:
    """Coordinates of a decomposable r-vector over lexicographic r-subsets."""

    r: int
    coords: np.ndarray
    unit: bool = True

    @property
    def norm(self):
        return float(np.linalg.norm(self.coords))


def plucker(V):
    """
    Unit Plucker vector of V (k x k minors of its frame), sign fixed so
    that the first coordinate of magnitude above 1e-12 is positive.
    """
    f = V.frame
    idx = subsets(V.ambient_dim, V.dim)
    coords = np.linalg.det(f[idx, :])
    coords = coords / np.linalg.norm(coords)
    nz = np.flatnonzero(np.abs(coords) > 1e-12)
    if nz.size and coords[nz[0]] < 0:
        coords = -coords
    coords.flags.writeable = False
    return PluckerVector(r=V.dim, coords=coords)


def _merge_sign(a, b):
    """Sign of the permutation sorting the concatenation a + b (disjoint)."""
    inversions = sum(1 for x in a for y in b if x > y)
    return -1.0 if inversions % 2 else 1.0


def wedge(x, r, y, s, d):
    """Wedge product of x in ^r R^d and y in ^s R^d, coordinates in ^(r+s) R^d."""
    if r + s > d:
        raise ValueError("degree exceeds dimension")
    out_idx = {tuple(t): n for n, t in enumerate(subsets(d, r + s))}
    out = np.zeros(len(out_idx))
    for i, I in enumerate(subsets(d, r)):
        if x[i] == 0:
            continue
        for j, J in enumerate(subsets(d, s)):
            if y[j] == 0 or set(I) & set(J):
                continue
            key = tuple(sorted(tuple(I) + tuple(J)))
            out[out_idx[key]] += _merge_sign(tuple(I), tuple(J)) * x[i] * y[j]
    return out


@dataclass(frozen=True)
class VectorInequalityReport:
    gap_x_vminus: float
    gap_gx_vplus: float
    stretch: float          # ||g x|| / ||x||
    lower: float            # sigma_r * gap(x, V-)
    upper: float            # sigma_1 * gap(x, V-) + sigma_{r+1}
    product: float          # gap(x, V-) * gap(g x, V+)
    ratio: float            # sigma_{r+1} / sigma_r
    holds: bool


def check_vector_inequalities(g, r, x, slack=1e-8):
    """
    Evaluate the two-sided stretch bound
        sigma_r gap(x, V-) <= ||gx||/||x|| <= sigma_1 gap(x, V-) + sigma_{r+1}
    and the alignment bound gap(x, V-) gap(gx, V+) <= sigma_{r+1}/sigma_r.
    """
    g = as_matrix(g, invertible=True)
    x = np.asarray(x, dtype=float).ravel()
    if not np.any(x):
        raise ValueError("zero vector")
    frame = cartan(g, r)
    s = frame.sigma
    xl = line(x)
    gx = g @ x
    a = gap(xl, v_minus(frame))
    b = gap(line(gx), v_plus(frame))
    stretch = float(np.linalg.norm(gx) / np.linalg.norm(x))
    lower = s[r - 1] * a
    upper = s[0] * a + s[r]
    ratio = s[r] / s[r - 1]
    tol = slack * max(1.0, stretch)
    holds = (lower <= stretch + tol) and (stretch <= upper + tol) and (a * b <= ratio + slack)
    return VectorInequalityReport(a, b, stretch, float(lower), float(upper), a * b, float(ratio), bool(holds))


def contraction_bound(g, r, V):
    """
    Both sides of d_H(gV, V+_g) <= r sigma_1^(r-1) sigma_{r+1} / ||(^r g) v||
    for a single matrix.  Returns (lhs, rhs).
    """
    g = as_matrix(g, invertible=True)
    if V.dim != r:
        raise ValueError("V must have dimension r")
    frame = cartan(g, r)
    gv = g @ V.frame
    lhs = hausdorff(Subspace.span(gv), v_plus(frame))
    # ||g v_1 ^ ... ^ g v_r|| is the volume of the image frame
    vol = float(np.prod(np.linalg.svd(gv, compute_uv=False)))
    s = frame.sigma
    rhs = r * s[0] ** (r - 1) * s[r] / vol
    return lhs, float(rhs)


def lines_gap(xs):
    """gap_multi of the lines through the given vectors (columns or list)."""
    return gap_multi([line(x) for x in xs])

