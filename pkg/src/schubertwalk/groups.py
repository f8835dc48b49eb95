"""
Finitely supported step laws on GL_d(R) and the named preset measures.

Realification conventions:

* complex a + bi  ->  [[a, -b], [b, a]]  (basis 1, i of each C-coordinate)
* quaternion q   ->  matrix of left multiplication x -> q x on the basis
  (1, i, j, k).  Quaternionic matrices act on columns of H^m from the left,
  so H-linearity is commutation with right multiplication by H.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import sympy

from .exterior import subsets


class PresetError(KeyError):
    pass


def int_det(m):
    """Exact determinant of an integer matrix (fraction-free Bareiss)."""
    a = [[int(x) for x in row] for row in np.asarray(m, dtype=object)]
    n = len(a)
    sign, prev = 1, 1
    for k in range(n - 1):
        if a[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if a[i][k] != 0), None)
            if swap is None:
                return 0
            a[k], a[swap] = a[swap], a[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1] if n else 1


def _is_integer_matrix(m):
    m = np.asarray(m)
    if m.dtype.kind in "iu":
        return True
    if m.dtype.kind == "O":
        return all(isinstance(x, (int, np.integer)) for x in m.ravel())
    return bool(np.all(np.isfinite(m)) and np.all(m == np.round(m)) and np.max(np.abs(m), initial=0) < 2**53)


@dataclass(frozen=True)
class GroupMeasure:
    """
    Probability measure with finitely many atoms (d x d invertible matrices).

    ``integer`` atoms are kept as exact int64 arrays next to the float copy;
    ``exact_weights`` holds the weights as Fractions when they are exactly
    rational with a small denominator (needed by exact torus pushforwards).
    """

    atoms: np.ndarray
    weights: np.ndarray
    label: str = "custom"
    integer_flag: bool = False
    int_atoms: np.ndarray | None = field(default=None, repr=False)
    exact_weights: tuple | None = field(default=None, repr=False)

    @property
    def dim(self):
        return self.atoms.shape[-1]

    def __len__(self):
        return self.atoms.shape[0]

    def transpose(self):
        """Law of g^T."""
        return _derived(self, np.swapaxes(self.atoms, 1, 2), self.label + "^T")

    def transpose_inverse(self):
        """Law of (g^T)^{-1}."""
        return _derived(self, np.linalg.inv(np.swapaxes(self.atoms, 1, 2)), self.label + "^-T")

    def to_json(self):
        atoms = self.int_atoms if self.integer_flag else self.atoms
        return {
            "dim": int(self.dim),
            "label": self.label,
            "atoms": [
                {"matrix": np.asarray(a).tolist(), "weight": float(w)}
                for a, w in zip(atoms, self.weights)
            ],
        }


def _derived(mu, atoms, label):
    return make_measure(atoms, mu.weights, label=label, check_integer=False)


def _exact_weights(weights):
    fr = tuple(Fraction(float(w)).limit_denominator(10**6) for w in weights)
    if sum(fr) == 1 and all(abs(float(f) - w) < 1e-12 for f, w in zip(fr, weights)):
        return fr
    return None


def make_measure(atoms, weights=None, label="custom", check_integer=True):
    """
    Build a GroupMeasure, validating weights and invertibility.  Integer
    atoms with |det| = 1 (checked exactly) set ``integer_flag``.
    """
    raw = [np.asarray(a) for a in atoms]
    if not raw:
        raise ValueError("a measure needs at least one atom")
    d = raw[0].shape[0]
    if any(a.shape != (d, d) for a in raw):
        raise ValueError("atoms must all be square of the same size")
    mats = np.array([np.asarray(a, dtype=float) for a in raw])
    if not np.all(np.isfinite(mats)):
        raise ValueError("atom has non-finite entries")
    if weights is None:
        weights = np.full(len(raw), 1.0 / len(raw))
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (len(raw),) or np.any(weights <= 0):
        raise ValueError("weights must be positive, one per atom")
    if abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError(f"weights sum to {weights.sum()!r}, not 1")
    sv = np.linalg.svd(mats, compute_uv=False)
    if np.any(sv[:, -1] <= 1e-14 * sv[:, 0]):
        raise ValueError("non-invertible atom")
    int_atoms, integer = None, False
    if check_integer and all(_is_integer_matrix(a) for a in raw):
        ints = [np.asarray(a).astype(object) for a in raw]
        if all(abs(int_det(a)) == 1 for a in ints):
            integer = True
            int_atoms = np.array([a.astype(np.int64) for a in ints])
    mats.flags.writeable = False
    weights.flags.writeable = False
    return GroupMeasure(
        atoms=mats,
        weights=weights,
        label=label,
        integer_flag=integer,
        int_atoms=int_atoms,
        exact_weights=_exact_weights(weights),
    )


def dirac(g, label="dirac"):
    return make_measure([np.asarray(g)], [1.0], label=label)


def with_inverses(mats):
    """Append the inverses (exact for integer unimodular input)."""
    out = []
    for m in mats:
        m = np.asarray(m)
        out.append(m)
        inv = sympy.Matrix(m.tolist()).inv()
        if all(x.is_integer for x in inv):
            out.append(np.array(inv.tolist(), dtype=np.int64))
        else:
            out.append(np.linalg.inv(np.asarray(m, dtype=float)))
    return out


# --- complex realification -------------------------------------------------

def realify_complex_matrix(a):
    """Real 2m x 2m matrix of the complex m x m matrix a."""
    a = np.asarray(a, dtype=complex)
    m = a.shape[0]
    re = np.rint(a.real).astype(np.int64) if np.allclose(a.real, np.rint(a.real)) else a.real
    im = np.rint(a.imag).astype(np.int64) if np.allclose(a.imag, np.rint(a.imag)) else a.imag
    out = np.zeros((2 * m, 2 * m), dtype=np.result_type(re, im))
    out[0::2, 0::2] = re
    out[0::2, 1::2] = -im
    out[1::2, 0::2] = im
    out[1::2, 1::2] = re
    return out


def complex_structure(m):
    """Realification of i * I_m."""
    return realify_complex_matrix(1j * np.eye(m))


def _gaussian_det(a):
    entries = [[sympy.Integer(int(round(z.real))) + sympy.I * sympy.Integer(int(round(z.imag))) for z in row] for row in a]
    return sympy.expand(sympy.Matrix(entries).det(method="bareiss"))


def realify_complex(atoms, weights=None, label="complex"):
    """Measure on SL(2m, Z) from Gaussian-integer matrices of determinant 1."""
    mats = []
    for a in atoms:
        a = np.asarray(a, dtype=complex)
        if not (np.allclose(a.real, np.rint(a.real)) and np.allclose(a.imag, np.rint(a.imag))):
            raise ValueError("entries must be Gaussian integers")
        if _gaussian_det(a) != 1:
            raise ValueError("complex atom does not have determinant 1")
        mats.append(realify_complex_matrix(a))
    return make_measure(mats, weights, label=label)


# --- quaternions -------------------------------------------------------------

QUATERNION_UNITS = {"1": (1, 0, 0, 0), "i": (0, 1, 0, 0), "j": (0, 0, 1, 0), "k": (0, 0, 0, 1)}


def quat_mul(p, q):
    a1, b1, c1, d1 = p
    a2, b2, c2, d2 = q
    return (
        a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
        a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
        a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
        a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
    )


def quat_left(q):
    """4 x 4 integer matrix of x -> q x."""
    basis = QUATERNION_UNITS.values()
    return np.array([quat_mul(q, e) for e in basis], dtype=np.int64).T


def quat_right(q):
    """4 x 4 integer matrix of x -> x q."""
    basis = QUATERNION_UNITS.values()
    return np.array([quat_mul(e, q) for e in basis], dtype=np.int64).T


def realify_quaternion_matrix(a):
    """a: (m, m, 4) integer array of quaternions -> 4m x 4m integer matrix."""
    a = np.asarray(a, dtype=np.int64)
    m = a.shape[0]
    out = np.zeros((4 * m, 4 * m), dtype=np.int64)
    for i in range(m):
        for j in range(m):
            out[4 * i : 4 * i + 4, 4 * j : 4 * j + 4] = quat_left(tuple(a[i, j]))
    return out


def quaternion_transvection(m, i, j, q):
    """The quaternionic matrix I + q E_ij as an (m, m, 4) array."""
    if i == j:
        raise ValueError("transvection needs i != j")
    a = np.zeros((m, m, 4), dtype=np.int64)
    for t in range(m):
        a[t, t, 0] = 1
    a[i, j] = q
    return a


def right_multiplication(m, q):
    """Realification of right multiplication by q on H^m (block diagonal)."""
    return np.kron(np.eye(m, dtype=np.int64), quat_right(q))


def realify_quaternion(atoms, weights=None, label="quaternion"):
    """
    Measure on SL(4m, Z) from quaternionic matrices over the Lipschitz
    integers.  Each atom's reduced norm is verified through the exact
    determinant of its realification.
    """
    mats = []
    for a in atoms:
        a = np.asarray(a)
        if a.ndim != 3 or a.shape[2] != 4 or a.shape[0] != a.shape[1]:
            raise ValueError("quaternion atoms must have shape (m, m, 4)")
        if not _is_integer_matrix(a.reshape(a.shape[0], -1)):
            raise ValueError("entries must be Lipschitz integers")
        real = realify_quaternion_matrix(a)
        if int_det(real.astype(object)) != 1:
            raise ValueError("unsupported atom: reduced norm is not 1")
        mats.append(real)
    return make_measure(mats, weights, label=label)


# --- SO(1, d) on the exterior square ----------------------------------------

def lorentz_form(n):
    return np.diag([1] + [-1] * (n - 1)).astype(np.int64)


def exterior_square_int(g):
    """Exact integer second exterior power (lexicographic pairs)."""
    g = np.asarray(g).astype(object)
    pairs = subsets(g.shape[0], 2)
    out = np.empty((len(pairs), len(pairs)), dtype=object)
    for a, (i, j) in enumerate(pairs):
        for b, (k, l) in enumerate(pairs):
            out[a, b] = g[i, k] * g[j, l] - g[i, l] * g[j, k]
    return out.astype(np.int64)


def so1d_exterior_square(generators, weights=None, label="so1d-ext2"):
    """
    Measure of ^2 g on ^2 R^(1+d) for integer generators g of SO(1, d),
    each checked to satisfy g^T J g = J exactly.
    """
    mats = []
    for g in generators:
        g = np.asarray(g)
        if not _is_integer_matrix(g):
            raise ValueError("SO(1,d) generators must be integer matrices")
        g = g.astype(np.int64)
        J = lorentz_form(g.shape[0])
        if not np.array_equal(g.T @ J @ g, J):
            raise ValueError("generator does not preserve the form x0^2 - x1^2 - ... - xd^2")
        mats.append(exterior_square_int(g))
    return make_measure(mats, weights, label=label)


def so1d_generators(d):
    """
    Integer generators of a Zariski-dense subgroup of SO(1, d), d >= 3:
    a Berggren boost on (x0, x1, x2) made orientation preserving, the
    cyclic shift of the spatial axes (even for odd d), and a signed swap.
    """
    n = d + 1
    boost = np.eye(n, dtype=np.int64)
    boost[:3, :3] = [[3, 2, -2], [2, 1, -2], [2, 2, -1]]
    shift = np.eye(n, dtype=np.int64)
    shift[1:, 1:] = np.roll(np.eye(d, dtype=np.int64), 1, axis=0)
    if int_det(shift.astype(object)) != 1:
        shift[n - 1] *= -1
    swap = np.eye(n, dtype=np.int64)
    swap[1:3, 1:3] = [[0, 1], [1, 0]]
    swap[3, 3] = -1
    J = lorentz_form(n)
    inv = lambda g: J @ g.T @ J  # noqa: E731  (inverse of a form-preserving matrix)
    return [boost, inv(boost), shift, inv(shift), swap]


# --- presets -----------------------------------------------------------------

def baseline_proximal_sl2z():
    a = np.array([[1, 2], [0, 1]])
    b = np.array([[1, 0], [2, 1]])
    return make_measure(with_inverses([a, b]), label="sl2z")


def _slc2_in_sl4():
    gens = [
        np.array([[1, 1], [0, 1]], dtype=complex),
        np.array([[1, 1j], [0, 1]]),
        np.array([[1, 0], [1, 1]], dtype=complex),
        np.array([[1, 0], [1j, 1]]),
    ]
    atoms = []
    for g in gens:
        atoms.append(g)
        atoms.append(np.array([[g[1, 1], -g[0, 1]], [-g[1, 0], g[0, 0]]]))
    return realify_complex(atoms, label="slc2-in-sl4")


def _slh2_in_sl8():
    atoms = []
    for (i, j) in [(0, 1), (1, 0)]:
        for q in QUATERNION_UNITS.values():
            atoms.append(quaternion_transvection(2, i, j, q))
            atoms.append(quaternion_transvection(2, i, j, tuple(-x for x in q)))
    return realify_quaternion(atoms, label="slh2-in-sl8")


def _so1_7_ext2():
    return so1d_exterior_square(so1d_generators(7), label="so1-7-ext2")


def _slh1_excluded():
    raise PresetError(
        "slh1-in-sl4: SL(1,H) is compact (unit quaternions); it is not a valid "
        "example and is excluded"
    )


_PRESETS = {
    "sl2z": (baseline_proximal_sl2z, "SL(2,Z) Sanov pair and inverses; proximal baseline, r=1"),
    "slc2-in-sl4": (_slc2_in_sl4, "SL(2,Z[i]) unipotents realified in SL(4,Z); r=2"),
    "slh1-in-sl4": (_slh1_excluded, "excluded: compact group"),
    "slh2-in-sl8": (_slh2_in_sl8, "quaternionic transvections I +/- qE_ij, q in {1,i,j,k}, in SL(8,Z); r=4"),
    "so1-7-ext2": (_so1_7_ext2, "SO(1,7)(Z) acting on the exterior square (dim 28); negative control, r=6"),
}

_CACHE = {}


def preset_names():
    return list(_PRESETS)


def list_presets():
    return "\n".join(f"{name:14s} {desc}" for name, (_, desc) in _PRESETS.items())


def preset(name):
    """Named preset measure (built once, then shared)."""
    if name not in _PRESETS:
        raise PresetError(f"unknown preset {name!r}; available: {', '.join(_PRESETS)}")
    if name not in _CACHE:
        _CACHE[name] = _PRESETS[name][0]()
    return _CACHE[name]


def measure_from_json(obj):
    """Measure from {dim, atoms: [{matrix, weight}, ...]}."""
    try:
        dim = int(obj["dim"])
        atoms = [np.asarray(a["matrix"]) for a in obj["atoms"]]
        weights = [float(a["weight"]) for a in obj["atoms"]]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed measure JSON: {exc}") from exc
    if any(a.shape != (dim, dim) for a in atoms):
        raise ValueError("atom shape does not match dim")
    return make_measure(atoms, weights, label=obj.get("label", "custom"))
