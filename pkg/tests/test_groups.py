import json

import numpy as np
import pytest

from schubertwalk.exterior import exterior_power
from schubertwalk.groups import (
    PresetError,
    QUATERNION_UNITS,
    complex_structure,
    dirac,
    int_det,
    list_presets,
    lorentz_form,
    make_measure,
    measure_from_json,
    preset,
    preset_names,
    quat_mul,
    quaternion_transvection,
    realify_complex,
    realify_complex_matrix,
    realify_quaternion,
    realify_quaternion_matrix,
    right_multiplication,
    so1d_exterior_square,
    so1d_generators,
)

I, J, K = QUATERNION_UNITS["i"], QUATERNION_UNITS["j"], QUATERNION_UNITS["k"]


def test_make_measure_validation():
    with pytest.raises(ValueError, match="sum"):
        make_measure([np.eye(2), np.eye(2)], [0.5, 0.4])
    with pytest.raises(ValueError, match="non-invertible"):
        make_measure([np.diag([1.0, 0.0])])
    mu = make_measure([np.eye(2), 2 * np.eye(2)])
    assert not mu.integer_flag
    assert np.allclose(mu.weights, 0.5)


def test_int_det_exact_on_large_entries():
    m = np.array([[10**12 + 1, 10**12], [10**12, 10**12 - 1]], dtype=object)
    assert int_det(m) == -1
    assert int_det(np.array([[0, 1], [1, 0]])) == -1
    assert int_det(np.array([[2, 4], [1, 2]])) == 0


# --- complex ---------------------------------------------------------------

def test_realify_complex_identity():
    mu = realify_complex([np.eye(2, dtype=complex)])
    assert np.array_equal(mu.int_atoms[0], np.eye(4, dtype=np.int64))
    assert mu.integer_flag


def test_realify_complex_block_substitution():
    got = realify_complex_matrix(np.array([[1, 1j], [0, 1]]))
    want = np.array([[1, 0, 0, -1], [0, 1, 1, 0], [0, 0, 1, 0], [0, 0, 0, 1]])
    assert np.array_equal(got, want)


def test_realify_complex_order_four():
    w = realify_complex_matrix(np.array([[0, -1], [1, 0]], dtype=complex))
    assert int_det(w) == 1
    assert np.array_equal(np.linalg.matrix_power(w, 4), np.eye(4))
    assert not np.array_equal(np.linalg.matrix_power(w, 2), np.eye(4))


def test_realify_complex_rejects_det():
    with pytest.raises(ValueError, match="determinant"):
        realify_complex([np.array([[1j, 0], [0, 1]])])
    with pytest.raises(ValueError):
        realify_complex([np.array([[0.5, 0], [0, 2]], dtype=complex)])


def test_complex_realification_is_homomorphism():
    rng = np.random.default_rng(0)
    for _ in range(50):
        A = rng.integers(-5, 6, (3, 3)) + 1j * rng.integers(-5, 6, (3, 3))
        B = rng.integers(-5, 6, (3, 3)) + 1j * rng.integers(-5, 6, (3, 3))
        assert np.array_equal(realify_complex_matrix(A @ B), realify_complex_matrix(A) @ realify_complex_matrix(B))


def test_complex_atoms_commute_with_complex_structure():
    mu = preset("slc2-in-sl4")
    Jc = complex_structure(2)
    for a in mu.int_atoms:
        assert np.array_equal(a @ Jc, Jc @ a)


# --- quaternions -------------------------------------------------------------

def test_quaternion_units():
    assert quat_mul(I, J) == K
    assert quat_mul(J, I) == tuple(-x for x in K)
    assert quat_mul(I, I) == (-1, 0, 0, 0)


def test_realify_quaternion_identity():
    mu = realify_quaternion([np.array([[[1, 0, 0, 0]]])])
    assert np.array_equal(mu.int_atoms[0], np.eye(4, dtype=np.int64))


def test_quaternion_transvection_realification():
    t = quaternion_transvection(2, 0, 1, J)
    real = realify_quaternion_matrix(t)
    assert real.shape == (8, 8)
    assert int_det(real) == 1
    assert realify_quaternion([t]).integer_flag
    # upper-right block realifies left multiplication by j
    x = np.array([1, 2, 3, 4])
    assert np.array_equal(real[:4, 4:] @ x, quat_mul(J, tuple(x)))


def _quat_matmul(a, b):
    m = a.shape[0]
    out = np.zeros_like(a)
    for i in range(m):
        for j in range(m):
            acc = np.zeros(4, dtype=np.int64)
            for k in range(m):
                acc += quat_mul(tuple(a[i, k]), tuple(b[k, j]))
            out[i, j] = acc
    return out


def test_quaternion_realification_is_homomorphism():
    a = quaternion_transvection(2, 0, 1, I)
    b = quaternion_transvection(2, 1, 0, (1, 1, 0, -1))
    assert np.array_equal(realify_quaternion_matrix(_quat_matmul(a, b)), realify_quaternion_matrix(a) @ realify_quaternion_matrix(b))
    rng = np.random.default_rng(1)
    for _ in range(20):
        a, b = rng.integers(-3, 4, (2, 3, 3, 4))
        assert np.array_equal(realify_quaternion_matrix(_quat_matmul(a, b)), realify_quaternion_matrix(a) @ realify_quaternion_matrix(b))


def test_quaternion_atoms_commute_with_right_multiplication():
    mu = preset("slh2-in-sl8")
    for q in (I, J, K):
        R = right_multiplication(2, q)
        for a in mu.int_atoms:
            assert np.array_equal(a @ R, R @ a)


def test_realify_quaternion_rejects_norm():
    a = np.zeros((1, 1, 4), dtype=np.int64)
    a[0, 0] = (1, 1, 0, 0)  # reduced norm 2
    with pytest.raises(ValueError, match="unsupported atom"):
        realify_quaternion([a])


def test_slh1_is_excluded():
    with pytest.raises(PresetError, match="compact"):
        preset("slh1-in-sl4")


# --- SO(1, d) ------------------------------------------------------------------

def test_so1d_identity():
    mu = so1d_exterior_square([np.eye(8, dtype=np.int64)])
    assert np.array_equal(mu.int_atoms[0], np.eye(28, dtype=np.int64))


def test_so1d_generators_preserve_form():
    for d in (3, 4, 7):
        Jf = lorentz_form(d + 1)
        for g in so1d_generators(d):
            assert np.array_equal(g.T @ Jf @ g, Jf)
            assert int_det(g) == 1


def test_so1d_exterior_square_matches_minors():
    gens = so1d_generators(7)
    mu = so1d_exterior_square(gens)
    assert mu.dim == 28
    for g, a in zip(gens, mu.int_atoms):
        assert np.allclose(a, exterior_power(g.astype(float), 2))
        assert abs(int_det(a)) == 1


def test_so1d_signed_permutation():
    g = np.eye(8, dtype=np.int64)
    g[1:3, 1:3] = [[0, 1], [1, 0]]
    g[3, 3] = -1
    a = so1d_exterior_square([g]).int_atoms[0]
    assert np.all(np.sum(np.abs(a), axis=0) == 1) and np.all(np.sum(np.abs(a), axis=1) == 1)


def test_so1d_rejects_non_form_preserving():
    g = np.eye(4, dtype=np.int64)
    g[0, 1] = 1
    with pytest.raises(ValueError, match="preserve"):
        so1d_exterior_square([g])


# --- presets and serialization ---------------------------------------------------

def test_sl2z_preset():
    mu = preset("sl2z")
    assert len(mu) == 4 and np.allclose(mu.weights, 0.25)
    assert mu.integer_flag
    a, a_inv = mu.int_atoms[0], mu.int_atoms[1]
    assert np.array_equal(a @ a_inv, np.eye(2, dtype=np.int64))


@pytest.mark.parametrize("name", ["sl2z", "slc2-in-sl4", "slh2-in-sl8", "so1-7-ext2"])
def test_presets_are_unimodular(name):
    mu = preset(name)
    assert mu.integer_flag
    assert abs(mu.weights.sum() - 1) <= 1e-12
    assert all(abs(int_det(a)) == 1 for a in mu.int_atoms)


def test_preset_listing():
    assert preset_names() == ["sl2z", "slc2-in-sl4", "slh1-in-sl4", "slh2-in-sl8", "so1-7-ext2"]
    assert "excluded" in list_presets()
    with pytest.raises(PresetError, match="available"):
        preset("nope")


def test_json_round_trip():
    mu = preset("slc2-in-sl4")
    back = measure_from_json(json.loads(json.dumps(mu.to_json())))
    assert np.array_equal(back.atoms, mu.atoms)
    assert np.allclose(back.weights, mu.weights)
    assert back.integer_flag


def test_transpose_measures():
    mu = make_measure([np.diag([2.0, 0.5]), np.array([[1.0, 1.0], [0.0, 1.0]])])
    assert np.allclose(mu.transpose().atoms[1], [[1, 0], [1, 1]])
    assert np.allclose(mu.transpose_inverse().atoms[0], np.diag([0.5, 2.0]))
    assert dirac(np.eye(3)).atoms.shape == (1, 3, 3)
