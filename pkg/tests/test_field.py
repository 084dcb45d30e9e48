import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amn.field import Field, mul, scalar_abs, scalar_mul, scale_vector, unit_quadrature

finite = st.floats(-100, 100, allow_nan=False)


def quat(w, i, j, k):
    return np.array([w, i, j, k], dtype=float)


def test_field_parse_and_width():
    assert Field.parse("c") is Field.COMPLEX
    assert [f.width for f in Field] == [1, 2, 4]
    assert Field.from_width(4) is Field.QUATERNION
    with pytest.raises(ValueError):
        Field.parse("Q")
    with pytest.raises(ValueError):
        Field.from_width(3)


def test_quaternion_units_anticommute():
    i, j, k = quat(0, 1, 0, 0), quat(0, 0, 1, 0), quat(0, 0, 0, 1)
    assert np.array_equal(scalar_mul(i, j), k)
    assert np.array_equal(scalar_mul(j, i), -k)
    assert np.array_equal(scalar_mul(i, i), quat(-1, 0, 0, 0))
    assert np.array_equal(scalar_mul(scalar_mul(i, j), k), quat(-1, 0, 0, 0))


@given(finite, finite, finite, finite)
def test_complex_product_matches_builtin(a, b, c, d):
    got = scalar_mul([a, b], [c, d])
    want = complex(a, b) * complex(c, d)
    assert got == pytest.approx([want.real, want.imag], rel=1e-12, abs=1e-9)


@settings(max_examples=50)
@given(st.lists(finite, min_size=8, max_size=8))
def test_quaternion_norm_is_multiplicative(coords):
    a, b = np.array(coords[:4]), np.array(coords[4:])
    assert scalar_abs(mul(a, b)) == pytest.approx(scalar_abs(a) * scalar_abs(b),
                                                  rel=1e-12, abs=1e-9)


def test_mul_rejects_mixed_fields():
    with pytest.raises(ValueError, match="field mismatch"):
        mul(np.ones(2), np.ones(4))


def test_scale_vector_acts_on_the_left():
    i, j = quat(0, 1, 0, 0), quat(0, 0, 1, 0)
    x = np.stack([j, i])
    out = scale_vector(i, x)
    assert np.array_equal(out[0], quat(0, 0, 0, 1))
    assert np.array_equal(out[1], quat(-1, 0, 0, 0))


def test_scale_vector_batches():
    lam = np.array([[2.0], [-1.0]])
    x = np.array([[1.0], [3.0]])
    out = scale_vector(lam, x[None])
    assert out.shape == (2, 2, 1)
    assert out[:, :, 0].tolist() == [[2.0, 6.0], [-1.0, -3.0]]


def test_real_quadrature_is_sign_pair():
    q = unit_quadrature(Field.REAL, 64)
    assert sorted(q.nodes[:, 0]) == [-1.0, 1.0]
    assert q.average(lambda u: u[:, 0] ** 2) == 1.0


@pytest.mark.parametrize("n", [4, 8, 64])
def test_complex_roots_exact_on_low_harmonics(n):
    q = unit_quadrature(Field.COMPLEX, n)
    assert len(q) == n
    assert np.all(np.abs(scalar_abs(q.nodes) - 1) < 1e-15)
    assert [0.0, 1.0] in q.nodes.tolist()
    for k in range(1, n):
        theta = np.arctan2(q.nodes[:, 1], q.nodes[:, 0])
        assert abs(q.average(lambda u: np.cos(k * theta))) < 1e-12


def test_complex_quadrature_of_abs_cos():
    # oracle: mean of |cos θ| over the circle is 2/π
    q = unit_quadrature(Field.COMPLEX, 256)
    assert q.average(lambda u: np.abs(u[:, 0])) == pytest.approx(2 / math.pi, abs=1e-4)


def test_quaternion_quadrature_contains_group_and_is_a_design():
    q = unit_quadrature(Field.QUATERNION, 24)
    assert len(q) == 24
    assert np.allclose(scalar_abs(q.nodes), 1)
    # closed under multiplication
    prods = mul(q.nodes[:, None, :], q.nodes[None, :, :]).reshape(-1, 4)
    members = {tuple(r) for r in q.nodes.tolist()}
    assert all(tuple(r) in members for r in prods.tolist())
    assert np.allclose(q.weights @ q.nodes, 0)
    assert q.average(lambda u: u[:, 0] ** 2) == pytest.approx(0.25)


def test_quaternion_topup_approximates_haar():
    # oracle: for uniform u on S^3, E|u_w| = 4/(3π)
    q = unit_quadrature(Field.QUATERNION, 4096, seed=3)
    assert len(q) == 4096
    assert np.allclose(scalar_abs(q.nodes), 1)
    assert q.average(lambda u: np.abs(u[:, 0])) == pytest.approx(4 / (3 * math.pi), abs=5e-3)


def test_quadrature_is_deterministic_and_read_only():
    a = unit_quadrature(Field.QUATERNION, 100, seed=5)
    b = unit_quadrature(Field.QUATERNION, 100, seed=5)
    assert np.array_equal(a.nodes, b.nodes)
    with pytest.raises(ValueError):
        a.nodes[0, 0] = 2.0


@pytest.mark.parametrize("bad", [0, -3, 2.5])
def test_quadrature_rejects_bad_resolution(bad):
    with pytest.raises(ValueError):
        unit_quadrature(Field.COMPLEX, bad)
