import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from triflow.phasorcalc import (
    HermitianView, hermitian_defect, is_hermitian, outer, pinv, psd_residual,
    rank1_residual, real_embedding, symmetrize, wrap_angle,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
# zero or well away from the subnormal range
scaled = st.one_of(st.just(0.0), st.floats(1e-3, 1e3), st.floats(-1e3, -1e-3))


def cvectors(n):
    return st.tuples(arrays(float, n, elements=finite), arrays(float, n, elements=finite)).map(
        lambda t: t[0] + 1j * t[1])


def cmatrices(n, elements=finite):
    return st.tuples(arrays(float, (n, n), elements=elements),
                     arrays(float, (n, n), elements=elements)).map(lambda t: t[0] + 1j * t[1])


def test_outer_orientation():
    u = np.array([1 + 1j, 2])
    v = np.array([1j, 3])
    m = outer(u, v)
    assert m[0, 1] == u[0] * np.conj(v[1])
    assert m[1, 0] == u[1] * np.conj(v[0])


def test_outer_rejects_mismatched_shapes():
    with pytest.raises(ValueError):
        outer(np.ones(3), np.ones(2))


@given(st.integers(1, 3).flatmap(cvectors))
def test_outer_is_hermitian_psd_rank_one(v):
    w = outer(v, v)
    assert hermitian_defect(w) <= 1e-15 * (1 + np.max(np.abs(w)))
    scale = 1.0 + np.max(np.abs(w))
    assert psd_residual(w) <= 1e-12 * scale
    assert rank1_residual(w) <= 1e-7


def test_rank1_residual_detects_rank_two():
    assert rank1_residual(np.eye(3)) == pytest.approx(1.0)
    assert rank1_residual(np.diag([4.0, 1.0, 0.0])) == pytest.approx(0.25)
    assert rank1_residual(np.zeros((3, 3))) == 0.0


def test_psd_residual_reports_negative_eigenvalue():
    assert psd_residual(np.diag([1.0, -0.5])) == pytest.approx(0.5)
    assert psd_residual(np.eye(2)) == 0.0


@given(st.integers(1, 3).flatmap(cmatrices))
def test_real_embedding_doubles_spectrum(m):
    h = symmetrize(m)
    lam = np.sort(np.linalg.eigvalsh(h))
    emb = real_embedding(h)
    assert np.allclose(emb, emb.T)
    lam2 = np.sort(np.linalg.eigvalsh(emb))
    assert np.allclose(lam2, np.sort(np.repeat(lam, 2)), atol=1e-9 * (1 + np.abs(lam).max()))


def test_hermitian_view_round_trip():
    m = np.array([[2, 1 + 1j], [1 - 1j, 3]])
    hv = HermitianView.from_complex(m)
    assert np.array_equal(hv.complex, m)
    assert hv.shape == (2, 2)
    assert is_hermitian(m)
    assert not is_hermitian(np.array([[0, 1], [0, 0]], dtype=complex))


@settings(max_examples=60)
@given(st.integers(1, 3).flatmap(lambda n: cmatrices(n, scaled)))
def test_pinv_penrose_conditions(m):
    p = pinv(m)
    norm = np.linalg.norm(m)
    assert np.allclose(m @ p @ m, m, rtol=0, atol=1e-9 * norm)
    mp = m @ p
    assert np.allclose(mp.conj().T, mp, rtol=0, atol=1e-8)


def test_pinv_inverse_for_nonsingular_and_rank_deficient():
    z = np.array([[0.3 + 0.6j, 0.1 + 0.2j], [0.1 + 0.2j, 0.3 + 0.6j]])
    assert np.allclose(pinv(z) @ z, np.eye(2))
    sing = np.array([[1.0, 1.0], [1.0, 1.0]])
    assert np.allclose(pinv(sing), sing / 4)
    assert np.array_equal(pinv(np.zeros((2, 2))), np.zeros((2, 2)))


@given(st.floats(-1e4, 1e4, allow_nan=False))
def test_wrap_angle_range_and_congruence(t):
    w = wrap_angle(t)
    assert -np.pi < w <= np.pi
    k = (t - w) / (2 * np.pi)
    assert abs(k - round(k)) < 1e-9 * max(1.0, abs(t))


def test_wrap_angle_boundary():
    assert wrap_angle(np.pi) == np.pi
    assert wrap_angle(-np.pi) == np.pi
    assert np.allclose(wrap_angle(np.array([3 * np.pi, 0.5])), [np.pi, 0.5])
