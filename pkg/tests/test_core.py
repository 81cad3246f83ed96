import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from retrace_sde.core import (check_hurwitz, definiteness, is_symmetric, lyapunov_residual, make_rng,
                              project_psd, sample_gaussian, solve_lyapunov, sqrt_factor, symmetrize)
from retrace_sde.errors import FactorizationFailure, NonHurwitz


def lyapunov_by_elimination(A, H):
    """Independent oracle: assemble the d^2 linear system entry by entry."""
    d = A.shape[0]
    n = d * d
    L = np.zeros((n, n))
    rhs = np.zeros(n)
    idx = lambda i, j: i * d + j  # row-major, unlike the package
    for i in range(d):
        for j in range(d):
            r = idx(i, j)
            rhs[r] = -H[i, j]
            for k in range(d):
                L[r, idx(k, j)] += A[i, k]  # (A S)_ij
                L[r, idx(i, k)] += A[j, k]  # (S A^T)_ij
    return np.linalg.solve(L, rhs).reshape(d, d)


def random_stable(d, rng):
    M = rng.standard_normal((d, d))
    return M - (np.max(np.linalg.eigvals(M).real) + rng.uniform(0.1, 1.0)) * np.eye(d)


def test_make_rng_determinism_and_streams():
    a = make_rng(3, 1, 2).standard_normal(5)
    b = make_rng(3, 1, 2).standard_normal(5)
    c = make_rng(3, 1, 3).standard_normal(5)
    assert np.array_equal(a, b)
    assert not np.allclose(a, c)
    g = make_rng(0)
    assert make_rng(g) is g
    with pytest.raises(ValueError):
        make_rng(g, 1)


def test_symmetry_helpers():
    S = np.array([[1.0, 2.0], [0.0, 1.0]])
    assert is_symmetric(symmetrize(S))
    assert not is_symmetric(S)
    assert definiteness(np.eye(2)) == "PD"
    assert definiteness(np.diag([1.0, 0.0])) == "PSD"
    assert definiteness(np.diag([1.0, -1.0])) == "indefinite"


def test_check_hurwitz():
    check_hurwitz(-np.eye(2))
    with pytest.raises(NonHurwitz):
        check_hurwitz(np.zeros((2, 2)))
    with pytest.raises(NonHurwitz):
        solve_lyapunov(np.array([[0.1]]), np.eye(1))


def test_lyapunov_scalar_closed_form():
    S = solve_lyapunov(np.array([[-2.0]]), np.array([[3.0]]))
    assert S[0, 0] == pytest.approx(0.75)


@pytest.mark.parametrize("d", [1, 2, 3, 5, 8])
def test_lyapunov_matches_elimination_oracle(d, rng):
    A = random_stable(d, rng)
    G = rng.standard_normal((d, d))
    H = G @ G.T
    S = solve_lyapunov(A, H)
    np.testing.assert_allclose(S, lyapunov_by_elimination(A, H), rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(S, solve_lyapunov(A, H, "bartels-stewart"), rtol=1e-9, atol=1e-12)
    assert is_symmetric(S)
    assert lyapunov_residual(A, S, H) <= 1e-10 * max(1.0, np.linalg.norm(H))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_lyapunov_residual_property(d, seed):
    r = np.random.default_rng(seed)
    A = random_stable(d, r)
    G = r.standard_normal((d, d))
    H = G @ G.T
    S = solve_lyapunov(A, H)
    assert lyapunov_residual(A, S, H) <= 1e-9 * max(1.0, np.linalg.norm(H))
    assert definiteness(S, 1e-10) in ("PD", "PSD")


def test_project_psd():
    S = np.diag([2.0, -1.0])
    P = project_psd(S, 1e-3)
    np.testing.assert_allclose(np.linalg.eigvalsh(P), [1e-3, 2.0])
    np.testing.assert_array_equal(project_psd(P, 1e-3), P)
    good = np.array([[2.0, 0.5], [0.5, 1.0]])
    np.testing.assert_array_equal(project_psd(good), good)


def test_sqrt_factor_and_sampling(rng):
    C = np.array([[2.0, 0.3], [0.3, 0.5]])
    L = sqrt_factor(C)
    np.testing.assert_allclose(L @ L.T, C, atol=1e-12)
    with pytest.raises(FactorizationFailure):
        sqrt_factor(np.diag([1.0, -1.0]))
    x = sample_gaussian([1.0, -1.0], C, 200_000, rng)
    assert x.shape == (200_000, 2)
    np.testing.assert_allclose(x.mean(0), [1.0, -1.0], atol=0.01)
    np.testing.assert_allclose(np.cov(x.T), C, atol=0.02)
    # singular but PSD covariance is allowed
    y = sample_gaussian([0.0, 0.0], np.diag([1.0, 0.0]), 10, rng)
    assert np.all(y[:, 1] == 0.0)


def test_lyapunov_trivial_examples():
    np.testing.assert_allclose(solve_lyapunov(np.array([[-1.0]]), np.array([[2.0]])), [[1.0]])
    np.testing.assert_allclose(solve_lyapunov(-np.eye(2), np.eye(2)), 0.5 * np.eye(2), atol=1e-15)


def test_project_psd_examples(rng):
    np.testing.assert_array_equal(project_psd(np.diag([2.0, 1.0])), np.diag([2.0, 1.0]))
    np.testing.assert_allclose(project_psd(np.diag([1.0, -0.5])), np.diag([1.0, 1e-8]), atol=1e-15)
    M = rng.standard_normal((4, 4))
    S = symmetrize(M)
    w, V = np.linalg.eig(S)  # general eigensolver as the independent oracle
    ref = (V.real * np.maximum(w.real, 1e-8)) @ V.real.T
    np.testing.assert_allclose(project_psd(S), ref, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_project_psd_floor_property(d, seed):
    M = np.random.default_rng(seed).standard_normal((d, d)) * 3
    assert np.linalg.eigvalsh(project_psd(symmetrize(M))).min() >= 1e-8 - 1e-14


def test_sample_gaussian_examples():
    z = sample_gaussian([1.0, 2.0], np.zeros((2, 2)), 5, make_rng(0))
    np.testing.assert_array_equal(z, np.tile([1.0, 2.0], (5, 1)))
    x = sample_gaussian([0.0, 0.0], np.eye(2), 100_000, make_rng(1))
    assert np.abs(np.cov(x.T) - np.eye(2)).max() <= 0.05
    np.testing.assert_array_equal(sample_gaussian([0.0], np.eye(1), 4, make_rng(2)),
                                  sample_gaussian([0.0], np.eye(1), 4, make_rng(2)))
