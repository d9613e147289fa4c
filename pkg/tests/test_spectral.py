import numpy as np
import pytest

from gridfree import (
    AmbiguousSpectrumError,
    NumericalError,
    Scheme,
    SchemeConfig,
    Verdict,
    dominant_pole,
    eigendecompose,
    participation_factors,
    stability_margin,
    stability_verdict,
    system_matrix,
)
from gridfree.spectral import null_vector_error
from _util import system_draws


def _diag_spectrum(values):
    """Real normal form with the given (possibly complex-paired) eigenvalues."""
    blocks = []
    for v in values:
        v = complex(v)
        if v.imag > 0:
            blocks.append(np.array([[v.real, v.imag], [-v.imag, v.real]]))
        elif v.imag == 0:
            blocks.append(np.array([[v.real]]))
    n = sum(b.shape[0] for b in blocks)
    A = np.zeros((n, n))
    k = 0
    for b in blocks:
        m = b.shape[0]
        A[k:k + m, k:k + m] = b
        k += m
    return A


def test_zero_matrix():
    spec = eigendecompose(np.zeros((2, 2)))
    assert np.array_equal(spec.eigenvalues, [0, 0])
    assert stability_verdict(spec).verdict is Verdict.MARGINAL


def test_symmetric_2x2():
    spec = eigendecompose(np.array([[-2.0, 2.0], [2.0, -2.0]]))
    assert np.allclose(sorted(spec.eigenvalues.real), [-4, 0], atol=1e-15)
    phi = spec.right[:, spec.dominant_index]
    assert abs(abs(phi @ np.array([1, -1]) / np.sqrt(2)) - 1) < 1e-15
    assert abs(dominant_pole(spec) + 4) <= 4 * np.finfo(float).eps * 4
    assert abs(stability_margin(spec) - 4) <= 4 * np.finfo(float).eps * 4


def test_onapc_2x2_verdict():
    spec = eigendecompose(np.array([[-1.0, 2.0], [1.0, -2.0]]))
    rep = stability_verdict(spec, Scheme.O_NAPC)
    assert rep.verdict is Verdict.ASYMPTOTICALLY_STABLE
    assert rep.zero_count == 1
    assert abs(rep.margin - 3) < 1e-14


def test_anapc_2x2_verdict():
    spec = eigendecompose(np.array([[-0.75, 1.5], [0.75, -1.5]]))
    rep = stability_verdict(spec, Scheme.A_NAPC)
    assert rep.stable and rep.all_real
    assert abs(dominant_pole(spec) + 2.25) < 1e-14
    assert abs(stability_margin(spec) - 2.25) < 1e-14


def test_repeated_zero_is_marginal():
    rep = stability_verdict(eigendecompose(np.diag([0.0, 0.0, -1.0])))
    assert rep.verdict is Verdict.MARGINAL
    assert rep.zero_count == 2
    with pytest.raises(NumericalError):
        stability_margin(eigendecompose(np.diag([0.0, 0.0, -1.0])))


def test_unstable():
    rep = stability_verdict(eigendecompose(np.diag([0.0, 1.0, -1.0])))
    assert rep.verdict is Verdict.UNSTABLE


def test_ambiguous_zero_cluster():
    with pytest.raises(AmbiguousSpectrumError, match="ztol"):
        stability_verdict(eigendecompose(np.diag([0.0, -5e-8, -1.0])))


def test_complex_dominant_pair():
    spec = eigendecompose(_diag_spectrum([0.0, -3.0, complex(-0.5, 2.0)]))
    assert abs(dominant_pole(spec) - complex(-0.5, 2.0)) < 1e-14
    assert abs(stability_margin(spec) - 0.5) < 1e-14
    assert not stability_verdict(spec).all_real


def test_participation_symmetric():
    spec = eigendecompose(np.array([[-2.0, 2.0], [2.0, -2.0]]))
    P = participation_factors(spec)
    assert np.allclose(P, [0.5, 0.5], atol=1e-15)


def test_participation_symmetric_random():
    rng = np.random.default_rng(2)
    M = rng.normal(size=(5, 5))
    spec = eigendecompose(M + M.T)
    for k in range(5):
        P = participation_factors(spec, k)
        phi = spec.right[:, k].real
        assert np.allclose(P, phi**2 / (phi @ phi), atol=1e-12)
        assert abs(P.sum() - 1) < 1e-10


def _residue_participation(A, lam, radius):
    """diag of lim (z - lam)(zI - A)^-1, by a trapezoidal contour integral."""
    n = A.shape[0]
    m = 256
    acc = np.zeros(n, dtype=complex)
    for theta in 2 * np.pi * np.arange(m) / m:
        dz = radius * np.exp(1j * theta)
        z = lam + dz
        acc += np.diag(np.linalg.inv(z * np.eye(n) - A)) * dz
    return (acc / m).real


def test_participation_matches_resolvent_residue():
    for n, h, sys_ in system_draws(5, seed=21, n_range=(4, 4)):
        A = system_matrix(sys_.B, sys_.L_W, sys_.D_p, SchemeConfig(Scheme.O_NAPC, h=h)).A
        spec = eigendecompose(A)
        lam = spec.dominant
        gap = np.min(np.abs(np.delete(spec.eigenvalues, spec.dominant_index) - lam))
        P = participation_factors(spec)
        assert abs(P.sum() - 1) < 1e-10
        oracle = _residue_participation(A, lam, gap / 2)
        assert np.abs(P - oracle).max() < 1e-8


def test_defective_matrix_rejected():
    J = np.array([[-1.0, 1.0], [0.0, -1.0]])
    with pytest.raises(NumericalError):
        spec = eigendecompose(J)
        participation_factors(spec, 0)


def test_non_square_rejected():
    with pytest.raises(ValueError):
        eigendecompose(np.zeros((2, 3)))


def test_spectrum_residuals_and_biorthogonality():
    for n, h, sys_ in system_draws(20, seed=4, n_range=(3, 16)):
        A = system_matrix(sys_.B, sys_.L_W, sys_.D_p, SchemeConfig(Scheme.A_NAPC, h=h)).A
        spec = eigendecompose(A)
        rho = spec.spectral_radius
        V, U, lam = spec.right, spec.left, spec.eigenvalues
        assert np.abs(A @ V - V * lam).max() < 1e-8 * rho
        assert np.abs(U.T @ A - lam[:, None] * U.T).max() < 1e-8 * rho
        G = U.T @ V
        off = G - np.diag(np.diag(G))
        assert np.abs(off).max() < 1e-8 * np.abs(np.diag(G)).min() * 1e3


def test_dominant_pole_scale_invariance():
    for n, h, sys_ in system_draws(10, seed=12, n_range=(3, 10)):
        A = system_matrix(sys_.B, sys_.L_W, sys_.D_p, SchemeConfig(Scheme.O_NAPC, h=h)).A
        s1 = eigendecompose(A)
        s2 = eigendecompose(2.5 * A)
        assert abs(s2.dominant - 2.5 * s1.dominant) < 1e-9 * abs(s2.dominant)


def test_null_vector_error():
    A = np.array([[-1.0, 2.0], [1.0, -2.0]])
    assert null_vector_error(eigendecompose(A), [2.0, 1.0]) < 1e-15
