import numpy as np
import pytest
import scipy.fft
from hypothesis import given, settings, strategies as st

from stpark import spectral as sp
from stpark.autodiff import Tensor, finite_diff_check


def dct_by_definition(x):
    n = len(x)
    out = np.zeros(n)
    for k in range(n):
        c = np.sqrt(0.5) if k == 0 else 1.0
        total = 0.0
        for m in range(n):
            total += x[m] * np.cos(np.pi * (2 * m + 1) * k / (2 * n))
        out[k] = c * np.sqrt(2.0 / n) * total
    return out


def test_constant_signal_dc_only():
    np.testing.assert_allclose(sp.dct2(np.ones(4)).data, [2, 0, 0, 0], atol=1e-15)
    np.testing.assert_allclose(sp.idct2(np.array([2.0, 0, 0, 0])).data, [1, 1, 1, 1], atol=1e-15)


def test_unit_impulse_matches_definition():
    e0 = np.eye(4)[0]
    np.testing.assert_allclose(sp.dct2(e0).data, dct_by_definition(e0), atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3, 7, 16, 33, 64])
def test_definition_and_matrix_oracles(n):
    rng = np.random.default_rng(n)
    x = rng.normal(size=n)
    np.testing.assert_allclose(sp.dct2(x).data, dct_by_definition(x), rtol=0, atol=1e-12)
    explicit = np.array([dct_by_definition(e) for e in np.eye(n)]).T
    inverse = explicit.T
    np.testing.assert_allclose(inverse @ explicit, np.eye(n), atol=1e-12)
    np.testing.assert_allclose(sp.idct_matrix(n) @ sp.dct_matrix(n), np.eye(n), atol=1e-12)


@pytest.mark.parametrize("n", [1, 5, 128, 1688])
def test_matches_scipy_fft(n):
    x = np.random.default_rng(n).normal(size=(3, n))
    np.testing.assert_allclose(sp.dct2(x).data, scipy.fft.dct(x, type=2, norm="ortho"), atol=1e-10)
    np.testing.assert_allclose(sp.idct2(x).data, scipy.fft.idct(x, type=2, norm="ortho"), atol=1e-10)


def test_roundtrip_and_linearity():
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(2, 50))
    np.testing.assert_allclose(sp.idct2(sp.dct2(x)).data, x, atol=1e-10)
    a, b = 1.7, -0.3
    lhs = sp.idct2(a * x + b * y).data
    rhs = a * sp.idct2(x).data + b * sp.idct2(y).data
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_zero_length_rejected():
    with pytest.raises(ValueError):
        sp.dct_matrix(0)


def test_axis_argument():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(3, 6, 2))
    got = sp.dct2(x, axis=1).data
    for i in range(3):
        for c in range(2):
            np.testing.assert_allclose(got[i, :, c], dct_by_definition(x[i, :, c]), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 80), st.integers(0, 2**31 - 1))
def test_parseval(n, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(2, n))
    assert abs(sp.dct2(x).data @ sp.dct2(y).data - x @ y) < 1e-10


def test_dct_backward_is_idct():
    rng = np.random.default_rng(2)
    x = Tensor(rng.normal(size=(2, 9)), requires_grad=True)
    g = rng.normal(size=(2, 9))
    (sp.dct2(x, axis=1) * g).sum().backward()
    np.testing.assert_allclose(x.grad, sp.idct2(g, axis=1).data, atol=1e-14)
    assert finite_diff_check(lambda: (sp.dct2(x, axis=1) * g).sum(), [x]) < 1e-6


def test_path_laplacian_examples():
    np.testing.assert_array_equal(sp.path_laplacian_apply([1.0, 0.0]), [1.0, -1.0])
    np.testing.assert_allclose(sp.path_laplacian_apply(np.full(5, 3.2)), 0.0, atol=1e-15)
    x = np.random.default_rng(3).normal(size=8)
    np.testing.assert_allclose(sp.path_laplacian_apply(x), sp.path_laplacian(8) @ x, atol=1e-12)
    with pytest.raises(ValueError):
        sp.path_laplacian_apply([1.0])


def test_path_eigenvalues_match_dense_matrix():
    for n in (2, 5, 12):
        np.testing.assert_allclose(np.linalg.eigvalsh(sp.path_laplacian(n)), sp.path_eigenvalues(n), atol=1e-12)
    lam = sp.path_eigenvalues(10)
    assert lam[0] == 0.0 and np.all(np.diff(lam) >= 0)


def test_spectral_laplacian_examples():
    np.testing.assert_allclose(sp.spectral_laplacian_apply(np.ones(7)), 0.0, atol=1e-12)
    np.testing.assert_allclose(sp.spectral_laplacian_apply([1.0, 0.0]), [1.0, -1.0], atol=1e-12)
    x = np.random.default_rng(4).normal(size=32)
    assert np.max(np.abs(sp.spectral_laplacian_apply(x) - sp.path_laplacian_apply(x))) < 1e-9
    with pytest.raises(ValueError):
        sp.spectral_laplacian_apply(np.ones(4), eigenvalues=np.ones(3))


def test_truncate_modes():
    rng = np.random.default_rng(5)
    x = rng.normal(size=9)
    coeffs = sp.dct2(x)
    assert sp.truncate_modes(coeffs, 9) is coeffs
    dc_only = sp.idct2(sp.truncate_modes(coeffs, 1)).data
    np.testing.assert_allclose(dc_only, np.full(9, x.mean()), atol=1e-12)
    for k in range(1, 10):
        t = sp.truncate_modes(coeffs, k).data
        assert np.sum(sp.idct2(t).data ** 2) <= np.sum(x ** 2) + 1e-12
        np.testing.assert_array_equal(sp.truncate_modes(t, k).data, t)
    with pytest.raises(ValueError):
        sp.truncate_modes(coeffs, 0)
    with pytest.raises(ValueError):
        sp.truncate_modes(coeffs, 10)


def test_spectral_basis_invariants():
    basis = sp.SpectralBasis(n_nodes=5, k_modes=5)
    np.testing.assert_allclose(basis.eigenvalues, 2 - 2 * np.cos(np.pi * np.arange(5) / 5))
    with pytest.raises(ValueError):
        sp.SpectralBasis(n_nodes=5, k_modes=6)
