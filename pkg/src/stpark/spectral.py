"""Orthonormal DCT-II / DCT-III along one axis, and path-graph Laplacian oracles.

The DCT-II basis diagonalises the Laplacian of an unweighted path graph, so
``idct2(lam * dct2(x))`` with ``lam_k = 2 - 2 cos(pi k / n)`` is exactly
``L @ x``. That identity is what lets the model's cosine operator stand in
for learned Laplacian diffusion over the node axis.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, as_tensor, linear_along_axis, mul


@functools.lru_cache(maxsize=32)
def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix ``D`` with ``X = D @ x``. Read-only, cached per ``n``."""
    if n < 1:
        raise ValueError("DCT length must be at least 1")
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    d = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * m + 1) * k / (2 * n))
    d[0] /= np.sqrt(2.0)
    d.setflags(write=False)
    return d


@functools.lru_cache(maxsize=32)
def idct_matrix(n: int) -> np.ndarray:
    d = np.ascontiguousarray(dct_matrix(n).T)
    d.setflags(write=False)
    return d


def dct2(x, axis: int = -1) -> Tensor:
    """Orthonormal DCT-II along ``axis``. Differentiable; the adjoint is ``idct2``."""
    x = as_tensor(x)
    n = x.shape[axis]
    return linear_along_axis(x, dct_matrix(n), axis)


def idct2(x, axis: int = -1) -> Tensor:
    """Inverse of :func:`dct2` (orthonormal DCT-III)."""
    x = as_tensor(x)
    n = x.shape[axis]
    return linear_along_axis(x, idct_matrix(n), axis)


def path_eigenvalues(n: int) -> np.ndarray:
    """Eigenvalues of the n-node path-graph Laplacian, ordered to match DCT-II modes."""
    if n < 1:
        raise ValueError("need at least one node")
    return 2.0 - 2.0 * np.cos(np.pi * np.arange(n) / n)


def path_laplacian(n: int) -> np.ndarray:
    """Dense ``D - A`` for the unweighted path graph on ``n`` nodes."""
    if n < 2:
        raise ValueError("path Laplacian needs n >= 2")
    lap = np.diag(np.full(n, 2.0)) - np.eye(n, k=1) - np.eye(n, k=-1)
    lap[0, 0] = lap[-1, -1] = 1.0
    return lap


def path_laplacian_apply(x) -> np.ndarray:
    """``(L x)_i = deg(i) x_i - sum_{j~i} x_j`` on the path graph, computed stencil-wise."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 2:
        raise ValueError("path Laplacian needs n >= 2")
    out = np.empty_like(x)
    out[0] = x[0] - x[1]
    out[-1] = x[-1] - x[-2]
    out[1:-1] = 2.0 * x[1:-1] - x[:-2] - x[2:]
    return out


def spectral_laplacian_apply(x, eigenvalues=None) -> np.ndarray:
    """Laplacian action computed in the cosine basis: ``idct2(lam * dct2(x))``."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    lam = path_eigenvalues(n) if eigenvalues is None else np.asarray(eigenvalues, dtype=np.float64)
    if lam.shape[0] != n:
        raise ValueError(f"{lam.shape[0]} eigenvalues for a length-{n} signal")
    coeffs = dct2(x, axis=0).data
    scaled = coeffs * lam.reshape((n,) + (1,) * (x.ndim - 1))
    return idct2(scaled, axis=0).data


def truncate_modes(x, k_modes: int, axis: int = -1) -> Tensor:
    """Zero every coefficient with index >= ``k_modes`` along ``axis``."""
    x = as_tensor(x)
    n = x.shape[axis]
    if not 1 <= k_modes <= n:
        raise ValueError(f"k_modes={k_modes} outside [1, {n}]")
    if k_modes == n:
        return x
    keep = np.zeros(n)
    keep[:k_modes] = 1.0
    shape = [1] * x.ndim
    shape[axis] = n
    return mul(x, keep.reshape(shape))


@dataclass(frozen=True)
class SpectralBasis:
    n_nodes: int
    k_modes: int

    def __post_init__(self):
        if not 1 <= self.k_modes <= self.n_nodes:
            raise ValueError(f"k_modes={self.k_modes} outside [1, {self.n_nodes}]")

    @property
    def eigenvalues(self) -> np.ndarray:
        return path_eigenvalues(self.n_nodes)
