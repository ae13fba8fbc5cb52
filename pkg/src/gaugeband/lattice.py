"""Bravais lattices, fundamental-cell folding, sampling grids.

Conventions used throughout the package:

* a lattice is stored as an (n, n) array whose *rows* are the primitive
  vectors beta_k;
* the dual basis rows satisfy  dual[j] . basis[k] = 2 pi delta_jk;
* real-space sampling grids live on the cell  x = sum_k (p_k / P) beta_k
  with p_k in {0, ..., P-1}, which is the natural layout for the FFT;
* Brillouin samples are stored in reduced coordinates t with
  theta = sum_k t_k dual[k]  and  t_k in (-1/2, 1/2].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def dual_basis(basis: np.ndarray) -> np.ndarray:
    """Return the dual basis (rows) of a primitive basis given by rows.

    Raises ValueError for a singular or badly conditioned basis.
    """
    basis = np.asarray(basis, dtype=float)
    if basis.ndim != 2 or basis.shape[0] != basis.shape[1]:
        raise ValueError(f"basis must be square, got shape {basis.shape}")
    if not np.all(np.isfinite(basis)):
        raise ValueError("basis contains non-finite entries")
    cond = np.linalg.cond(basis)
    if not np.isfinite(cond) or cond > 1e12:
        raise ValueError(f"degenerate lattice basis (condition number {cond:.3g})")
    return 2.0 * np.pi * np.linalg.inv(basis).T


@dataclass(frozen=True)
class Lattice:
    """A Bravais lattice in dimension n (n = 1 or 2 in practice)."""

    basis: np.ndarray
    dual: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        basis = np.atleast_2d(np.asarray(self.basis, dtype=float))
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "dual", dual_basis(basis))

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def to_fractional(self, x: np.ndarray) -> np.ndarray:
        """Coordinates s with x = sum_k s_k beta_k (last axis is the vector)."""
        x = np.asarray(x, dtype=float)
        return x @ np.linalg.inv(self.basis)

    def from_fractional(self, s: np.ndarray) -> np.ndarray:
        return np.asarray(s, dtype=float) @ self.basis

    def dual_vector(self, m) -> np.ndarray:
        """mu(m) = sum_k m_k dual[k] for an integer index vector m."""
        return np.asarray(m, dtype=float) @ self.dual


def fold_to_cell(lattice: Lattice, x: np.ndarray) -> np.ndarray:
    """Fold points into the centered cell, fractional coords in [-1/2, 1/2).

    The boundary maps to the -1/2 side: in 1d with period 2 pi the point
    x = pi folds to -pi.
    """
    s = lattice.to_fractional(x)
    s = (s + 0.5) % 1.0 - 0.5
    return lattice.from_fractional(s)


@dataclass(frozen=True)
class BrillouinSample:
    """Uniform sample of the Brillouin torus in reduced coordinates.

    ``tgrid`` has shape (K^n, n); row i holds the reduced coordinates of
    sample point i, each component in (-1/2, 1/2].
    """

    lattice: Lattice
    K: int
    tgrid: np.ndarray

    def thetas(self) -> np.ndarray:
        """Physical quasimomenta theta = t @ dual, shape (K^n, n)."""
        return self.tgrid @ self.lattice.dual


def brillouin_grid(lattice: Lattice, K: int) -> BrillouinSample:
    """K uniformly spaced reduced coordinates per axis, t = j / K.

    For odd K the sample is symmetric about 0; for even K it contains both
    t = 0 and the edge t = 1/2 (and the set stays inside (-1/2, 1/2]).
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    js = np.arange(K) - (K - 1) // 2
    axes = [js / float(K)] * lattice.dim
    mesh = np.meshgrid(*axes, indexing="ij")
    tgrid = np.stack([m.ravel() for m in mesh], axis=-1)
    return BrillouinSample(lattice=lattice, K=K, tgrid=tgrid)


class TorusGrid:
    """P^n-point FFT sampling grid on the fundamental cell.

    P must be a power of two.  Nodes are x = sum_k (p_k / P) beta_k; node 0
    is the origin.  The grid owns its integer Fourier indices and the
    associated Cartesian wave vectors, and provides exact spectral calculus
    for fields sampled on it.
    """

    def __init__(self, lattice: Lattice, P: int):
        if P < 2 or (P & (P - 1)) != 0:
            raise ValueError(f"P must be a power of two >= 2, got {P}")
        self.lattice = lattice
        self.P = int(P)
        n = lattice.dim
        self.shape = (self.P,) * n
        frac = np.arange(self.P) / float(self.P)
        mesh = np.meshgrid(*([frac] * n), indexing="ij")
        s = np.stack(mesh, axis=-1)  # (*shape, n)
        self.nodes = s @ lattice.basis
        # integer FFT indices per axis, fftfreq layout
        k = np.fft.fftfreq(self.P, d=1.0 / self.P).astype(int)
        kmesh = np.meshgrid(*([k] * n), indexing="ij")
        self.index_grid = np.stack(kmesh, axis=-1)  # (*shape, n), integers
        # Cartesian wave vector mu(m) at every FFT index
        self.mu_grid = self.index_grid @ lattice.dual  # (*shape, n)

    @property
    def dim(self) -> int:
        return self.lattice.dim

    @property
    def origin_index(self):
        return (0,) * self.dim

    def coefficients(self, values: np.ndarray) -> np.ndarray:
        """Fourier coefficients of a sampled field, c[m] at index_grid m."""
        values = np.asarray(values)
        return np.fft.fftn(values, axes=range(-self.dim, 0)) / self.P**self.dim

    def from_coefficients(self, coeffs: np.ndarray) -> np.ndarray:
        return np.fft.ifftn(coeffs, axes=range(-self.dim, 0)) * self.P**self.dim

    def derivative(self, values: np.ndarray, axis: int) -> np.ndarray:
        """Spectral partial derivative along Cartesian axis of a sampled field."""
        c = self.coefficients(values)
        c = c * (1j * self.mu_grid[..., axis])
        out = self.from_coefficients(c)
        if np.isrealobj(values):
            return out.real
        return out

    def gradient(self, values: np.ndarray) -> np.ndarray:
        """All Cartesian partials, stacked on a leading axis of length n."""
        return np.stack([self.derivative(values, k) for k in range(self.dim)])

    def tail_maximum(self, coeffs: np.ndarray) -> float:
        """Largest coefficient magnitude in the top Nyquist shell.

        Used as a resolution check: smooth fields resolved by the grid have
        a negligible tail here.
        """
        c = np.abs(np.asarray(coeffs))
        half = self.P // 2
        mask = np.zeros(self.shape, dtype=bool)
        for ax in range(self.dim):
            idx = np.abs(self.index_grid[..., ax])
            mask |= idx >= half - 1
        return float(c[mask].max())
