"""Plane-wave assembly and diagonalization of Bloch fiber operators.

Each fiber is h^2 (D - theta)^2 + V on the torus, discretized in the basis
exp(i mu(m) . x) with |m_k| <= M.  Multiplication operators become Toeplitz
gathers of Fourier coefficient tables; first-order gauge terms couple modes
m, m' with the symmetric weight (mu(m) - theta) + (mu(m') - theta).

Assemblers precompute the h- and theta-independent tables once, so sweeps
over Brillouin samples and semiclassical parameters reuse them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .gauge import GaugeField, ScalarBlock
from .lattice import BrillouinSample, Lattice, TorusGrid
from .potential import PauliPotential

_HERM_TOL = 1e-12
_TAIL_TOL = 1e-8


@dataclass
class PlaneWaveBasis:
    lattice: Lattice
    M: int
    modes: np.ndarray          # (N, n) integer mode vectors, lexicographic

    @property
    def size(self) -> int:
        return self.modes.shape[0]


def plane_wave_basis(lattice: Lattice, M: int) -> PlaneWaveBasis:
    if M < 1:
        raise ValueError("M must be positive")
    rng = np.arange(-M, M + 1)
    grids = np.meshgrid(*([rng] * lattice.dim), indexing="ij")
    modes = np.stack([g.reshape(-1) for g in grids], axis=-1)
    return PlaneWaveBasis(lattice=lattice, M=M, modes=modes)


def _dict_table(coeffs: dict, M: int, n: int) -> np.ndarray:
    """Dense (4M+1)^n coefficient table from a sparse dictionary."""
    table = np.zeros((4 * M + 1,) * n, dtype=complex)
    for m, c in coeffs.items():
        if all(abs(k) <= 2 * M for k in m):
            table[tuple(k + 2 * M for k in m)] = c
    return table


def _grid_table(grid: TorusGrid, field: np.ndarray, M: int) -> np.ndarray:
    """Coefficient table of a sampled field, zeroed on alias-ambiguous modes."""
    c = grid.coefficients(field)
    if grid.tail_maximum(c) > _TAIL_TOL:
        raise ValueError(
            f"field has unresolved Fourier tail {grid.tail_maximum(c):.3g} on P={grid.P}; increase P"
        )
    ks = np.arange(-2 * M, 2 * M + 1)
    keep = np.abs(ks) <= grid.P // 2 - 1
    pos = ks % grid.P
    table = c[np.ix_(*([pos] * grid.dim))]
    mask = np.ones((4 * M + 1,) * grid.dim, dtype=bool)
    for ax in range(grid.dim):
        shape = [1] * grid.dim
        shape[ax] = 4 * M + 1
        mask &= keep.reshape(shape)
    return np.where(mask, table, 0.0)


def _gather(table: np.ndarray, diffs: np.ndarray, M: int) -> np.ndarray:
    """Toeplitz block: entry (i, j) = table[modes_i - modes_j]."""
    idx = tuple(diffs[..., k] + 2 * M for k in range(diffs.shape[-1]))
    return table[idx]


def _merge(*terms) -> dict:
    """Sparse sum of (scale, coeff-dict) pairs."""
    out = {}
    for scale, d in terms:
        for m, c in d.items():
            out[m] = out.get(m, 0.0) + scale * c
    return out


def _hermitize(H: np.ndarray) -> np.ndarray:
    scale = max(1.0, float(np.max(np.abs(H))))
    err = float(np.max(np.abs(H - H.conj().T)))
    if err > _HERM_TOL * scale:
        raise ValueError(f"assembled fiber is not Hermitian (defect {err:.3g})")
    return 0.5 * (H + H.conj().T)


class DirectAssembler:
    """Fibers of h^2 (D - theta)^2 + v + w . sigma."""

    def __init__(self, pot: PauliPotential, basis: PlaneWaveBasis):
        self.basis = basis
        self.mu = basis.modes @ basis.lattice.dual
        M, n = basis.M, basis.lattice.dim
        diffs = basis.modes[:, None, :] - basis.modes[None, :, :]
        v = pot.v.coeffs
        w1, w2, w3 = (c.coeffs for c in pot.w)
        self.B00 = _gather(_dict_table(_merge((1, v), (1, w3)), M, n), diffs, M)
        self.B11 = _gather(_dict_table(_merge((1, v), (-1, w3)), M, n), diffs, M)
        self.B01 = _gather(_dict_table(_merge((1, w1), (-1j, w2)), M, n), diffs, M)
        self.B10 = _gather(_dict_table(_merge((1, w1), (1j, w2)), M, n), diffs, M)

    def matrix(self, h: float, theta) -> np.ndarray:
        q = self.mu - np.atleast_1d(np.asarray(theta, dtype=float))
        kin = h ** 2 * np.sum(q ** 2, axis=-1)
        N = self.basis.size
        H = np.block([[self.B00 + np.diag(kin), self.B01],
                      [self.B10, self.B11 + np.diag(kin)]])
        return _hermitize(H)


class GaugedAssembler:
    """Fibers of the conjugated operator h^2 (D - theta - A)^2 + diag(v -+ |w|)."""

    def __init__(self, g: GaugeField, basis: PlaneWaveBasis):
        self.basis = basis
        self.mu = basis.modes @ basis.lattice.dual
        grid = g.grid
        M, n = basis.M, basis.lattice.dim
        diffs = basis.modes[:, None, :] - basis.modes[None, :, :]
        def tab(field):
            return _gather(_grid_table(grid, field, M), diffs, M)
        self.A00 = [tab(g.a_vec[k, ..., 2]) for k in range(n)]
        self.A01 = [tab(g.a_vec[k, ..., 0] - 1j * g.a_vec[k, ..., 1]) for k in range(n)]
        self.A10 = [tab(g.a_vec[k, ..., 0] + 1j * g.a_vec[k, ..., 1]) for k in range(n)]
        asq = np.sum(g.a_vec ** 2, axis=(0, -1))      # sum_k A_k^2 is this scalar
        self.Q = tab(asq)
        self.Vm = tab(g.v_minus)
        self.Vp = tab(g.v_plus)

    def matrix(self, h: float, theta) -> np.ndarray:
        q = self.mu - np.atleast_1d(np.asarray(theta, dtype=float))
        kin = np.diag(h ** 2 * np.sum(q ** 2, axis=-1))
        n = q.shape[1]
        first00 = np.zeros_like(self.Q)
        first01 = np.zeros_like(self.Q)
        first10 = np.zeros_like(self.Q)
        for k in range(n):
            bracket = q[:, None, k] + q[None, :, k]
            first00 = first00 + bracket * self.A00[k]
            first01 = first01 + bracket * self.A01[k]
            first10 = first10 + bracket * self.A10[k]
        h2 = h ** 2
        H = np.block([
            [kin + self.Vm + h2 * (self.Q - first00), -h2 * first01],
            [-h2 * first10, kin + self.Vp + h2 * (self.Q + first00)],
        ])
        return _hermitize(H)


class ScalarAssembler:
    """Fibers of one diagonal block h^2 (D - theta - a)^2 + v + h^2 r."""

    def __init__(self, block: ScalarBlock, basis: PlaneWaveBasis,
                 include_residual: bool = True):
        self.basis = basis
        self.mu = basis.modes @ basis.lattice.dual
        grid = block.grid
        M, n = basis.M, basis.lattice.dim
        diffs = basis.modes[:, None, :] - basis.modes[None, :, :]
        def tab(field):
            return _gather(_grid_table(grid, field, M), diffs, M)
        self.A = [tab(block.a[k]) for k in range(n)]
        quad = np.sum(block.a ** 2, axis=0)
        if include_residual:
            quad = quad + block.r
        self.Q = tab(quad)
        self.V = tab(block.v)

    def matrix(self, h: float, theta) -> np.ndarray:
        q = self.mu - np.atleast_1d(np.asarray(theta, dtype=float))
        H = np.diag(h ** 2 * np.sum(q ** 2, axis=-1)).astype(complex)
        H += self.V + h ** 2 * self.Q
        for k in range(q.shape[1]):
            bracket = q[:, None, k] + q[None, :, k]
            H -= h ** 2 * bracket * self.A[k]
        return _hermitize(H)


def lowest_eigenvalues(H: np.ndarray, count: int, residual_tol: float = 1e-9) -> np.ndarray:
    """Lowest eigenvalues with an explicit residual check on each pair."""
    vals, vecs = scipy.linalg.eigh(H)
    count = min(count, len(vals))
    lam = vals[:count]
    V = vecs[:, :count]
    res = np.max(np.abs(H @ V - V * lam), axis=0)
    bound = residual_tol * np.maximum(1.0, np.abs(lam))
    if np.any(res > bound):
        raise ValueError(f"eigenpair residual {res.max():.3g} exceeds tolerance")
    return lam


def band_sweep(assembler, h: float, sample: BrillouinSample, count: int) -> np.ndarray:
    """Lowest `count` eigenvalues on each Brillouin node; shape (K^n, count)."""
    thetas = sample.thetas()
    out = np.empty((thetas.shape[0], count))
    for i, th in enumerate(thetas):
        out[i] = lowest_eigenvalues(assembler.matrix(h, th), count)
    return out
