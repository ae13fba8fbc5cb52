"""Pointwise spin diagonalization and the induced magnetic connection.

A smooth periodic unitary U(x) sends the lower eigenvector of w(x) . sigma
to the first coordinate axis.  Conjugating h^2 D^2 + v + w . sigma by U
produces a diagonal potential and the connection A_k = i U* (d_k U), a
Hermitian traceless matrix field.  The sum over k of A_k^2 is scalar, so
each diagonal block of the conjugated operator is an exact scalar magnetic
Schroedinger operator once the off-diagonal coupling |a_k,21|^2 is folded
into the potential.

All fields live on a TorusGrid and derivatives are spectral.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import TorusGrid
from .potential import SIGMA, PauliPotential

_SIGMA_ARR = np.stack(SIGMA)


def smoothstep(u):
    """C-infinity step: 0 for u <= 0, 1 for u >= 1, strictly monotone between."""
    u = np.asarray(u, dtype=float)
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    def g(t):
        out = np.zeros_like(t)
        pos = t > 0
        out[pos] = np.exp(-1.0 / t[pos])
        return out
    a = g(u)
    b = g(1.0 - u)
    out = a / (a + b)
    return float(out[0]) if scalar else out


def cutoff(t):
    """Smooth even cutoff: 1 for |t| <= 1/4, 0 for |t| >= 1/2."""
    return smoothstep(2.0 - 4.0 * np.abs(np.asarray(t, dtype=float)))


@dataclass
class UnitaryFrame:
    grid: TorusGrid
    branch: str
    alpha: np.ndarray
    beta: np.ndarray
    rho: np.ndarray
    delta: np.ndarray
    matrix: np.ndarray          # (...,2,2)
    unitarity_error: float


@dataclass
class GaugeField:
    pot: PauliPotential
    grid: TorusGrid
    frame: UnitaryFrame
    a_vec: np.ndarray           # (n,) + shape + (3,): Pauli components of A_k
    a11: np.ndarray             # (n,) + shape, real diagonal gauge potentials
    a21: np.ndarray             # (n,) + shape, complex off-diagonal couplings
    r_block: np.ndarray         # scalar residual entering the lower block
    r_block_upper: np.ndarray
    v_minus: np.ndarray         # v - |w| on the grid
    v_plus: np.ndarray          # v + |w| on the grid
    residual_max: float         # literal conjugation remainder (identically 0)
    formula_error: float        # wedge formula vs i U* dU
    hermiticity_error: float
    tail: float
    psi: np.ndarray | None = None


def _spin_samples(pot: PauliPotential, grid: TorusGrid):
    w = [c.sample(grid) for c in pot.w]
    wn = np.sqrt(w[0] ** 2 + w[1] ** 2 + w[2] ** 2)
    if wn.min() <= 1e-12 * max(wn.max(), 1.0):
        raise ValueError(
            f"spin field magnitude vanishes on the grid (min |w| = {wn.min():.3g}); "
            "the two-band gap assumption fails"
        )
    return w, wn


def build_unitary(pot: PauliPotential, grid: TorusGrid, branch: str = "auto") -> UnitaryFrame:
    """Construct the diagonalizing frame U = (alpha, beta, rho) . sigma + i delta.

    branch "delta0" uses the real frame with delta = 0, available only when
    |w| - w3 stays away from zero; "general" uses a transition function in
    the spin direction and works whenever |w| > 0; "auto" prefers "delta0"
    when it is safe.
    """
    w, wn = _spin_samples(pot, grid)
    w1, w2, w3 = w
    margin = (wn - w3).min()
    if branch == "auto":
        branch = "delta0" if margin > 1e-6 * wn.max() else "general"
    if branch == "delta0":
        if margin <= 1e-6 * wn.max():
            raise ValueError(
                f"delta0 frame unavailable: min(|w| - w3) = {margin:.3g}; use branch='general'"
            )
        root = np.sqrt(wn - w3)
        pref = 1.0 / np.sqrt(2.0 * wn)
        alpha = -w1 * pref / root
        beta = -w2 * pref / root
        rho = root * pref
        delta = np.zeros_like(rho)
    elif branch == "general":
        ratio = (w2 ** 2 + w3 ** 2) / wn ** 2
        theta = cutoff(ratio) * (np.pi / 2.0)
        phase = np.exp(1j * theta)
        xi = w1 * np.cos(theta) + w2 * np.sin(theta)
        den = wn * (wn - xi)
        if den.min() <= 1e-6 * wn.max() ** 2:
            raise ValueError(
                f"frame denominator vanishes (min = {den.min():.3g}); "
                "the transition did not steer clear of the first spin axis"
            )
        u11 = (w3 - wn + phase * (w1 - 1j * w2)) / (2.0 * np.sqrt(den))
        u21 = (w1 + 1j * w2 - phase * (w3 + wn)) / (2.0 * np.sqrt(den))
        rho = u11.real
        delta = u11.imag
        alpha = u21.real
        beta = u21.imag
    else:
        raise ValueError(f"unknown branch {branch!r}")
    U = np.zeros(grid.shape + (2, 2), dtype=complex)
    U[..., 0, 0] = rho + 1j * delta
    U[..., 0, 1] = alpha - 1j * beta
    U[..., 1, 0] = alpha + 1j * beta
    U[..., 1, 1] = -rho + 1j * delta
    gram = np.einsum("...ji,...jk->...ik", U.conj(), U)
    uerr = float(np.max(np.abs(gram - np.eye(2))))
    return UnitaryFrame(grid=grid, branch=branch, alpha=alpha, beta=beta,
                        rho=rho, delta=delta, matrix=U, unitarity_error=uerr)


def induced_gauge(pot: PauliPotential, grid: TorusGrid, branch: str = "auto",
                  tail_tol: float = 1e-8, formula_tol: float = 1e-8) -> GaugeField:
    """Compute the connection A_k = i U* d_k U and the block data it induces.

    A_k is evaluated two ways: by the closed wedge expression in the frame
    components and directly from spectral derivatives of U.  Disagreement
    beyond formula_tol, or an unresolved Fourier tail, raises.
    """
    frame = build_unitary(pot, grid, branch)
    n = grid.dim
    U = frame.matrix
    comp_tail = max(grid.tail_maximum(grid.coefficients(f))
                    for f in (frame.alpha, frame.beta, frame.rho, frame.delta))
    if comp_tail > tail_tol:
        raise ValueError(
            f"frame components unresolved on P={grid.P} grid (tail {comp_tail:.3g}); increase P"
        )
    v3 = np.stack([frame.alpha, frame.beta, frame.rho], axis=-1)
    a_vec = np.empty((n,) + grid.shape + (3,))
    dU = np.empty((n,) + U.shape, dtype=complex)
    for k in range(n):
        dv = np.stack([grid.derivative(frame.alpha, k),
                       grid.derivative(frame.beta, k),
                       grid.derivative(frame.rho, k)], axis=-1)
        dd = grid.derivative(frame.delta, k)
        a_vec[k] = np.cross(dv, v3) + frame.delta[..., None] * dv - v3 * dd[..., None]
        for i in range(2):
            for j in range(2):
                dU[k, ..., i, j] = grid.derivative(U[..., i, j], k)
    A_wedge = np.einsum("k...j,jab->k...ab", a_vec, _SIGMA_ARR)
    M = np.einsum("...ji,k...jl->k...il", U.conj(), dU)       # U* dU
    A_direct = 1j * M
    formula_error = float(np.max(np.abs(A_wedge - A_direct)))
    herm = float(np.max(np.abs(A_direct - A_direct.conj().swapaxes(-1, -2))))
    if formula_error > formula_tol:
        raise ValueError(
            f"connection formula mismatch {formula_error:.3g} exceeds {formula_tol:.1g}; "
            "if the frame tail is marginal, increase P"
        )
    # literal conjugation remainder; vanishes identically because U is unitary
    R = np.einsum("k...ij,k...jl->...il", M, M)
    R = R + np.einsum("k...ji,k...jl->...il", dU.conj(), dU)
    residual_max = float(np.max(np.abs(R)))
    a11 = a_vec[..., 2]
    a21 = a_vec[..., 0] + 1j * a_vec[..., 1]
    coupling = np.sum(np.abs(a21) ** 2, axis=0)
    r_block = coupling + R[..., 0, 0].real
    r_block_upper = coupling + R[..., 1, 1].real
    _, wn = _spin_samples(pot, grid)
    v_samp = pot.v.sample(grid)
    tail = 0.0
    for field in [*a11, *a21.real, *a21.imag, r_block]:
        tail = max(tail, grid.tail_maximum(grid.coefficients(field)))
    if tail > tail_tol:
        raise ValueError(
            f"gauge fields unresolved on P={grid.P} grid (tail {tail:.3g}); increase P"
        )
    return GaugeField(pot=pot, grid=grid, frame=frame, a_vec=a_vec, a11=a11,
                      a21=a21, r_block=r_block, r_block_upper=r_block_upper,
                      v_minus=v_samp - wn, v_plus=v_samp + wn,
                      residual_max=residual_max, formula_error=formula_error,
                      hermiticity_error=herm, tail=tail)


def coulomb_transform(g: GaugeField) -> GaugeField:
    """Twist by a periodic diagonal phase so the diagonal gauge is divergence free.

    In one dimension the diagonal gauge potential becomes the constant equal
    to its mean.  The off-diagonal coupling picks up the phase exp(2 i psi)
    and keeps its modulus, so the scalar residual is unchanged.
    """
    grid = g.grid
    n = grid.dim
    mu = grid.mu_grid
    mu2 = np.sum(mu ** 2, axis=-1)
    num = np.zeros(grid.shape, dtype=complex)
    for k in range(n):
        num = num + mu[..., k] * grid.coefficients(g.a11[k])
    with np.errstate(divide="ignore", invalid="ignore"):
        psi_hat = np.where(mu2 > 0, -1j * num / np.where(mu2 > 0, mu2, 1.0), 0.0)
    psi = grid.from_coefficients(psi_hat).real
    twist = np.exp(2j * psi)
    a_vec = g.a_vec.copy()
    a11 = np.empty_like(g.a11)
    a21 = np.empty_like(g.a21)
    for k in range(n):
        dpsi = grid.derivative(psi, k)
        a11[k] = g.a11[k] - dpsi
        a21[k] = twist * g.a21[k]
        a_vec[k, ..., 0] = a21[k].real
        a_vec[k, ..., 1] = a21[k].imag
        a_vec[k, ..., 2] = a11[k]
    return GaugeField(pot=g.pot, grid=grid, frame=g.frame, a_vec=a_vec,
                      a11=a11, a21=a21, r_block=g.r_block,
                      r_block_upper=g.r_block_upper, v_minus=g.v_minus,
                      v_plus=g.v_plus, residual_max=g.residual_max,
                      formula_error=g.formula_error,
                      hermiticity_error=g.hermiticity_error, tail=g.tail,
                      psi=psi)


@dataclass
class ScalarBlock:
    """Data of one diagonal block: h^2 (D - a)^2 + v + h^2 r."""

    grid: TorusGrid
    a: np.ndarray        # (n,) + shape
    v: np.ndarray        # shape
    r: np.ndarray        # shape
    label: str


def block_symbols(g: GaugeField, which: str = "lower") -> ScalarBlock:
    if which == "lower":
        return ScalarBlock(grid=g.grid, a=g.a11, v=g.v_minus, r=g.r_block, label="lower")
    if which == "upper":
        return ScalarBlock(grid=g.grid, a=-g.a11, v=g.v_plus, r=g.r_block_upper, label="upper")
    raise ValueError(f"unknown block {which!r}")


def fourier_eval(grid: TorusGrid, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Evaluate a grid field at arbitrary points through its Fourier sum."""
    c = grid.coefficients(values).reshape(-1)
    mu = grid.mu_grid.reshape(-1, grid.dim)
    points = np.asarray(points, dtype=float)
    if grid.dim == 1 and (points.ndim == 0 or points.shape[-1] != 1):
        points = points[..., None]
    phases = np.tensordot(points, mu.T, axes=1)
    return np.exp(1j * phases) @ c
