"""Trigonometric-polynomial matrix potentials V = v I + w . sigma.

The scalar part v and the three spin components w_1, w_2, w_3 are real
trigonometric polynomials on a common lattice.  The matrix eigenvalues are
v -+ |w|; everything downstream (well location, curvatures, effective
scalar potentials) derives from v, w and exact derivatives of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import Lattice, TorusGrid, fold_to_cell

SIGMA = (
    np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
)


class TrigPoly:
    """Finite Fourier sum  p(x) = sum_m c_m exp(i mu(m) . x).

    Coefficients are keyed by integer index tuples m; mu(m) = sum m_k dual_k.
    Evaluation, gradients and Hessians are exact term-by-term sums.
    """

    def __init__(self, lattice: Lattice, coeffs: dict):
        self.lattice = lattice
        self.coeffs = {}
        for m, c in coeffs.items():
            key = tuple(int(v) for v in (m if isinstance(m, (tuple, list, np.ndarray)) else (m,)))
            if len(key) != lattice.dim:
                raise ValueError(f"coefficient index {key} has wrong length for dim {lattice.dim}")
            c = complex(c)
            if c != 0:
                self.coeffs[key] = self.coeffs.get(key, 0.0) + c
        self._index = np.array(sorted(self.coeffs), dtype=int).reshape(-1, lattice.dim)
        self._values = np.array([self.coeffs[tuple(m)] for m in self._index], dtype=complex)
        self._mu = self._index @ lattice.dual if len(self._index) else np.zeros((0, lattice.dim))

    @property
    def degree(self) -> int:
        if len(self._index) == 0:
            return 0
        return int(np.max(np.abs(self._index)))

    def is_real(self, tol: float = 1e-12) -> bool:
        for m, c in self.coeffs.items():
            conj = tuple(-k for k in m)
            if abs(np.conj(self.coeffs.get(conj, 0.0)) - c) > tol:
                return False
        return True

    def _points(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = self.lattice.dim
        if n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        if x.shape[-1] != n:
            raise ValueError(f"points must have last axis {n}")
        return x

    def __call__(self, x):
        x = self._points(x)
        phases = np.tensordot(x, self._mu.T, axes=1)  # (..., ncoeff)
        vals = np.exp(1j * phases) @ self._values
        if self.is_real():
            return vals.real
        return vals

    def gradient(self, x):
        """Exact gradient, shape (..., n)."""
        x = self._points(x)
        phases = np.tensordot(x, self._mu.T, axes=1)
        terms = np.exp(1j * phases)[..., None] * (1j * self._mu) * self._values[:, None]
        out = terms.sum(axis=-2)
        if self.is_real():
            return out.real
        return out

    def hessian(self, x):
        """Exact Hessian, shape (..., n, n)."""
        x = self._points(x)
        phases = np.tensordot(x, self._mu.T, axes=1)
        outer = -self._mu[:, :, None] * self._mu[:, None, :]
        terms = np.exp(1j * phases)[..., None, None] * outer * self._values[:, None, None]
        out = terms.sum(axis=-3)
        if self.is_real():
            return out.real
        return out

    def derivatives_1d(self, x0: float, order: int) -> np.ndarray:
        """Taylor derivatives p(x0), p'(x0), ..., p^(order)(x0) (1d lattice only)."""
        if self.lattice.dim != 1:
            raise ValueError("derivatives_1d requires a 1d lattice")
        mu = self._mu[:, 0]
        base = self._values * np.exp(1j * mu * x0)
        out = np.empty(order + 1, dtype=complex)
        for k in range(order + 1):
            out[k] = np.sum(base * (1j * mu) ** k)
        if self.is_real():
            return out.real
        return out

    def sample(self, grid: TorusGrid) -> np.ndarray:
        """Exact samples on a TorusGrid via coefficient placement and inverse FFT."""
        if grid.P <= 2 * self.degree:
            raise ValueError(f"grid P={grid.P} cannot hold degree {self.degree} without aliasing")
        c = np.zeros(grid.shape, dtype=complex)
        for m, v in self.coeffs.items():
            c[tuple(k % grid.P for k in m)] += v
        vals = grid.from_coefficients(c)
        if self.is_real():
            return vals.real
        return vals

    def shifted(self, delta) -> "TrigPoly":
        """The polynomial  x |-> p(x + delta)  (phase twist of coefficients)."""
        delta = np.atleast_1d(np.asarray(delta, dtype=float))
        new = {}
        for m, c in self.coeffs.items():
            mu = self.lattice.dual_vector(m)
            new[m] = c * np.exp(1j * float(mu @ delta))
        return TrigPoly(self.lattice, new)


def trig_poly_from_terms(lattice: Lattice, terms) -> TrigPoly:
    """Build a real TrigPoly from {m, re, im} records, completing conjugates.

    A record with index m contributes c at m and conj(c) at -m; an explicit
    record at -m must agree with the implied conjugate.
    """
    coeffs = {}
    for rec in terms:
        m = tuple(int(v) for v in rec["m"])
        c = complex(float(rec.get("re", 0.0)), float(rec.get("im", 0.0)))
        for key, val in ((m, c), (tuple(-k for k in m), np.conj(c))):
            if key in coeffs and abs(coeffs[key] - val) > 1e-12:
                raise ValueError(f"conflicting coefficient for index {key}")
            coeffs[key] = val
    zero = tuple(0 for _ in range(lattice.dim))
    if zero in coeffs and abs(coeffs[zero].imag) > 1e-12:
        raise ValueError("constant coefficient must be real")
    return TrigPoly(lattice, coeffs)


@dataclass
class WellData:
    """Nondegenerate minimum of the effective potential v - |w|."""

    x_min: np.ndarray
    E0: float
    hessian: np.ndarray
    tau: np.ndarray          # ascending; hessian eigenvalues are 2 tau_k^2
    axes: np.ndarray         # columns are the principal directions


@dataclass
class ValidationReport:
    ok: bool
    min_w_norm: float
    local_minima: int
    hessian_eigs: np.ndarray
    messages: list


class PauliPotential:
    """V(x) = v(x) I + sum_j w_j(x) sigma_j with trig-polynomial entries."""

    def __init__(self, v: TrigPoly, w: tuple):
        if len(w) != 3:
            raise ValueError("w must have three components")
        self.v = v
        self.w = tuple(w)
        self.lattice = v.lattice
        for comp in self.w:
            if comp.lattice is not v.lattice and not np.allclose(comp.lattice.basis, v.lattice.basis):
                raise ValueError("all components must share one lattice")
        if not v.is_real() or not all(c.is_real() for c in self.w):
            raise ValueError("potential components must be real trigonometric polynomials")

    @property
    def degree(self) -> int:
        return max([self.v.degree] + [c.degree for c in self.w])

    def w_vector(self, x) -> np.ndarray:
        return np.stack([c(x) for c in self.w], axis=-1)

    def w_norm(self, x) -> np.ndarray:
        return np.sqrt(np.sum(self.w_vector(x) ** 2, axis=-1))

    def matrix(self, x) -> np.ndarray:
        """The 2x2 Hermitian value at x, shape (..., 2, 2)."""
        v = np.asarray(self.v(x))
        wv = self.w_vector(x)
        out = np.zeros(v.shape + (2, 2), dtype=complex)
        out[..., 0, 0] = v + wv[..., 2]
        out[..., 1, 1] = v - wv[..., 2]
        out[..., 0, 1] = wv[..., 0] - 1j * wv[..., 1]
        out[..., 1, 0] = wv[..., 0] + 1j * wv[..., 1]
        return out

    def effective(self, x, gap_floor: float = 1e-12):
        """Lower matrix eigenvalue v - |w|; raises where |w| vanishes."""
        wn = self.w_norm(x)
        if np.min(wn) <= gap_floor:
            bad = np.asarray(x)[np.unravel_index(int(np.argmin(wn)), np.shape(wn))] if np.ndim(wn) else x
            raise ValueError(
                f"spin field magnitude vanishes (min |w| = {np.min(wn):.3g} at x = {bad}); "
                "the two-band gap assumption fails"
            )
        return self.v(x) - wn

    def effective_gradient(self, x) -> np.ndarray:
        wv = self.w_vector(x)
        wn = np.sqrt(np.sum(wv**2, axis=-1))
        gw = np.stack([c.gradient(x) for c in self.w], axis=-2)  # (..., 3, n)
        grad_norm = np.sum(wv[..., None] * gw, axis=-2) / wn[..., None]
        return self.v.gradient(x) - grad_norm

    def effective_hessian(self, x) -> np.ndarray:
        wv = self.w_vector(x)
        wn = np.sqrt(np.sum(wv**2, axis=-1))
        gw = np.stack([c.gradient(x) for c in self.w], axis=-2)   # (..., 3, n)
        hw = np.stack([c.hessian(x) for c in self.w], axis=-3)     # (..., 3, n, n)
        grad_norm = np.sum(wv[..., None] * gw, axis=-2) / wn[..., None]
        term = np.sum(gw[..., :, :, None] * gw[..., :, None, :], axis=-3)
        term = term + np.sum(wv[..., None, None] * hw, axis=-3)
        hess_norm = term / wn[..., None, None]
        hess_norm = hess_norm - grad_norm[..., :, None] * grad_norm[..., None, :] / wn[..., None, None]
        return self.v.hessian(x) - hess_norm

    def shifted(self, delta) -> "PauliPotential":
        return PauliPotential(self.v.shifted(delta), tuple(c.shifted(delta) for c in self.w))

    def effective_taylor_1d(self, x0: float, order: int = 4) -> np.ndarray:
        """Exact Taylor coefficients of v - |w| about x0 (1d), degree <= order.

        |w| is expanded as the series square root of the polynomial series of
        w . w, valid because |w(x0)| > 0.
        """
        if self.lattice.dim != 1:
            raise ValueError("effective_taylor_1d requires a 1d lattice")
        # Taylor *coefficients* a_k = f^(k)/k!
        fact = np.array([math.factorial(k) for k in range(order + 1)], dtype=float)
        def coeffs_of(poly):
            return poly.derivatives_1d(x0, order) / fact
        s = np.zeros(order + 1)
        for c in self.w:
            a = coeffs_of(c)
            s = s + _series_mul(a, a, order)
        root = _series_sqrt(s, order)
        return coeffs_of(self.v) - root


def _series_mul(a: np.ndarray, b: np.ndarray, order: int) -> np.ndarray:
    out = np.zeros(order + 1)
    for i in range(order + 1):
        for j in range(order + 1 - i):
            out[i + j] += a[i] * b[j]
    return out


def _series_sqrt(s: np.ndarray, order: int) -> np.ndarray:
    """Taylor coefficients of sqrt(s) when s[0] > 0."""
    if s[0] <= 0:
        raise ValueError("series square root needs a positive constant term")
    r = np.zeros(order + 1)
    r[0] = np.sqrt(s[0])
    for k in range(1, order + 1):
        acc = sum(r[i] * r[k - i] for i in range(1, k))
        r[k] = (s[k] - acc) / (2.0 * r[0])
    return r


def validate_model(pot: PauliPotential, grid: TorusGrid, gap_floor: float = 1e-9) -> ValidationReport:
    """Check the standing assumptions on a sampling grid.

    Reports the minimum of |w| (must stay positive), the number of strict
    local minima of v - |w| on the grid, and the Hessian eigenvalues at the
    global minimum.
    """
    messages = []
    wn = np.sqrt(sum(c.sample(grid) ** 2 for c in pot.w))
    min_w = float(wn.min())
    ok = True
    if min_w <= gap_floor:
        ok = False
        messages.append(f"min |w| = {min_w:.3g} <= {gap_floor:.1g}; bands touch")
    f = pot.v.sample(grid) - wn
    strict = np.ones(grid.shape, dtype=bool)
    for ax in range(grid.dim):
        for shift in (1, -1):
            strict &= f < np.roll(f, shift, axis=ax)
    n_min = int(strict.sum())
    if n_min == 0:
        ok = False
        messages.append("no strict local minimum of v - |w| on the grid")
    well = None
    heigs = np.array([])
    if ok:
        try:
            well = find_well(pot, grid)
            heigs = np.linalg.eigvalsh(well.hessian)
            if heigs.min() <= 1e-9:
                ok = False
                messages.append(f"degenerate well: Hessian eigenvalues {heigs}")
        except ValueError as exc:
            ok = False
            messages.append(str(exc))
    return ValidationReport(ok=ok, min_w_norm=min_w, local_minima=n_min,
                            hessian_eigs=heigs, messages=messages)


def find_well(pot: PauliPotential, grid: TorusGrid, newton_tol: float = 1e-13,
              degeneracy_tol: float = 1e-9) -> WellData:
    """Locate the unique nondegenerate minimum of v - |w| on the torus.

    Grid scan for the basin, then Newton refinement with exact derivatives.
    Raises if the minimum is degenerate or attained at well-separated nodes.
    """
    wn = np.sqrt(sum(c.sample(grid) ** 2 for c in pot.w))
    if wn.min() <= 1e-12:
        raise ValueError("spin field magnitude vanishes on the grid; gap assumption fails")
    f = pot.v.sample(grid) - wn
    flat = int(np.argmin(f))
    idx0 = np.unravel_index(flat, grid.shape)
    fmin = f[idx0]
    # duplicate-minimum scan: near-minimal values at nodes far from the argmin
    near = np.argwhere(f <= fmin + 1e-6)
    for idx in near:
        d = np.abs(idx - np.asarray(idx0))
        d = np.minimum(d, grid.P - d)
        if np.max(d) > 2:
            raise ValueError(
                f"minimum of v - |w| is not unique on the grid (nodes {tuple(idx0)} and {tuple(idx)})"
            )
    x = grid.nodes[idx0].copy()
    for _ in range(60):
        g = pot.effective_gradient(x)
        H = pot.effective_hessian(x)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError as exc:
            raise ValueError("singular Hessian during well refinement") from exc
        x = x - step
        if np.linalg.norm(step) < newton_tol:
            break
    else:
        raise ValueError("well refinement did not converge")
    x = fold_to_cell(pot.lattice, x)
    H = pot.effective_hessian(x)
    heigs, haxes = np.linalg.eigh(H)
    if heigs.min() <= degeneracy_tol:
        raise ValueError(f"degenerate well: Hessian eigenvalues {heigs}")
    E0 = float(pot.v(x) - pot.w_norm(x))
    tau = np.sqrt(heigs / 2.0)
    return WellData(x_min=np.atleast_1d(x), E0=E0, hessian=H, tau=tau, axes=haxes)


def shift_to_origin(pot: PauliPotential, well: WellData) -> tuple:
    """Translate so the well sits at x = 0; returns (potential, well)."""
    delta = np.atleast_1d(well.x_min)
    shifted = pot.shifted(delta)
    new_well = WellData(x_min=np.zeros_like(delta), E0=well.E0,
                        hessian=well.hessian, tau=well.tau, axes=well.axes)
    return shifted, new_well
