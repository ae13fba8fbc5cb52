"""Agmon distances in the classically forbidden region.

The degenerate metric (v - |w| - E0)_+ dx^2 measures tunneling cost.  One
dimensional distances reduce to integrals of the square-root weight; in
higher dimension the distance from the well solves the eikonal equation
|grad d| = F with F = sqrt((v - |w| - E0)_+), handled by fast marching on
a tensor grid spanning the neighboring cells.

The well is assumed to sit at the origin (shift_to_origin upstream).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
import scipy.integrate

from .lattice import Lattice
from .potential import PauliPotential, WellData

_FAR, _TRIAL, _ACCEPTED = 0, 1, 2


def agmon_1d(pot: PauliPotential, E0: float, a: float, b: float,
             epsrel: float = 1e-11) -> float:
    """Distance between a and b along the line (1d lattices only).

    The weight sqrt((v - |w| - E0)_+) vanishes like |x| at each lattice
    translate of the well, so the quadrature is split there.
    """
    if pot.lattice.dim != 1:
        raise ValueError("agmon_1d requires a 1d lattice")
    if b < a:
        a, b = b, a
    period = float(pot.lattice.basis[0, 0])
    def weight(x):
        val = pot.effective(np.array([[x]])) - E0
        return float(np.sqrt(np.clip(val, 0.0, None))[0])
    lo = int(np.floor(a / period)) + 1
    hi = int(np.ceil(b / period)) - 1
    breaks = [k * period for k in range(lo, hi + 1) if a < k * period < b]
    total, err = scipy.integrate.quad(weight, a, b, points=breaks or None,
                                      epsrel=epsrel, epsabs=1e-13, limit=300)
    return float(total)


def distance_profile_1d(pot: PauliPotential, E0: float, xs: np.ndarray) -> np.ndarray:
    """Cumulative distance d(xs[0], x) along a sorted 1d sample path."""
    xs = np.asarray(xs, dtype=float)
    vals = pot.effective(xs[:, None]) - E0
    w = np.sqrt(np.clip(vals, 0.0, None))
    out = np.empty_like(xs)
    out[0] = 0.0
    out[1:] = scipy.integrate.cumulative_simpson(w, x=xs)
    return out


@dataclass
class EikonalDomain:
    """Tensor grid over s in [-3/2, 3/2]^n in lattice coordinates.

    Requires an orthogonal (rectangular) basis so the grid axes are
    orthogonal in physical space; node spacing along axis k is |basis_k|/Q.
    The +-basis vectors land exactly on grid nodes.
    """

    lattice: Lattice
    Q: int
    speed: np.ndarray           # F on the grid, shape (3Q+1,)*n

    def __post_init__(self):
        basis = self.lattice.basis
        gram = basis @ basis.T
        off = gram - np.diag(np.diag(gram))
        if np.max(np.abs(off)) > 1e-12 * np.max(np.abs(gram)):
            raise ValueError("fast marching supports rectangular lattice bases only")
        if self.Q < 2:
            raise ValueError("Q must be at least 2")
        n = self.lattice.dim
        npts = 3 * self.Q + 1
        if self.speed.shape != (npts,) * n:
            raise ValueError(f"speed must have shape {(npts,) * n}")
        self.s_axis = np.linspace(-1.5, 1.5, npts)
        self.spacing = np.linalg.norm(basis, axis=1) / self.Q
        self.origin = (npts // 2,) * n

    @property
    def shape(self):
        return self.speed.shape

    def node_positions(self) -> np.ndarray:
        grids = np.meshgrid(*([self.s_axis] * self.lattice.dim), indexing="ij")
        s = np.stack(grids, axis=-1)
        return s @ self.lattice.basis

    def translate_index(self, steps) -> tuple:
        """Grid index of the lattice point sum_k steps_k basis_k."""
        return tuple(self.origin[k] + int(steps[k]) * self.Q
                     for k in range(self.lattice.dim))


def eikonal_domain(pot: PauliPotential, well: WellData, Q: int) -> EikonalDomain:
    """Domain with speed sqrt((v - |w| - E0)_+) for a well at the origin."""
    if np.max(np.abs(well.x_min)) > 1e-9:
        raise ValueError("well must be shifted to the origin first")
    npts = 3 * Q + 1
    s = np.linspace(-1.5, 1.5, npts)
    grids = np.meshgrid(*([s] * pot.lattice.dim), indexing="ij")
    x = np.stack(grids, axis=-1) @ pot.lattice.basis
    val = pot.effective(x) - well.E0
    return EikonalDomain(lattice=pot.lattice, Q=Q,
                         speed=np.sqrt(np.clip(val, 0.0, None)))


def _harmonic_init(domain: EikonalDomain, well: WellData, halo: float) -> np.ndarray:
    """Exact harmonic-well distance (1/2) sum tau_k y_k^2 near the origin.

    y are coordinates along the principal axes; values are kept inside a
    ball of radius halo * max spacing and serve as accepted seed data.
    Positions come from integer index offsets times the spacing so mirror
    nodes are bit-identical and the seed ball is exactly symmetric.
    """
    n = domain.lattice.dim
    offs = np.meshgrid(*[np.arange(s) - domain.origin[k]
                         for k, s in enumerate(domain.shape)], indexing="ij")
    x = np.stack([offs[k] * domain.spacing[k] for k in range(n)], axis=-1)
    y = x @ well.axes          # principal coordinates
    d = 0.5 * np.sum(well.tau * y ** 2, axis=-1)
    r2 = np.sum(x ** 2, axis=-1)
    seed = r2 <= (halo * domain.spacing.max()) ** 2
    return np.where(seed, d, np.inf)


def fast_march(domain: EikonalDomain, well: WellData | None = None,
               init: str = "harmonic", halo: float = 5.0) -> np.ndarray:
    """First-order upwind fast marching; returns the distance field.

    init "harmonic" seeds a ball around the origin with the harmonic-well
    solution (needs `well`); "origin" seeds the single origin node with 0,
    for speed fields that do not vanish there.
    """
    n = domain.lattice.dim
    shape = domain.shape
    F = domain.speed
    hs = domain.spacing
    if init == "harmonic":
        if well is None:
            raise ValueError("harmonic init needs well data")
        d = _harmonic_init(domain, well, halo)
    elif init == "origin":
        d = np.full(shape, np.inf)
        d[domain.origin] = 0.0
    else:
        raise ValueError(f"unknown init {init!r}")
    state = np.where(np.isfinite(d), _ACCEPTED, _FAR).astype(np.int8)

    def neighbors(idx):
        for ax in range(n):
            for step in (-1, 1):
                j = idx[ax] + step
                if 0 <= j < shape[ax]:
                    yield idx[:ax] + (j,) + idx[ax + 1:], ax

    def update(idx):
        """Upwind candidate value at idx from accepted neighbors."""
        if n == 1:
            # trapezoid speed along the line: second order on smooth speed
            best = np.inf
            for nb, ax in neighbors(idx):
                if state[nb] == _ACCEPTED:
                    cand = d[nb] + hs[ax] * 0.5 * (F[nb] + F[idx])
                    best = min(best, cand)
            return best
        a = []
        for ax in range(n):
            vals = [d[idx[:ax] + (idx[ax] + s,) + idx[ax + 1:]]
                    for s in (-1, 1)
                    if 0 <= idx[ax] + s < shape[ax]
                    and state[idx[:ax] + (idx[ax] + s,) + idx[ax + 1:]] == _ACCEPTED]
            if vals:
                a.append((min(vals), hs[ax]))
        if not a:
            return np.inf
        f = F[idx]
        a.sort()
        # solve sum_k ((u - a_k)/h_k)^2 = f^2 over the active upwind subset
        for m in range(len(a), 0, -1):
            sub = a[:m]
            A = sum(1.0 / h ** 2 for _, h in sub)
            B = sum(v / h ** 2 for v, h in sub)
            C = sum(v ** 2 / h ** 2 for v, h in sub) - f ** 2
            disc = B ** 2 - A * C
            if disc < 0:
                continue
            u = (B + np.sqrt(disc)) / A
            if m == 1 or u >= sub[-1][0]:
                return u
        return a[0][0] + a[0][1] * f

    heap = []
    accepted_idx = np.argwhere(state == _ACCEPTED)
    for idx in map(tuple, accepted_idx):
        for nb, _ in neighbors(idx):
            if state[nb] != _ACCEPTED:
                cand = update(nb)
                if cand < d[nb]:
                    d[nb] = cand
                    heapq.heappush(heap, (cand, nb))
                state[nb] = _TRIAL
    while heap:
        val, idx = heapq.heappop(heap)
        if state[idx] == _ACCEPTED or val > d[idx]:
            continue
        state[idx] = _ACCEPTED
        for nb, _ in neighbors(idx):
            if state[nb] != _ACCEPTED:
                cand = update(nb)
                if cand < d[nb]:
                    d[nb] = cand
                    state[nb] = _TRIAL
                    heapq.heappush(heap, (cand, nb))
    if not np.all(np.isfinite(d)):
        raise ValueError("fast marching left unreached nodes")
    return d


@dataclass
class LeastAction:
    value: float
    multiplicity: int
    directions: list            # lattice steps achieving the minimum
    per_translate: dict


def least_action(domain: EikonalDomain, d: np.ndarray, rel_tol: float = 1e-6) -> LeastAction:
    """Minimal distance to a neighboring lattice translate of the well."""
    n = domain.lattice.dim
    per = {}
    for steps in np.ndindex(*([3] * n)):
        steps = tuple(s - 1 for s in steps)
        if all(s == 0 for s in steps):
            continue
        per[steps] = float(d[domain.translate_index(steps)])
    value = min(per.values())
    winners = [s for s, v in per.items() if v <= value * (1.0 + rel_tol)]
    return LeastAction(value=value, multiplicity=len(winners),
                       directions=winners, per_translate=per)


def geodesic_trace(domain: EikonalDomain, d: np.ndarray, start_steps,
                   step_factor: float = 0.25, max_steps: int = 100000) -> np.ndarray:
    """Steepest-descent path of d from a translate node toward the origin."""
    from scipy.interpolate import RegularGridInterpolator

    n = domain.lattice.dim
    axes = [domain.s_axis] * n
    interp = RegularGridInterpolator(axes, d, bounds_error=False, fill_value=np.inf)
    basis = domain.lattice.basis
    inv_basis = np.linalg.inv(basis)
    s = np.array([float(v) for v in start_steps])
    h_min = domain.spacing.min()
    step = step_factor * h_min
    path = [s @ basis]
    for _ in range(max_steps):
        x = path[-1]
        if np.linalg.norm(x) <= 2.0 * h_min:
            break
        s = x @ inv_basis
        grad = np.zeros(n)
        for k in range(n):
            e = np.zeros(n)
            e[k] = 0.5 * h_min
            sp = (x + e) @ inv_basis
            sm = (x - e) @ inv_basis
            grad[k] = (interp(sp)[0] - interp(sm)[0]) / h_min
        norm = np.linalg.norm(grad)
        if not np.isfinite(norm) or norm == 0.0:
            break
        path.append(x - step * grad / norm)
    return np.array(path)
