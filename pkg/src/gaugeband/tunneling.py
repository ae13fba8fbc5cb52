"""Exponentially small band widths: measurement, fitting, prediction.

Three independent routes to the tunneling scale:

* Dirichlet levels of the single-well restriction (finite differences with
  Richardson extrapolation), whose distance to the Bloch bands shrinks
  exponentially;
* measured band widths over the Brillouin sample, fitted against the
  half-power law  b sqrt(h) exp(-S/h)  with model competition;
* the interaction integral between neighboring wells, which predicts the
  width  4 |rho_+ + rho_-|  from quasimode data alone.

The interaction integrand contains the window chi_1 applied to the Agmon
distances from both wells; along the connecting geodesic the combination
phi'(x) f(x) f(x - omega) is constant, which makes the integral window
independent.  That constant also gives a closed shortcut for rho.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.interpolate
import scipy.linalg

from .agmon import agmon_1d, distance_profile_1d
from .gauge import smoothstep
from .potential import PauliPotential, WellData
from .wkb import WKBData

_KINDS = ("scalar11", "scalar22", "direct")


@dataclass
class DirichletLevel:
    values: np.ndarray          # Richardson-extrapolated lowest levels
    error_estimate: float
    P: int
    kind: str

    @property
    def ground(self) -> float:
        return float(self.values[0])

    @property
    def gap(self) -> float:
        return float(self.values[1] - self.values[0])


def _dirichlet_raw(pot: PauliPotential, h: float, L: float, kind: str,
                   P: int, count: int) -> np.ndarray:
    """Lowest levels of the interval restriction on a P-point grid."""
    dx = 2.0 * L / P
    xs = -L + dx * np.arange(1, P)
    k = h ** 2 / dx ** 2
    if kind in ("scalar11", "scalar22"):
        v = pot.v(xs[:, None])
        wn = pot.w_norm(xs[:, None])
        pot_diag = v - wn if kind == "scalar11" else v + wn
        return scipy.linalg.eigh_tridiagonal(
            2.0 * k + pot_diag, np.full(P - 2, -k),
            select="i", select_range=(0, count - 1))[0]
    if kind == "direct":
        m = P - 1
        V = pot.matrix(xs[:, None])
        band = np.zeros((3, 2 * m), dtype=complex)
        band[0, 0::2] = 2.0 * k + V[:, 0, 0].real
        band[0, 1::2] = 2.0 * k + V[:, 1, 1].real
        band[1, 0:2 * m - 1:2] = V[:, 1, 0]
        band[2, :2 * m - 2] = -k
        vals = scipy.linalg.eig_banded(band, lower=True, select="i",
                                       select_range=(0, count - 1),
                                       eigvals_only=True)
        return vals
    raise ValueError(f"unknown kind {kind!r}; expected one of {_KINDS}")


def dirichlet_ground(pot: PauliPotential, h: float, L: float,
                     kind: str = "scalar11", P: int = 1024, count: int = 2,
                     stability_tol: float = 1e-10) -> DirichletLevel:
    """Dirichlet levels on [-L, L], second-order differences extrapolated.

    Levels from P, 2P, 4P grids enter two Richardson stages; the change
    between stages must fall below stability_tol or the grid is declared
    too coarse.
    """
    lv = [_dirichlet_raw(pot, h, L, kind, p, count) for p in (P, 2 * P, 4 * P)]
    r1 = (4.0 * lv[1] - lv[0]) / 3.0
    r2 = (4.0 * lv[2] - lv[1]) / 3.0
    final = (16.0 * r2 - r1) / 15.0
    err = float(np.max(np.abs(r2 - r1)))
    if err > stability_tol:
        raise ValueError(
            f"Dirichlet extrapolation unstable ({err:.3g} > {stability_tol:.1g}); "
            "grid too coarse for this h"
        )
    return DirichletLevel(values=final, error_estimate=err, P=P, kind=kind)


def _refine_extremum(ts: np.ndarray, ys: np.ndarray, idx: int) -> float:
    """Parabolic refinement of a band extremum on the periodic t-grid."""
    K = len(ts)
    y0, y1, y2 = ys[(idx - 1) % K], ys[idx], ys[(idx + 1) % K]
    denom = y0 - 2.0 * y1 + y2
    if denom == 0.0:
        return float(y1)
    delta = 0.5 * (y0 - y2) / denom
    delta = float(np.clip(delta, -1.0, 1.0))
    return float(y1 - 0.25 * (y0 - y2) * delta)


@dataclass
class WidthScan:
    hs: np.ndarray
    widths: np.ndarray
    centers: np.ndarray
    band: int


def width_scan(assembler_factory, hs, sample, band: int = 0,
               count: int | None = None) -> WidthScan:
    """Band width and center over h, with parabolic extremum refinement.

    assembler_factory(h) must return an object with .matrix(h, theta); a
    single prebuilt assembler may be passed directly.
    """
    from .bloch import band_sweep

    hs = np.asarray(hs, dtype=float)
    count = count if count is not None else band + 1
    widths = np.empty_like(hs)
    centers = np.empty_like(hs)
    ts = sample.tgrid[:, 0] if sample.tgrid.shape[1] == 1 else None
    for i, h in enumerate(hs):
        asm = assembler_factory(h) if callable(assembler_factory) else assembler_factory
        bands = band_sweep(asm, h, sample, count)
        y = bands[:, band]
        if ts is not None:
            hi = _refine_extremum(ts, y, int(np.argmax(y)))
            lo = _refine_extremum(ts, -y, int(np.argmin(y)))
            lo = -lo
        else:
            hi, lo = float(y.max()), float(y.min())
        widths[i] = hi - lo
        centers[i] = 0.5 * (hi + lo)
    return WidthScan(hs=hs, widths=widths, centers=centers, band=band)


@dataclass
class WidthFit:
    model: str                  # "half-power", "plain-exponential", "power-law"
    S: float
    prefactor: float
    power: float
    sse: dict
    used: np.ndarray
    n_used: int

    @property
    def exponential(self) -> bool:
        return self.model != "power-law"


def fit_width_law(hs, widths, trust=(1e-12, 1e-3)) -> WidthFit:
    """Competitive fit of measured widths in log space.

    Candidate models: b sqrt(h) exp(-S/h), b exp(-S/h), and the power-law
    control c h^p.  Only widths inside the trust window enter; fewer than
    four trustworthy samples is an error.
    """
    hs = np.asarray(hs, dtype=float)
    widths = np.asarray(widths, dtype=float)
    used = (widths >= trust[0]) & (widths <= trust[1])
    if used.sum() < 4:
        raise ValueError(
            f"only {int(used.sum())} widths inside the trust window {trust}; need at least 4"
        )
    hh = hs[used]
    y = np.log(widths[used])
    ones = np.ones_like(hh)
    designs = {
        "half-power": (np.column_stack([ones, -1.0 / hh]), 0.5 * np.log(hh)),
        "plain-exponential": (np.column_stack([ones, -1.0 / hh]), np.zeros_like(hh)),
        "power-law": (np.column_stack([ones, np.log(hh)]), np.zeros_like(hh)),
    }
    sse = {}
    params = {}
    for name, (X, offset) in designs.items():
        coef, *_ = np.linalg.lstsq(X, y - offset, rcond=None)
        resid = y - offset - X @ coef
        sse[name] = float(resid @ resid)
        params[name] = coef
    best = min(sse, key=sse.get)
    if best == "power-law":
        c = params[best]
        return WidthFit(model=best, S=np.nan, prefactor=float(np.exp(c[0])),
                        power=float(c[1]), sse=sse, used=used, n_used=int(used.sum()))
    c = params[best]
    return WidthFit(model=best, S=float(c[1]), prefactor=float(np.exp(c[0])),
                    power=0.5 if best == "half-power" else 0.0,
                    sse=sse, used=used, n_used=int(used.sum()))


class Chi1Profile:
    """Distance window: 1 below (S0+eta0)/2, 0 above (S0+eta1)/2.

    The transition must sit beyond the half action, so 0 < eta0 < eta1; the
    product of the two shifted windows then covers the connecting geodesic.
    """

    def __init__(self, S0: float, eta0: float | None = None,
                 eta1: float | None = None, kind: str = "smooth"):
        self.S0 = float(S0)
        self.eta0 = 0.05 * S0 if eta0 is None else float(eta0)
        self.eta1 = 0.15 * S0 if eta1 is None else float(eta1)
        if not 0.0 < self.eta0 < self.eta1 < S0 / 2.0:
            raise ValueError("window parameters must satisfy 0 < eta0 < eta1 < S0/2")
        if kind not in ("smooth", "cubic"):
            raise ValueError(f"unknown profile kind {kind!r}")
        self.kind = kind
        self.lo = 0.5 * (self.S0 + self.eta0)
        self.hi = 0.5 * (self.S0 + self.eta1)

    def _u(self, s):
        return (np.asarray(s, dtype=float) - self.lo) / (self.hi - self.lo)

    def __call__(self, s):
        u = self._u(s)
        if self.kind == "smooth":
            return 1.0 - smoothstep(u)
        uu = np.clip(u, 0.0, 1.0)
        return 1.0 - (3.0 * uu ** 2 - 2.0 * uu ** 3)

    def derivative(self, s):
        u = self._u(s)
        scale = 1.0 / (self.hi - self.lo)
        if self.kind == "smooth":
            out = np.zeros_like(u)
            inside = (u > 0.0) & (u < 1.0)
            ui = u[inside]
            a = np.exp(-1.0 / ui)
            b = np.exp(-1.0 / (1.0 - ui))
            da = a / ui ** 2
            db = -b / (1.0 - ui) ** 2
            out[inside] = -(da * b - a * db) / (a + b) ** 2
            return out * scale
        out = np.zeros_like(u)
        inside = (u > 0.0) & (u < 1.0)
        out[inside] = -(6.0 * u[inside] - 6.0 * u[inside] ** 2)
        return out * scale


@dataclass
class HoppingData:
    h: float
    S0: float
    prefactor: float
    rho_plus_amp: complex       # rho_+ = rho_plus_amp * exp(-S0/h)
    rho_minus_amp: complex
    kappa: complex              # invariant phi' f(x) f(x-omega) on the geodesic
    kappa_spread: float
    shortcut_amp: complex       # -prefactor * kappa
    predicted_width: float      # 4 |rho_+ + rho_-|, exponential factor included

    @property
    def predicted_width_amp(self) -> float:
        """Width over exp(-S0/h), safe for very small h."""
        return 4.0 * abs(self.rho_plus_amp + self.rho_minus_amp)


def _one_sided_amp(pot, well, wkb, profile, sign, npts):
    """Windowed interaction integral toward the sign*omega well.

    Returns the integral over exp(-S0/h); the exponential weight is
    exactly exp(-S0/h) on the connecting segment because the two distances
    sum to S0 there, so it factors out of the quadrature.
    """
    period = float(pot.lattice.basis[0, 0])
    omega = sign * period
    if sign > 0:
        xs = np.linspace(0.0, period, npts)
        d_here = distance_profile_1d(pot, well.E0, xs)
        total = d_here[-1]
    else:
        xs = np.linspace(-period, 0.0, npts)
        prof = distance_profile_1d(pot, well.E0, xs)     # from the -omega well
        total = prof[-1]
        d_here = total - prof
    d_there = total - d_here              # distance from the omega well, same geodesic
    fr = scipy.interpolate.CubicSpline(wkb.xs, wkb.f.real)
    fi = scipy.interpolate.CubicSpline(wkb.xs, wkb.f.imag)
    def f_at(pts):
        return fr(pts) + 1j * fi(pts)
    chi = profile(d_here)
    dchi = profile.derivative(d_there)
    sel = (np.abs(dchi) > 0) & (chi > 0)
    if not np.any(sel):
        return 0.0 + 0.0j, 0.0 + 0.0j, 0.0
    grad_sq = pot.effective(xs[sel, None]) - well.E0     # equals |grad d|^2 at x - omega by periodicity
    integrand = dchi[sel] * chi[sel] * grad_sq * f_at(xs[sel] - omega) * f_at(xs[sel])
    full = np.zeros(len(xs), dtype=complex)
    full[sel] = integrand
    amp = np.trapezoid(full, xs)
    speed = np.sqrt(np.clip(grad_sq, 0.0, None))
    inv = speed * f_at(xs[sel] - omega) * f_at(xs[sel])
    kappa = complex(np.mean(inv))
    spread = float(np.max(np.abs(inv - kappa)) / max(abs(kappa), 1e-300))
    return amp, kappa, spread


def hopping_coefficient_1d(pot: PauliPotential, well: WellData, wkb: WKBData,
                           h: float, profile: Chi1Profile | None = None,
                           npts: int = 20001) -> HoppingData:
    """Nearest-neighbor interaction coefficients and the predicted band width.

    Requires the transport data to reach past (S0 + eta1)/2 in Agmon
    distance on both sides (frac = 0.6 upstream covers the defaults).
    """
    if pot.lattice.dim != 1:
        raise ValueError("hopping_coefficient_1d requires a 1d lattice")
    period = float(pot.lattice.basis[0, 0])
    S0 = agmon_1d(pot, well.E0, 0.0, period)
    if profile is None:
        profile = Chi1Profile(S0)
    need = 0.5 * (S0 + profile.eta1)
    if wkb.phi[-1] < need - 1e-9 or wkb.phi[0] < need - 1e-9:
        raise ValueError(
            f"transport data reaches Agmon distance {min(wkb.phi[0], wkb.phi[-1]):.3g}, "
            f"window needs {need:.3g}; enlarge frac"
        )
    tau = wkb.tau
    pref = np.sqrt(h) / np.sqrt(2.0 * np.pi * tau)
    amp_p, kappa, spread = _one_sided_amp(pot, well, wkb, profile, +1, npts)
    amp_m, _, _ = _one_sided_amp(pot, well, wkb, profile, -1, npts)
    rho_p = pref * amp_p
    rho_m = pref * amp_m
    expo = np.exp(-S0 / h)
    return HoppingData(h=h, S0=S0, prefactor=pref,
                       rho_plus_amp=rho_p, rho_minus_amp=rho_m,
                       kappa=kappa, kappa_spread=spread,
                       shortcut_amp=-pref * kappa,
                       predicted_width=4.0 * abs(rho_p + rho_m) * expo)
