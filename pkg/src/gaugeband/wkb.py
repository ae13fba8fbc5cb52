"""Semiclassical expansion at the well: harmonic levels, transport, energies.

The ground state of h^2 (D - a)^2 + V_eff + h^2 r expands as
E0 + h e1 + h^2 e2 + O(h^3) with e1 the harmonic frequency sum.  The h^2
coefficient couples the quartic Taylor data of V_eff at the well with the
constant gauge a and the scalar residual r(0).

The outgoing quasimode amplitude f solves the first transport equation
2 phi' f' = (e1 - phi'' + 2 i a phi') f, f(0) = 1.  With the signed speed
sigma(x) = sign(x) sqrt(V_eff - E0) the solution factorizes as

    f = sqrt(tau x / sigma) exp(i a x) exp(int_0^x (tau t - sigma)/(2 t sigma) dt),

whose integrand is analytic through the well, so plain Simpson integration
keeps spectral-level accuracy with no series matching.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.optimize

from .agmon import agmon_1d
from .gauge import GaugeField, fourier_eval
from .potential import PauliPotential, WellData


def harmonic_levels(tau, count: int) -> np.ndarray:
    """Lowest `count` values of sum_k (2 j_k + 1) tau_k over multi-indices j."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    if count < 1:
        raise ValueError("count must be positive")
    sums = []
    for j in itertools.product(range(count), repeat=len(tau)):
        sums.append(float(np.dot(2 * np.array(j) + 1, tau)))
    return np.array(sorted(sums)[:count])


@dataclass
class WKBData:
    xs: np.ndarray
    phi: np.ndarray             # Agmon distance from the well, both sides
    f: np.ndarray               # transport amplitude, f(0) = 1
    f_upper: np.ndarray | None  # leading upper-spinor component of the quasimode
    e0: float
    e1: float
    e2_full: float
    e2_full_imag: float
    e2_simplified: float
    g0: complex
    g1: float
    tau: float
    alpha: float
    beta: float
    a: float
    r0: float
    x_cut: float
    transport_residual: float


def _cumulative_from_center(xs: np.ndarray, y: np.ndarray) -> np.ndarray:
    """F(x) = int_0^x y dt on a symmetric grid with the origin at the center."""
    m = len(xs) // 2
    out = np.empty_like(y)
    out[m] = 0.0
    out[m + 1:] = scipy.integrate.cumulative_simpson(y[m:], x=xs[m:])
    u = -xs[m::-1]
    rev = scipy.integrate.cumulative_simpson(y[m::-1], x=u)
    out[:m] = (-rev)[::-1]
    return out


def _taylor_data(pot: PauliPotential, well: WellData):
    coeffs = pot.effective_taylor_1d(0.0, order=4)
    tau = float(well.tau[0])
    if abs(coeffs[0] - well.E0) > 1e-9 or abs(coeffs[1]) > 1e-9:
        raise ValueError("well data inconsistent with the Taylor expansion at 0")
    if abs(coeffs[2] - tau ** 2) > 1e-9:
        raise ValueError("quadratic Taylor term disagrees with the well curvature")
    c3, c4 = float(coeffs[3]), float(coeffs[4])
    alpha = c3 / (2.0 * tau ** 2)
    beta = c4 / (2.0 * tau ** 2) - c3 ** 2 / (8.0 * tau ** 4)
    return tau, alpha, beta


def energy_coefficients(tau: float, alpha: float, beta: float,
                        a: float, r0: float):
    """(e2_full, imag defect, e2_simplified) from quartic well data and gauge."""
    g0 = -alpha + 1j * a
    g1 = alpha ** 2 - 1.5 * beta
    e2 = -(g1 + g0 ** 2) + 2j * a * g0 + a ** 2 + r0
    simplified = r0 + a ** 2
    return float(e2.real), float(abs(e2.imag)), float(simplified), g0, g1


def _transport_core(xs: np.ndarray, sigma: np.ndarray, tau: float,
                    alpha: float, a: float) -> np.ndarray:
    """Amplitude f on a symmetric grid from the signed speed sigma."""
    m = len(xs) // 2
    num = tau * xs - sigma
    den = 2.0 * xs * sigma
    integrand = np.empty_like(xs)
    mask = np.arange(len(xs)) != m
    integrand[mask] = num[mask] / den[mask]
    integrand[m] = -alpha / 2.0
    J = _cumulative_from_center(xs, integrand)
    amp = np.empty_like(xs)
    amp[mask] = np.sqrt(tau * xs[mask] / sigma[mask])
    amp[m] = 1.0
    return amp * np.exp(J) * np.exp(1j * a * xs)


def transport_solve_1d(pot: PauliPotential, well: WellData,
                       gauge: GaugeField | None = None, frac: float = 0.6,
                       npts: int = 4001) -> WKBData:
    """Quasimode amplitude and energy coefficients for a 1d model.

    The grid spans [-x_cut, x_cut] where the Agmon distance reaches `frac`
    times the cell action S0.  If a gauge field is supplied it must already
    be divergence free; its constant diagonal potential and residual feed
    the h^2 energy coefficient, and the off-diagonal coupling produces the
    leading upper-spinor component.
    """
    if pot.lattice.dim != 1:
        raise ValueError("transport_solve_1d requires a 1d lattice")
    if np.max(np.abs(well.x_min)) > 1e-9:
        raise ValueError("well must be shifted to the origin first")
    a = 0.0
    r0 = 0.0
    if gauge is not None:
        spread = float(gauge.a11[0].max() - gauge.a11[0].min())
        if spread > 1e-8:
            raise ValueError(
                "diagonal gauge potential is not constant; apply the divergence-free transform first"
            )
        a = float(np.mean(gauge.a11[0]))
        r0 = float(fourier_eval(gauge.grid, gauge.r_block, np.array([[0.0]]))[0].real)
    tau, alpha, beta = _taylor_data(pot, well)
    e1 = tau
    period = float(pot.lattice.basis[0, 0])
    S0 = agmon_1d(pot, well.E0, 0.0, period)
    target = frac * S0
    x_cut = scipy.optimize.brentq(
        lambda x: agmon_1d(pot, well.E0, 0.0, x) - target, 1e-8, period - 1e-8,
        xtol=1e-12)
    npts = int(npts) | 1
    xs = np.linspace(-x_cut, x_cut, npts)
    veff = pot.effective(xs[:, None]) - well.E0
    sigma = np.sign(xs) * np.sqrt(np.clip(veff, 0.0, None))
    phi = _cumulative_from_center(xs, sigma)
    f = _transport_core(xs, sigma, tau, alpha, a)
    e2_full, e2_imag, e2_simplified, g0, g1 = energy_coefficients(tau, alpha, beta, a, r0)
    f_upper = None
    if gauge is not None:
        a21 = fourier_eval(gauge.grid, gauge.a21[0], xs[:, None])
        wn = pot.w_norm(xs[:, None])
        f_upper = (1j / wn) * sigma * a21 * f
    resid = _transport_residual(xs, f, sigma, pot, well.E0, e1, a)
    return WKBData(xs=xs, phi=phi, f=f, f_upper=f_upper, e0=well.E0, e1=e1,
                   e2_full=e2_full, e2_full_imag=e2_imag,
                   e2_simplified=e2_simplified, g0=g0, g1=g1, tau=tau,
                   alpha=alpha, beta=beta, a=a, r0=r0, x_cut=x_cut,
                   transport_residual=resid)


def _transport_residual(xs, f, sigma, pot, E0, e1, a) -> float:
    """Max defect of 2 phi' f' - (e1 - phi'' + 2 i a phi') f, 4th-order stencil."""
    dx = xs[1] - xs[0]
    fp = (-f[4:] + 8.0 * f[3:-1] - 8.0 * f[1:-3] + f[:-4]) / (12.0 * dx)
    inner = slice(2, -2)
    grad = pot.effective_gradient(xs[inner, None])[:, 0]
    sig = sigma[inner]
    m = len(xs) // 2
    keep = np.abs(xs[inner]) > 10.0 * dx
    sigp = np.where(np.abs(sig) > 1e-12, grad / (2.0 * np.where(sig == 0, 1.0, sig)), 0.0)
    lhs = 2.0 * sig * fp
    rhs = (e1 - sigp + 2j * a * sig) * f[inner]
    return float(np.max(np.abs((lhs - rhs)[keep])))
