"""Config-driven experiment runner with JSON reports.

A config file describes one periodic model (lattice plus trigonometric
coefficient tables) and numerical parameters; run_experiment dispatches a
named task and returns a serializable report stamped with the config hash.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .agmon import agmon_1d, eikonal_domain, fast_march, least_action
from .bloch import (DirectAssembler, GaugedAssembler, ScalarAssembler,
                    band_sweep, plane_wave_basis)
from .gauge import block_symbols, coulomb_transform, induced_gauge
from .lattice import Lattice, TorusGrid, brillouin_grid
from .potential import (PauliPotential, find_well, shift_to_origin,
                        trig_poly_from_terms, validate_model)
from .tunneling import fit_width_law, hopping_coefficient_1d, width_scan
from .wkb import harmonic_levels, transport_solve_1d

_DEFAULTS = {1: {"M": 64, "P": 256, "K": 33}, 2: {"M": 16, "P": 64, "K": 9}}

TASKS = ("validate", "bands", "reduce", "gauge-check", "agmon", "wkb",
         "widths", "hopping")


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass
class RunConfig:
    name: str
    pot: PauliPotential
    M: int
    P: int
    K: int
    hs: list
    raw: dict

    @property
    def dim(self) -> int:
        return self.pot.lattice.dim


def config_hash(raw: dict) -> str:
    """sha256 over the canonical JSON form of the config."""
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _parse_terms(raw, n: int, field: str):
    out = []
    for rec in raw:
        if not isinstance(rec, dict) or "m" not in rec:
            raise ConfigError(f"{field}: each term needs an 'm' index, got {rec!r}")
        m = rec["m"]
        m = [m] if isinstance(m, (int, float)) else list(m)
        if len(m) != n or any(int(v) != v for v in m):
            raise ConfigError(f"{field}: index {rec['m']!r} is not {n} integers")
        out.append({"m": tuple(int(v) for v in m),
                    "re": float(rec.get("re", 0.0)),
                    "im": float(rec.get("im", 0.0))})
    return out


def load_config(source) -> RunConfig:
    """Build a RunConfig from a dict, a JSON string, or a file path."""
    if isinstance(source, dict):
        raw = source
        name_default = "unnamed"
    else:
        text = str(source)
        if text.lstrip().startswith("{"):
            raw = json.loads(text)
            name_default = "unnamed"
        else:
            with open(text) as fh:
                raw = json.load(fh)
            name_default = os.path.splitext(os.path.basename(text))[0]
    if "lattice" not in raw:
        raise ConfigError("config needs a 'lattice' entry (n x n, row-major)")
    lat_raw = raw["lattice"]
    arr = np.asarray(lat_raw, dtype=float)
    if arr.ndim == 1:
        n = int(round(np.sqrt(arr.size)))
        if n * n != arr.size:
            raise ConfigError(f"flat lattice list of length {arr.size} is not square")
        arr = arr.reshape(n, n)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ConfigError(f"lattice must be square, got shape {arr.shape}")
    n = arr.shape[0]
    if abs(np.linalg.det(arr)) < 1e-12:
        raise ConfigError("lattice basis is singular")
    if n not in _DEFAULTS:
        raise ConfigError(f"only 1d and 2d lattices are supported, got {n}d")
    lattice = Lattice(basis=arr)
    try:
        v = trig_poly_from_terms(lattice, _parse_terms(raw.get("v", []), n, "v"))
        w = tuple(trig_poly_from_terms(lattice, _parse_terms(raw.get(k, []), n, k))
                  for k in ("w1", "w2", "w3"))
        pot = PauliPotential(v, w)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    d = _DEFAULTS[n]
    def _int(key, default):
        val = raw.get(key, default)
        if int(val) != val or int(val) < 1:
            raise ConfigError(f"{key} must be a positive integer, got {val!r}")
        return int(val)
    hs = raw.get("h", [0.5])
    hs = [hs] if isinstance(hs, (int, float)) else list(hs)
    if not hs or any(not 0.0 < float(h) for h in hs):
        raise ConfigError(f"h values must be positive, got {hs!r}")
    return RunConfig(name=str(raw.get("name", name_default)), pot=pot,
                     M=_int("M", d["M"]), P=_int("P", d["P"]), K=_int("K", d["K"]),
                     hs=[float(h) for h in hs], raw=raw)


def fit_power(xs, ys) -> tuple:
    """Slope and intercept of log y against log x."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if np.any(xs <= 0.0) or np.any(ys <= 0.0):
        raise ValueError("power-law fit needs positive data")
    slope, intercept = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(slope), float(np.exp(intercept))


def richardson(hs, ys, power: int = 1) -> float:
    """Neville extrapolation of ys(h) to h = 0, error polynomial in h^power.

    After stage k, entry i interpolates through nodes i..i+k; the top entry
    ends up using every sample.
    """
    t = np.asarray(hs, dtype=float) ** power
    col = np.asarray(ys, dtype=float).copy()
    if len(t) != len(col) or len(t) < 2:
        raise ValueError("need matching sequences of length at least 2")
    if len(np.unique(t)) != len(t):
        raise ValueError("extrapolation nodes must be distinct")
    m = len(t)
    for k in range(1, m):
        col[:m - k] = (t[:m - k] * col[1:m - k + 1] - t[k:] * col[:m - k]) / (
            t[:m - k] - t[k:])
    return float(col[0])


def write_report(report: dict, path: str) -> None:
    """Atomic JSON write: temp file in the target directory, then replace."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _well(cfg: RunConfig):
    grid = TorusGrid(cfg.pot.lattice, cfg.P)
    well = find_well(cfg.pot, grid)
    pot0, well0 = shift_to_origin(cfg.pot, well)
    return grid, pot0, well0, well


def _task_validate(cfg: RunConfig) -> dict:
    grid = TorusGrid(cfg.pot.lattice, cfg.P)
    rep = validate_model(cfg.pot, grid)
    data = {"min_w_norm": rep.min_w_norm, "local_minima": rep.local_minima,
            "hessian_eigs": list(rep.hessian_eigs), "messages": rep.messages}
    if rep.ok:
        well = find_well(cfg.pot, grid)
        data["well"] = {"x_min": list(np.atleast_1d(well.x_min)),
                        "E0": well.E0, "tau": list(well.tau)}
    return {"ok": bool(rep.ok), "data": data}


def _task_bands(cfg: RunConfig) -> dict:
    count = int(cfg.raw.get("bands", 6))
    basis = plane_wave_basis(cfg.pot.lattice, cfg.M)
    asm = DirectAssembler(cfg.pot, basis)
    sample = brillouin_grid(cfg.pot.lattice, cfg.K)
    table = {}
    for h in cfg.hs:
        bands = band_sweep(asm, h, sample, count)
        table[f"{h}"] = {
            "min": [float(x) for x in bands.min(axis=0)],
            "max": [float(x) for x in bands.max(axis=0)],
            "width": [float(x) for x in bands.max(axis=0) - bands.min(axis=0)],
        }
    return {"ok": True, "data": {"bands": count, "K": cfg.K, "table": table}}


def _task_reduce(cfg: RunConfig) -> dict:
    _, pot0, well0, well = _well(cfg)
    grid0 = TorusGrid(pot0.lattice, cfg.P)
    g = induced_gauge(pot0, grid0)
    if cfg.raw.get("coulomb", True):
        g = coulomb_transform(g)
    lower = block_symbols(g, "lower")
    data = {
        "well": {"x_min": list(np.atleast_1d(well.x_min)), "E0": well0.E0,
                 "tau": list(well0.tau)},
        "branch": g.frame.branch,
        "unitarity_error": g.frame.unitarity_error,
        "residual_max": g.residual_max,
        "formula_error": g.formula_error,
        "hermiticity_error": g.hermiticity_error,
        "tail": g.tail,
        "a_diag_mean": [float(np.mean(lower.a[k])) for k in range(cfg.dim)],
        "coupling_max": float(np.max(np.sqrt(np.sum(np.abs(
            g.a_vec[..., 0] + 1j * g.a_vec[..., 1]) ** 2, axis=0)))),
        "r_well": float(np.real(lower.r.flat[0])),
    }
    return {"ok": True, "data": data}


def _task_gauge_check(cfg: RunConfig) -> dict:
    tol = float(cfg.raw.get("tol", 1e-6))
    count = int(cfg.raw.get("bands", 6))
    _, pot0, well0, _ = _well(cfg)
    grid0 = TorusGrid(pot0.lattice, cfg.P)
    g = induced_gauge(pot0, grid0)
    basis = plane_wave_basis(pot0.lattice, cfg.M)
    direct = DirectAssembler(pot0, basis)
    gauged = GaugedAssembler(g, basis)
    sample = brillouin_grid(pot0.lattice, cfg.K)
    stride = max(1, sample.tgrid.shape[0] // 8)
    worst = 0.0
    for h in cfg.hs:
        d = band_sweep(direct, h, sample, count)
        q = band_sweep(gauged, h, sample, count)
        worst = max(worst, float(np.max(np.abs(d[::stride] - q[::stride]))))
    return {"ok": worst < tol, "data": {"max_mismatch": worst, "tol": tol,
                                        "bands": count}}


def _task_agmon(cfg: RunConfig) -> dict:
    _, pot0, well0, _ = _well(cfg)
    if cfg.dim == 1:
        period = float(pot0.lattice.basis[0, 0])
        S0 = agmon_1d(pot0, well0.E0, 0.0, period)
        return {"ok": True, "data": {"S0": S0, "multiplicity": 2,
                                     "method": "quadrature"}}
    Q = int(cfg.raw.get("Q", 64))
    dom = eikonal_domain(pot0, well0, Q)
    dist = fast_march(dom, well0)
    act = least_action(dom, dist)
    return {"ok": True, "data": {"S0": act.value, "multiplicity": act.multiplicity,
                                 "directions": [list(map(int, d)) for d in act.directions],
                                 "Q": Q, "method": "fast-marching"}}


def _task_wkb(cfg: RunConfig) -> dict:
    if cfg.dim != 1:
        raise ConfigError("the wkb task requires a 1d lattice")
    _, pot0, well0, _ = _well(cfg)
    grid0 = TorusGrid(pot0.lattice, cfg.P)
    g = coulomb_transform(induced_gauge(pot0, grid0))
    wkb = transport_solve_1d(pot0, well0, gauge=g)
    e1 = float(harmonic_levels(well0.tau, 1)[0])
    return {"ok": True, "data": {
        "E0": well0.E0, "e1": e1, "e2_full": wkb.e2_full,
        "e2_full_imag": wkb.e2_full_imag, "e2_simplified": wkb.e2_simplified,
        "x_cut": wkb.x_cut, "transport_residual": wkb.transport_residual,
        "gauge_mean": wkb.a, "r_well": wkb.r0}}


def _widths_scan(cfg: RunConfig):
    operator = cfg.raw.get("operator", "direct")
    basis = plane_wave_basis(cfg.pot.lattice, cfg.M)
    if operator == "direct":
        asm = DirectAssembler(cfg.pot, basis)
    elif operator in ("lower", "upper"):
        _, pot0, _, _ = _well(cfg)
        grid0 = TorusGrid(pot0.lattice, cfg.P)
        g = induced_gauge(pot0, grid0)
        asm = ScalarAssembler(block_symbols(g, operator), basis)
    else:
        raise ConfigError(f"unknown operator {operator!r}")
    sample = brillouin_grid(cfg.pot.lattice, cfg.K)
    band = int(cfg.raw.get("band", 0))
    return width_scan(asm, cfg.hs, sample, band=band)


def _task_widths(cfg: RunConfig) -> dict:
    if cfg.dim != 1:
        raise ConfigError("the widths task requires a 1d lattice")
    scan = _widths_scan(cfg)
    data = {"h": list(scan.hs), "width": [float(w) for w in scan.widths],
            "center": [float(c) for c in scan.centers], "band": scan.band}
    try:
        fit = fit_width_law(scan.hs, scan.widths)
        data["fit"] = {"model": fit.model, "S": fit.S, "prefactor": fit.prefactor,
                       "power": fit.power, "n_used": fit.n_used,
                       "sse": fit.sse, "exponential": fit.exponential}
    except ValueError as exc:
        data["fit"] = {"error": str(exc)}
    return {"ok": "error" not in data["fit"], "data": data}


def _task_hopping(cfg: RunConfig) -> dict:
    if cfg.dim != 1:
        raise ConfigError("the hopping task requires a 1d lattice")
    _, pot0, well0, _ = _well(cfg)
    grid0 = TorusGrid(pot0.lattice, cfg.P)
    g = coulomb_transform(induced_gauge(pot0, grid0))
    wkb = transport_solve_1d(pot0, well0, gauge=g)
    rows = []
    for h in cfg.hs:
        hop = hopping_coefficient_1d(pot0, well0, wkb, h)
        rows.append({"h": h, "predicted_width": hop.predicted_width,
                     "rho_plus": [hop.rho_plus_amp.real, hop.rho_plus_amp.imag],
                     "rho_minus": [hop.rho_minus_amp.real, hop.rho_minus_amp.imag]})
    data = {"S0": hop.S0, "kappa": [hop.kappa.real, hop.kappa.imag],
            "kappa_spread": hop.kappa_spread, "rows": rows}
    if cfg.raw.get("measure", False):
        scan = _widths_scan(cfg)
        for row, w in zip(rows, scan.widths):
            row["measured_width"] = float(w)
            row["ratio"] = float(w / row["predicted_width"])
    return {"ok": True, "data": data}


_TASK_FNS = {
    "validate": _task_validate,
    "bands": _task_bands,
    "reduce": _task_reduce,
    "gauge-check": _task_gauge_check,
    "agmon": _task_agmon,
    "wkb": _task_wkb,
    "widths": _task_widths,
    "hopping": _task_hopping,
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def run_experiment(task: str, cfg: RunConfig) -> dict:
    """Run one named task; the report carries name, task, and config hash."""
    if task not in _TASK_FNS:
        raise ConfigError(f"unknown task {task!r}; choose from {', '.join(TASKS)}")
    result = _TASK_FNS[task](cfg)
    return {"task": task, "name": cfg.name, "config_hash": config_hash(cfg.raw),
            "ok": bool(result["ok"]), "data": _jsonable(result["data"])}
