"""Scenario configs, eps- and dx-sweeps, rate fits and stability reports.

A scenario is a plain JSON-compatible dict (see ``DEFAULT_CONFIG``). Runs
are rebuilt from that dict inside worker processes, so sweeps parallelize
without pickling closures.
"""

from __future__ import annotations

import copy
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import jsonschema
import numpy as np

from . import equilibrium as eqm
from .functionals import SaturatedEntropy, dissipation_decomposition, int_potential, lyapunov_G, phi, psi
from .hypotheses import RelaxationMatrix, check_weak_dissipation, check_potential, suggest_A
from .solver import Grid1D, SolverConfig, init_from_exact, run, snapshot_times
from .systems import SystemDefinition, build_system

DEGENERATE_FLOOR = 1e-13
FLOOR_R2 = 0.98


class ConfigError(ValueError):
    """Schema violation; ``path`` is the dotted location of the bad field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path


class DxFloorError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

DEFAULT_CONFIG: Dict = {
    "system": {"name": "linear_reaction", "params": {}},
    "grid": {"x_min": 0.0, "x_max": 1.0, "n_cells": 2048},
    "initial": {"kind": "sine", "amplitude": 1.0, "offset": 0.0, "phase": 0.0, "wavenumber": 1, "value": 0.0},
    "solver": {
        "eps": 1e-3, "t_end": 0.5, "order": 2, "cfl": 0.45, "model": "global_term",
        "snapshot_every": 16, "dt_max": None, "A": None,
    },
    "reference": {"refine": 4, "exact": False, "tv_factor": 1.5},
    "sweep": {"eps": [4e-3, 2e-3, 1e-3, 5e-4], "n_cells": [64, 128, 256, 512], "dx_eps": 1e-2, "floor_check": True},
    "manufactured": {"amplitude": 0.5, "speed": 0.5, "decay": 0.3, "phase": 0.0, "wavenumber": 1, "offset": 0.0},
    "functionals": {"test_entropy_radius": 1.0},
    "seed": 0,
}

_num_or_list = {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}, "minItems": 1}]}

CONFIG_SCHEMA: Dict = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "system": {
            "type": "object", "additionalProperties": False, "required": ["name"],
            "properties": {"name": {"enum": ["linear_reaction", "elasticity", "combustion"]},
                           "params": {"type": "object"}},
        },
        "grid": {
            "type": "object", "additionalProperties": False,
            "properties": {"x_min": {"type": "number"}, "x_max": {"type": "number"},
                           "n_cells": {"type": "integer", "minimum": 4}},
        },
        "initial": {
            "type": "object", "additionalProperties": False,
            "properties": {"kind": {"enum": ["sine", "constant", "steady_exponential"]},
                           "amplitude": _num_or_list, "offset": _num_or_list, "phase": _num_or_list,
                           "wavenumber": {"type": "integer", "minimum": 0}, "value": _num_or_list},
        },
        "solver": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "eps": {"type": "number", "exclusiveMinimum": 0},
                "t_end": {"type": "number", "minimum": 0},
                "order": {"enum": [1, 2]},
                "cfl": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "model": {"enum": ["global_term", "alternative"]},
                "snapshot_every": {"type": "integer", "minimum": 1},
                "dt_max": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "A": {"oneOf": [{"type": "null"}, {"type": "number", "exclusiveMinimum": 0},
                                {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}]},
            },
        },
        "reference": {
            "type": "object", "additionalProperties": False,
            "properties": {"refine": {"type": "integer", "minimum": 1}, "exact": {"type": "boolean"},
                           "tv_factor": {"type": "number", "exclusiveMinimum": 1}},
        },
        "sweep": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "eps": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "n_cells": {"type": "array", "items": {"type": "integer", "minimum": 4}, "minItems": 1},
                "dx_eps": {"type": "number", "exclusiveMinimum": 0},
                "floor_check": {"type": "boolean"},
            },
        },
        "manufactured": {
            "type": "object", "additionalProperties": False,
            "properties": {"amplitude": _num_or_list, "speed": {"type": "number"}, "decay": {"type": "number"},
                           "phase": _num_or_list, "wavenumber": {"type": "integer", "minimum": 0},
                           "offset": _num_or_list},
        },
        "functionals": {
            "type": "object", "additionalProperties": False,
            "properties": {"test_entropy_radius": {"type": "number", "exclusiveMinimum": 0}},
        },
        "seed": {"type": "integer", "minimum": 0},
    },
}


def deep_merge(base: Mapping, over: Mapping) -> Dict:
    out = copy.deepcopy(dict(base))
    for k, v in over.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), Mapping) and k != "params":
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def validate_config(cfg: Mapping) -> None:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(".".join(str(p) for p in e.absolute_path), e.message)


def resolve_config(cfg: Optional[Mapping] = None) -> Dict:
    """Validate ``cfg`` and fill in defaults (builtin scenario first, then globals)."""
    cfg = dict(cfg or {})
    validate_config(cfg)
    name = cfg.get("system", {}).get("name", DEFAULT_CONFIG["system"]["name"])
    base = deep_merge(DEFAULT_CONFIG, SCENARIO_DEFAULTS.get(name, {}))
    full = deep_merge(base, cfg)
    validate_config(full)
    g = full["grid"]
    if not g["x_max"] > g["x_min"]:
        raise ConfigError("grid.x_max", "must exceed grid.x_min")
    return full


def canonical_json(cfg: Mapping) -> str:
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"), allow_nan=False)


# Per-system overrides applied under the user's config.
SCENARIO_DEFAULTS: Dict[str, Dict] = {
    "linear_reaction": {"reference": {"exact": True}},
    "elasticity": {
        "initial": {"amplitude": [0.1, 0.1], "phase": [0.0, 1.0]},
        "manufactured": {"amplitude": [0.5, 0.5], "phase": [0.0, 1.0]},
        "functionals": {"test_entropy_radius": 1.0},
    },
    "combustion": {
        "initial": {"amplitude": [0.5, 0.5, 0.5], "offset": [0.0, 0.0, 0.5], "phase": [0.0, 1.0, 2.0]},
        "manufactured": {"amplitude": [0.2, 0.2, 0.2], "offset": [0.0, 0.0, 0.5], "phase": [0.0, 1.0, 2.0]},
    },
}

# Named scenarios reachable from the command line.
BUILTIN_SCENARIOS: Dict[str, Dict] = {
    "linear_reaction": {"system": {"name": "linear_reaction"}},
    "elasticity": {"system": {"name": "elasticity"}},
    "elasticity_c0": {"system": {"name": "elasticity", "params": {"damping": "positive_part"}}},
    "combustion": {"system": {"name": "combustion"}},
    "steady_linear": {
        "system": {"name": "linear_reaction"},
        "initial": {"kind": "steady_exponential", "value": 1.0},
        "solver": {"eps": 1e-8, "t_end": 0.1},
    },
}


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

def _vec(x, n):
    a = np.atleast_1d(np.asarray(x, float))
    if a.size == 1:
        a = np.full(n, float(a[0]))
    if a.size != n:
        raise ConfigError("", f"expected {n} components, got {a.size}")
    return a


@dataclass
class Scenario:
    config: Dict
    system: SystemDefinition
    grid: Grid1D
    A: RelaxationMatrix

    @classmethod
    def from_config(cls, cfg: Optional[Mapping] = None) -> "Scenario":
        full = resolve_config(cfg)
        sysd = build_system(full["system"]["name"], full["system"].get("params") or {})
        g = full["grid"]
        grid = Grid1D(float(g["x_min"]), float(g["x_max"]), int(g["n_cells"]))
        Aspec = full["solver"]["A"]
        if Aspec is None:
            A = suggest_A(sysd)
        elif isinstance(Aspec, (int, float)):
            A = RelaxationMatrix.scaled_identity(sysd.n, float(Aspec))
        else:
            A = RelaxationMatrix.from_matrix(np.asarray(Aspec, float))
        if A.n != sysd.n:
            raise ConfigError("solver.A", f"expected a {sysd.n}x{sysd.n} matrix")
        return cls(full, sysd, grid, A)

    @property
    def name(self) -> str:
        return self.config.get("name") or self.system.name

    def with_cells(self, n_cells: int) -> "Scenario":
        g = self.grid
        return Scenario(self.config, self.system, Grid1D(g.x_min, g.x_max, int(n_cells)), self.A)

    def initial_profile(self):
        ini = self.config["initial"]
        n = self.system.n
        L = self.grid.length
        x0 = self.grid.x_min
        kind = ini["kind"]
        if kind == "constant":
            c = _vec(ini.get("value", 0.0), n)
            return lambda x: np.tile(c, (len(x), 1))
        if kind == "steady_exponential":
            if "linear_reaction" not in self.system.tags:
                raise ConfigError("initial.kind", "steady_exponential needs the linear_reaction system")
            a, lam = float(self.system.params["a"]), float(self.system.params["lam"])
            c = _vec(ini.get("value", 1.0), n)
            return lambda x: c * np.exp(-lam * (np.asarray(x, float)[:, None] - x0) / a)
        amp = _vec(ini["amplitude"], n)
        off = _vec(ini["offset"], n)
        ph = _vec(ini["phase"], n)
        k = 2.0 * np.pi * int(ini["wavenumber"]) / L
        return lambda x: off + amp * np.sin(k * (np.asarray(x, float)[:, None] - x0) + ph)

    def solver_config(self, eps: Optional[float] = None, forcing=None, order: Optional[int] = None,
                      t_end: Optional[float] = None) -> SolverConfig:
        s = self.config["solver"]
        return SolverConfig(
            eps=float(s["eps"] if eps is None else eps),
            t_end=float(s["t_end"] if t_end is None else t_end),
            A=self.A,
            cfl=float(s["cfl"]),
            order=int(s["order"] if order is None else order),
            model=s["model"],
            snapshot_every=int(s["snapshot_every"]),
            seed=int(self.config["seed"]),
            dt_max=s["dt_max"],
            forcing=forcing,
        )

    def manufactured(self, eps: float) -> eqm.ManufacturedForcing:
        m = self.config["manufactured"]
        n = self.system.n
        exact = eqm.travelling_sine(
            _vec(m["amplitude"], n), speed=float(m["speed"]), decay=float(m["decay"]),
            offset=_vec(m.get("offset", 0.0), n), phase=_vec(m["phase"], n),
            wavenumber=2.0 * np.pi * int(m["wavenumber"]) / self.grid.length,
        )
        return eqm.manufactured_forcing(self.system, exact, eps, self.A)

    def reference(self, times: Sequence[float], forcing=None) -> eqm.EquilibriumTrace:
        r = self.config["reference"]
        exact = bool(r["exact"]) and "linear_reaction" in self.system.tags and forcing is None
        return eqm.solve_balance_law(self.system, self.grid, self.initial_profile(), times=times,
                                     refine=int(r["refine"]), forcing=forcing, tv_factor=float(r["tv_factor"]),
                                     exact=exact)


# ---------------------------------------------------------------------------
# rate fitting
# ---------------------------------------------------------------------------

def fit_rate(params, errors=None):
    """Least-squares slope and r^2 of ``log(error)`` against ``log(param)``.

    Accepts a ``ConvergenceTable`` or two sequences.
    """
    if errors is None:
        params, errors = params.params, params.errors
    p = np.asarray(params, float)
    e = np.asarray(errors, float)
    if p.size != e.size or p.size < 2:
        raise ValueError("need at least two (parameter, error) rows")
    if np.any(e <= 0) or not np.all(np.isfinite(e)):
        raise ValueError("errors must be positive and finite for a log-log fit")
    if np.any(p <= 0):
        raise ValueError("parameters must be positive")
    x, y = np.log(p), np.log(e)
    slope, icpt = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (slope * x + icpt)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot <= 1e-300 else max(0.0, 1.0 - ss_res / ss_tot)
    return float(slope), float(r2)


@dataclass
class ConvergenceTable:
    parameter: str
    rows: List[tuple]
    error_measure: str
    slope: float = math.nan
    r2: float = math.nan
    flags: List[str] = field(default_factory=list)
    details: List[Dict] = field(default_factory=list)

    @classmethod
    def build(cls, parameter: str, rows, error_measure: str, details=None) -> "ConvergenceTable":
        if parameter not in ("eps", "dx"):
            raise ValueError("parameter must be 'eps' or 'dx'")
        order = sorted(range(len(rows)), key=lambda i: -rows[i][0])
        rows = [(float(rows[i][0]), float(rows[i][1])) for i in order]
        details = [details[i] for i in order] if details else []
        t = cls(parameter, rows, error_measure, details=details)
        errs = t.errors
        if len(rows) < 3:
            t.flags.append("insufficient rows")
        if np.max(np.abs(errs)) < DEGENERATE_FLOOR:
            t.flags.append("degenerate")
            return t
        t.slope, t.r2 = fit_rate(t.params, errs)
        if t.r2 < FLOOR_R2:
            t.flags.append("floor suspected")
        if np.any(np.diff(errs) > 1e-12 * np.max(errs)):
            t.flags.append("non-monotone")
        return t

    @property
    def params(self) -> np.ndarray:
        return np.array([r[0] for r in self.rows])

    @property
    def errors(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    @property
    def valid(self) -> bool:
        return not ({"insufficient rows", "degenerate"} & set(self.flags))

    def summary(self) -> Dict:
        return {
            "parameter": self.parameter, "error_measure": self.error_measure,
            "slope": _finite(self.slope), "r2": _finite(self.r2), "flags": list(self.flags),
            "rows": [list(r) for r in self.rows],
        }

    def write(self, outdir, extra: Optional[Mapping] = None) -> List[str]:
        """``table.csv``, ``summary.json`` and the two-column ``loglog.dat``."""
        import os

        os.makedirs(outdir, exist_ok=True)
        files = []
        p = os.path.join(outdir, "table.csv")
        with open(p, "w") as fh:
            fh.write(f"{self.parameter},{self.error_measure}\n")
            for a, b in self.rows:
                fh.write(f"{a!r},{b!r}\n")
        files.append(p)
        p = os.path.join(outdir, "loglog.dat")
        with open(p, "w") as fh:
            for a, b in self.rows:
                fh.write(f"{a!r} {b!r}\n")
        files.append(p)
        p = os.path.join(outdir, "summary.json")
        s = self.summary()
        if extra:
            s.update(extra)
        with open(p, "w") as fh:
            json.dump(s, fh, indent=2, sort_keys=True)
            fh.write("\n")
        files.append(p)
        return files


def _finite(x):
    return None if x is None or not math.isfinite(x) else float(x)


# ---------------------------------------------------------------------------
# single runs
# ---------------------------------------------------------------------------

def _snapshot_us(ref: eqm.EquilibriumTrace):
    return [s.u for s in ref.snapshots]


def _rebuild_reference(sc: Scenario, times, us, forcing=None) -> eqm.EquilibriumTrace:
    snaps = [eqm.make_snapshot(sc.system, u, sc.grid, t, forcing) for t, u in zip(times, us)]
    return eqm.EquilibriumTrace(sc.grid, snaps, forcing)


def run_summary(sc: Scenario, eps: float, ref_us=None, ref_times=None, decomposition: bool = False,
                model: Optional[str] = None) -> Dict:
    """Run the scenario at ``eps`` and return every per-run scalar the reports need."""
    cfg = sc.solver_config(eps)
    if model is not None:
        from dataclasses import replace

        cfg = replace(cfg, model=model)
    u0 = sc.initial_profile()
    trace = run(sc.system, sc.grid, u0, cfg)
    times = trace.times
    out = {"eps": float(eps), "n_cells": sc.grid.n_cells, "model": cfg.model, "n_snapshots": len(times),
           "t_end": float(times[-1])}
    phis = np.array([phi(f, eps) for f in trace.snapshots])
    out["phi0"] = float(phis[0])
    out["sup_phi"] = float(np.max(phis))
    if sc.system.has_potential:
        iR = np.array([int_potential(sc.system, f) for f in trace.snapshots])
        comb = phis + eps * iR
        out["phi_epsR0"] = float(comb[0])
        out["sup_phi_epsR"] = float(np.max(comb))
        dens = [abs_entropy_source(sc.system, f) for f in trace.snapshots]
        out["int_abs_DetaG"] = _trapz(dens, times)
    if ref_us is not None:
        if len(ref_times) != len(times) or np.any(np.asarray(ref_times) != times):
            raise RuntimeError("reference snapshot times do not match the relaxation schedule")
        ref = _rebuild_reference(sc, times, ref_us)
        ps = np.array([psi(f, e, eps) for f, e in zip(trace.snapshots, ref.snapshots)])
        out["psi0"] = float(ps[0])
        out["sup_psi"] = float(np.max(ps))
        out["psi_final"] = float(ps[-1])
        Gs = np.array([lyapunov_G(sc.system, f, e, eps, sc.A) for f, e in zip(trace.snapshots, ref.snapshots)])
        ratio = Gs[ps > 1e-300] / ps[ps > 1e-300]
        out["G_over_psi_min"] = float(np.min(ratio)) if ratio.size else math.nan
        out["G_over_psi_max"] = float(np.max(ratio)) if ratio.size else math.nan
        out["min_G"] = float(np.min(Gs))
        err = trace.final.u - ref.snapshots[-1].u
        out["final_L2"] = float(np.sqrt(sc.grid.dx * np.sum(err**2)))
    if decomposition:
        test = SaturatedEntropy(sc.system, float(sc.config["functionals"]["test_entropy_radius"]))
        dec = dissipation_decomposition(sc.system, trace, test)
        out.update({f"{k}_norm": v for k, v in dec.spacetime.items()})
        out["compatibility_defect"] = dec.compatibility_defect
    u_all = np.concatenate([f.u for f in trace.snapshots])
    out["u_min"] = [float(v) for v in u_all.min(axis=0)]
    out["u_max"] = [float(v) for v in u_all.max(axis=0)]
    return out


def abs_entropy_source(sys, f) -> float:
    return float(f.grid.dx * np.sum(np.abs(np.sum(sys.Deta(f.u) * sys.G(f.u), axis=1))))


def _trapz(y, t):
    y = np.asarray(y, float)
    t = np.asarray(t, float)
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t))) if len(t) > 1 else 0.0


def _worker(args):
    cfg, n_cells, eps, ref_times, ref_us, decomposition, model = args
    sc = Scenario.from_config(cfg).with_cells(n_cells)
    return run_summary(sc, eps, ref_us, ref_times, decomposition, model)


def _map(jobs: int, fn, items):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(a) for a in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def reference_for(sc: Scenario, eps: float):
    """Reference snapshots on the relaxation schedule of ``eps`` (times, u arrays, trace)."""
    times = snapshot_times(sc.grid, sc.solver_config(eps))
    ref = sc.reference(times)
    return times, _snapshot_us(ref), ref


def _schedule_key(sc, eps):
    return tuple(snapshot_times(sc.grid, sc.solver_config(eps)))


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def _references(sc: Scenario, eps_list):
    refs = {}
    by_eps = {}
    for e in eps_list:
        key = _schedule_key(sc, e)
        if key not in refs:
            times, us, ref = reference_for(sc, e)
            refs[key] = (times, us, ref)
        by_eps[e] = refs[key]
    return by_eps


def eps_sweep(sc: Scenario, eps_list: Optional[Sequence[float]] = None, jobs: int = 1,
              floor_check: Optional[bool] = None, decomposition: bool = False,
              model: Optional[str] = None) -> ConvergenceTable:
    """sup_t Psi for each eps with well-prepared data; slope fitted in log-log.

    The dx-floor proxy reruns the smallest eps on half the cells; the change
    in sup_t Psi must stay below 10% of sup_t Psi at the largest eps.
    """
    eps_list = [float(e) for e in (eps_list if eps_list is not None else sc.config["sweep"]["eps"])]
    if len(eps_list) < 2 or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing with at least two entries")
    floor_check = sc.config["sweep"]["floor_check"] if floor_check is None else floor_check
    refs = _references(sc, eps_list)
    tv_flag = any(r[2].shock_flag for r in refs.values())
    args = [(sc.config, sc.grid.n_cells, e, refs[e][0], refs[e][1], decomposition, model) for e in eps_list]
    results = _map(jobs, _worker, args)
    table = ConvergenceTable.build("eps", [(r["eps"], r["sup_psi"]) for r in results], "sup_t_Psi", results)
    if tv_flag:
        table.flags.append("possible shock; theorems inapplicable")
    if floor_check:
        coarse = sc.with_cells(sc.grid.n_cells // 2)
        e = eps_list[-1]
        times, us, _ = reference_for(coarse, e)
        rc = run_summary(coarse, e, us, times, model=model)
        proxy = abs(rc["sup_psi"] - table.details[-1]["sup_psi"])
        limit = 0.1 * table.details[0]["sup_psi"]
        table.details[-1]["dx_floor_proxy"] = proxy
        if not proxy < limit:
            raise DxFloorError(
                f"dx-floor: halving the grid changes sup Psi by {proxy:.3e} at eps={e:g}, "
                f"limit {limit:.3e}; refine the grid")
    return table


def dx_sweep(sc: Scenario, n_list: Optional[Sequence[int]] = None, eps: Optional[float] = None,
             order: Optional[int] = None, t_end: Optional[float] = None, zero_forcing: bool = False) -> ConvergenceTable:
    """Final-time L2 error against the manufactured solution for each grid.

    With ``zero_forcing`` the exact solution is the constant initial state
    (``initial.kind = constant``) and no forcing is attached.
    """
    n_list = [int(n) for n in (n_list if n_list is not None else sc.config["sweep"]["n_cells"])]
    eps = float(sc.config["sweep"]["dx_eps"] if eps is None else eps)
    rows, details = [], []
    for n in n_list:
        s = sc.with_cells(n)
        if zero_forcing:
            cfg = s.solver_config(eps, order=order, t_end=t_end)
            u0 = s.initial_profile()
            tr = run(s.system, s.grid, u0, cfg)
            exact = u0(s.grid.centers)
        else:
            mf = s.manufactured(eps)
            cfg = s.solver_config(eps, forcing=mf.relaxation, order=order, t_end=t_end)
            init = init_from_exact(s.system, s.grid, mf.exact.u, mf.exact.ut, cfg.model, mf.relaxation)
            tr = run(s.system, s.grid, None, cfg, initial=init)
            exact = mf.exact.u(s.grid.centers, tr.final.time)
        err = float(np.sqrt(s.grid.dx * np.sum((tr.final.u - exact) ** 2)))
        rows.append((s.grid.dx, err))
        details.append({"n_cells": n, "dx": s.grid.dx, "error": err, "order": cfg.order, "eps": eps})
    return ConvergenceTable.build("dx", rows, "final_L2_vs_exact", details)


@dataclass
class StabilityReport:
    eps: List[float]
    phi_ratio: List[float]
    phi_epsR_ratio: List[Optional[float]]
    int_abs_DetaG: List[Optional[float]]
    spread: float
    common_C: float

    def to_dict(self) -> Dict:
        return asdict(self)


def stability_from_runs(results: Sequence[Mapping]) -> StabilityReport:
    eps = [r["eps"] for r in results]
    pr = [r["sup_phi"] / r["phi0"] if r["phi0"] > 0 else 1.0 for r in results]
    per = [(r["sup_phi_epsR"] / r["phi_epsR0"] if r.get("phi_epsR0", 0) > 0 else 1.0) if "sup_phi_epsR" in r else None
           for r in results]
    dg = [r.get("int_abs_DetaG") for r in results]
    spread = max(pr) / min(pr) - 1.0
    cands = [x for x in per if x is not None] or pr
    return StabilityReport(eps, pr, per, dg, spread, max(cands))


def stability_report(sc: Scenario, eps_list: Optional[Sequence[float]] = None, jobs: int = 1) -> StabilityReport:
    """Per-eps ``sup_t phi / phi(0)`` and ``sup_t (phi + eps int R) / initial`` with their spread."""
    eps_list = [float(e) for e in (eps_list if eps_list is not None else sc.config["sweep"]["eps"])]
    args = [(sc.config, sc.grid.n_cells, e, None, None, False, None) for e in eps_list]
    return stability_from_runs(_map(jobs, _worker, args))


# ---------------------------------------------------------------------------
# hypothesis gating
# ---------------------------------------------------------------------------

RATE_BOUNDS = {
    "weakly_dissipative_c2": (1.7, 2.3),
    "weakly_dissipative_c0": (0.8, 2.3),
    "lipschitz_source": (1.7, 2.3),
}


def rate_assertion(sc: Scenario, n_samples: int = 4000) -> Dict:
    """Which eps-rate may be asserted for this scenario.

    Weakly dissipative scenarios must certify (H3-a) and (H4) on the system
    box; otherwise the harness falls back to the Lipschitz-source rate.
    """
    sysd = sc.system
    seed = int(sc.config["seed"])
    if "weakly_dissipative" in sysd.tags:
        wd = check_weak_dissipation(sysd, n_pairs=n_samples, seed=seed)
        pot = check_potential(sysd, n_samples=n_samples, seed=seed)
        if wd.holds and pot.holds:
            kind = "weakly_dissipative_c0" if "c0_source" in sysd.tags else "weakly_dissipative_c2"
            return {"kind": kind, "bounds": RATE_BOUNDS[kind], "gated_by": ["H3a", "H4"]}
    return {"kind": "lipschitz_source", "bounds": RATE_BOUNDS["lipschitz_source"], "gated_by": ["H3b"]}


def assert_rate(table: ConvergenceTable, bounds, r2_min: Optional[float] = None) -> List[str]:
    """Failure messages (empty when the table meets the bounds)."""
    fails = []
    lo, hi = bounds
    if not table.valid:
        fails.append(f"table not valid: {table.flags}")
    elif not lo <= table.slope <= hi:
        fails.append(f"slope {table.slope:.3f} outside [{lo}, {hi}]")
    if r2_min is not None and not (table.r2 >= r2_min):
        fails.append(f"r2 {table.r2:.4f} below {r2_min}")
    return fails
