"""Command line entry point: ``relaxbl check|run|sweep-eps|sweep-dx|report``.

Exit codes: 0 success, 1 usage or configuration error, 2 hypothesis failure
under ``check --strict``, 3 assertion failure under ``--assert``.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from . import harness as hn
from .functionals import SaturatedEntropy, evaluate_trace
from .hypotheses import RelaxationMatrix, check_all, suggest_A
from .solver import SolverError, compute_global_term, run
from .systems import SystemDefinitionError, build_system

OUTPUT_ROOT_ENV = "RELAXBL_OUTPUT_ROOT"
EXIT_OK, EXIT_USAGE, EXIT_HYPOTHESIS, EXIT_ASSERT = 0, 1, 2, 3


@dataclass
class RunManifest:
    command: str
    config_hash: str
    code_version: str
    seed: int
    started: str
    finished: str = ""
    outputs: List[str] = field(default_factory=list)
    config: Dict = field(default_factory=dict)

    @staticmethod
    def hash_config(cfg) -> str:
        return hashlib.sha256(hn.canonical_json(cfg).encode()).hexdigest()

    def verify(self) -> bool:
        return self.hash_config(self.config) == self.config_hash

    def write(self, outdir: str) -> str:
        p = os.path.join(outdir, "manifest.json")
        with open(p, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return p

    @classmethod
    def read(cls, path: str) -> "RunManifest":
        with open(path) as fh:
            return cls(**json.load(fh))


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _eprint(*a):
    print(*a, file=sys.stderr)


def _load_config(args) -> Dict:
    cfg: Dict = {}
    if getattr(args, "scenario", None):
        if args.scenario not in hn.BUILTIN_SCENARIOS:
            raise hn.ConfigError("scenario", f"unknown scenario {args.scenario!r}; choose from {sorted(hn.BUILTIN_SCENARIOS)}")
        cfg = hn.deep_merge(cfg, hn.BUILTIN_SCENARIOS[args.scenario])
        cfg.setdefault("name", args.scenario)
    if getattr(args, "config", None):
        with open(args.config) as fh:
            try:
                user = json.load(fh)
            except json.JSONDecodeError as e:
                raise hn.ConfigError("", f"invalid JSON: {e}") from None
        if not isinstance(user, dict):
            raise hn.ConfigError("", "config must be a JSON object")
        cfg = hn.deep_merge(cfg, user)
    return hn.resolve_config(cfg)


def _outdir(args, cmd: str, cfg: Dict) -> str:
    if getattr(args, "out", None):
        d = args.out
    else:
        root = os.environ.get(OUTPUT_ROOT_ENV, "runs")
        name = cfg.get("name") or cfg["system"]["name"]
        d = os.path.join(root, f"{cmd}-{name}-{RunManifest.hash_config(cfg)[:10]}")
    os.makedirs(d, exist_ok=True)
    return d


def _parse_A(text: Optional[str], n: int):
    if text is None:
        return None
    val = json.loads(text)
    if isinstance(val, (int, float)):
        return RelaxationMatrix.scaled_identity(n, float(val))
    return RelaxationMatrix.from_matrix(np.asarray(val, float))


# ---------------------------------------------------------------------------
# CSV writers
# ---------------------------------------------------------------------------

def field_header(n: int) -> List[str]:
    return ["x"] + [f"u_{i + 1}" for i in range(n)] + [f"v_{i + 1}" for i in range(n)] + [f"R_{i + 1}" for i in range(n)]


def write_snapshot_csv(path: str, x, u, v, R, t: float) -> None:
    n = u.shape[1]
    data = np.column_stack([x, u, v, R])
    with open(path, "w") as fh:
        fh.write(f"# t={t!r}\n")
        fh.write(",".join(field_header(n)) + "\n")
        for row in data:
            fh.write(",".join(repr(float(a)) for a in row) + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_check(args) -> int:
    params = json.loads(args.params) if args.params else {}
    sysd = build_system(args.system, params)
    A = _parse_A(args.A, sysd.n) or suggest_A(sysd)
    summary = check_all(sysd, A, n_samples=args.samples, seed=args.seed, model=args.model)
    out = summary.to_dict()
    out["system"] = args.system
    out["A"] = A.A.tolist()
    text = json.dumps(out, indent=2, sort_keys=True)
    print(text)
    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    if args.strict and not summary.passed:
        return EXIT_HYPOTHESIS
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load_config(args)
    if args.eps is not None:
        cfg["solver"]["eps"] = args.eps
    if args.t_end is not None:
        cfg["solver"]["t_end"] = args.t_end
    hn.validate_config(cfg)
    sc = hn.Scenario.from_config(cfg)
    outdir = _outdir(args, "run", cfg)
    man = RunManifest("run", RunManifest.hash_config(cfg), __version__, int(cfg["seed"]), _now(), config=cfg)
    scfg = sc.solver_config()
    trace = run(sc.system, sc.grid, sc.initial_profile(), scfg)
    files = []
    x = sc.grid.centers
    for k, f in enumerate(trace.snapshots):
        p = os.path.join(outdir, f"snapshot_{k:04d}.csv")
        write_snapshot_csv(p, x, f.u, f.v, f.global_term, f.time)
        files.append(p)
    equil = None
    if args.reference:
        equil = sc.reference(trace.times)
        for k, e in enumerate(equil.snapshots):
            p = os.path.join(outdir, f"equilibrium_snapshot_{k:04d}.csv")
            if scfg.model == "global_term":
                Rb = compute_global_term(sc.system, e.u, sc.grid, e.time)
            else:
                Rb = np.zeros_like(e.u)
            write_snapshot_csv(p, x, e.u, sc.system.F(e.u) - Rb, Rb, e.time)
            files.append(p)
    test = SaturatedEntropy(sc.system, float(cfg["functionals"]["test_entropy_radius"]))
    ft = evaluate_trace(sc.system, trace, equil, test, identities=args.identities)
    p = os.path.join(outdir, "functionals.csv")
    ft.to_csv(p)
    files.append(p)
    man.outputs = [os.path.basename(f) for f in files]
    man.finished = _now()
    man.write(outdir)
    print(json.dumps({"outdir": outdir, "snapshots": len(trace.snapshots), "t_end": float(trace.times[-1])}))
    return EXIT_OK


def _finish_sweep(args, cmd, cfg, table, extra, bounds, r2_min=None) -> int:
    outdir = _outdir(args, cmd, cfg)
    man = RunManifest(cmd, RunManifest.hash_config(cfg), __version__, int(cfg["seed"]), _now(), config=cfg)
    fails = hn.assert_rate(table, bounds, r2_min)
    extra = dict(extra)
    extra["bounds"] = list(bounds)
    extra["verdict"] = "pass" if not fails else "fail"
    extra["failures"] = fails
    files = table.write(outdir, extra)
    details = os.path.join(outdir, "runs.json")
    with open(details, "w") as fh:
        json.dump(table.details, fh, indent=2, sort_keys=True)
        fh.write("\n")
    man.outputs = [os.path.basename(f) for f in files + [details]]
    man.finished = _now()
    man.write(outdir)
    print(json.dumps({"outdir": outdir, "slope": hn._finite(table.slope), "r2": hn._finite(table.r2),
                      "flags": table.flags, "verdict": extra["verdict"]}))
    if args.assert_ and fails:
        for f in fails:
            _eprint(f"assertion failed: {f}")
        return EXIT_ASSERT
    return EXIT_OK


def cmd_sweep_eps(args) -> int:
    cfg = _load_config(args)
    if args.eps:
        cfg["sweep"]["eps"] = [float(e) for e in args.eps]
    hn.validate_config(cfg)
    sc = hn.Scenario.from_config(cfg)
    gate = hn.rate_assertion(sc)
    table = hn.eps_sweep(sc, jobs=args.jobs, decomposition=args.decomposition)
    stab = hn.stability_from_runs(table.details)
    extra = {"gate": gate["kind"], "gated_by": gate["gated_by"], "stability": stab.to_dict()}
    r2_min = hn.FLOOR_R2 if gate["kind"] != "weakly_dissipative_c0" else None
    return _finish_sweep(args, "sweep-eps", cfg, table, extra, gate["bounds"], r2_min)


DX_BOUNDS = {1: (0.8, 1.3), 2: (1.6, 2.3)}


def cmd_sweep_dx(args) -> int:
    cfg = _load_config(args)
    if args.n_cells:
        cfg["sweep"]["n_cells"] = [int(n) for n in args.n_cells]
    if args.eps is not None:
        cfg["sweep"]["dx_eps"] = args.eps
    if args.order is not None:
        cfg["solver"]["order"] = args.order
    hn.validate_config(cfg)
    sc = hn.Scenario.from_config(cfg)
    table = hn.dx_sweep(sc)
    order = int(cfg["solver"]["order"])
    return _finish_sweep(args, "sweep-dx", cfg, table, {"order": order}, DX_BOUNDS[order])


def cmd_report(args) -> int:
    rows = []
    failed = []
    for d in args.runs:
        man_p = os.path.join(d, "manifest.json")
        if not os.path.exists(man_p):
            raise FileNotFoundError(f"{d}: no manifest.json")
        man = RunManifest.read(man_p)
        entry = {"dir": d, "command": man.command, "config_hash": man.config_hash,
                 "hash_ok": man.verify(), "name": man.config.get("name") or man.config.get("system", {}).get("name")}
        sp = os.path.join(d, "summary.json")
        if os.path.exists(sp):
            with open(sp) as fh:
                s = json.load(fh)
            entry.update({k: s.get(k) for k in ("slope", "r2", "flags", "verdict", "bounds", "error_measure")})
            if s.get("verdict") == "fail":
                failed.append(d)
        fp = os.path.join(d, "functionals.csv")
        if os.path.exists(fp):
            from .functionals import FunctionalTrace

            ft = FunctionalTrace.from_csv(fp)
            ph = ft.column("phi")
            entry["sup_phi_ratio"] = float(np.max(ph) / ph[0]) if ph[0] > 0 else None
            entry["n_times"] = len(ft.rows)
        if not entry["hash_ok"]:
            failed.append(d)
        rows.append(entry)
    report = {"runs": rows, "failed": failed, "verdict": "fail" if failed else "pass"}
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    if args.assert_ and failed:
        return EXIT_ASSERT
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _scenario_args(p):
    p.add_argument("--config", help="JSON scenario file")
    p.add_argument("--scenario", help=f"builtin scenario: {', '.join(sorted(hn.BUILTIN_SCENARIOS))}")
    p.add_argument("--out", help=f"output directory (default under ${OUTPUT_ROOT_ENV} or ./runs)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="relaxbl", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="certify the structural hypotheses of a builtin system")
    p.add_argument("--system", required=True, choices=sorted(["linear_reaction", "elasticity", "combustion"]))
    p.add_argument("--params", help="JSON object of system parameters")
    p.add_argument("--A", help="relaxation matrix: a number (scaled identity) or a JSON matrix; default 2 alpha I")
    p.add_argument("--model", default="global_term", choices=["global_term", "alternative"])
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strict", action="store_true", help="exit 2 unless every required hypothesis holds")
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("run", help="single relaxation run with snapshot and functional CSVs")
    _scenario_args(p)
    p.add_argument("--eps", type=float)
    p.add_argument("--t-end", type=float, dest="t_end")
    p.add_argument("--reference", action="store_true", help="also solve the balance law and write equilibrium_ files")
    p.add_argument("--identities", action="store_true", help="evaluate identity residuals at interior snapshots")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep-eps", help="eps-convergence of sup_t Psi")
    _scenario_args(p)
    p.add_argument("--eps", nargs="+", type=float)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--decomposition", action="store_true", help="also record I1..I6 norms per run")
    p.add_argument("--assert", dest="assert_", action="store_true")
    p.set_defaults(func=cmd_sweep_eps)

    p = sub.add_parser("sweep-dx", help="grid convergence against a manufactured solution")
    _scenario_args(p)
    p.add_argument("--n-cells", nargs="+", type=int, dest="n_cells")
    p.add_argument("--eps", type=float)
    p.add_argument("--order", type=int, choices=[1, 2])
    p.add_argument("--assert", dest="assert_", action="store_true")
    p.set_defaults(func=cmd_sweep_dx)

    p = sub.add_parser("report", help="aggregate run directories")
    p.add_argument("runs", nargs="+")
    p.add_argument("--out")
    p.add_argument("--assert", dest="assert_", action="store_true")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except hn.ConfigError as e:
        _eprint(f"config error: {e}")
        return EXIT_USAGE
    except (SystemDefinitionError, ValueError, FileNotFoundError, SolverError, hn.DxFloorError) as e:
        _eprint(f"error: {e}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
