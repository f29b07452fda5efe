"""Command-line interface.

Settings are resolved in three layers, later ones winning: built-in
defaults, the YAML config file (``--config``), then command-line flags.
The config file has four sections::

    potential: {family: gaussian, params: {sigma: 1.0}, dimension: 1}
    problem:   {m: 2.0, R: 1.0}            # or epsilon, or R_list
    numerics:  {n: 128, angular_n: 64, tol: 1.0e-12, max_iter: 20000, damping: null}
    output:    {directory: out, formats: [csv, json]}

Exit codes: 0 success, 1 numerical or mathematical failure, 2 usage or
configuration error.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import __version__
from .energy_minimizer import (MinimizeOptions, epsilon0_upper_bound, estimate_epsilon0,
                               minimize_global, summarize_epsilon1)
from .errors import AggregationError, InadmissibleParams, NoConvergence, NoMinimizer, UnboundedSupport
from .linear_eigensolver import CurvePoint, eigen_curve_point, is_strictly_increasing
from .nonlinear_stationary import (SolverOptions, energy_identities_check, solve_stationary,
                                   stationary_curve_point, support_bound_check)
from .potential import make_potential, validate_assumptions
from .radial_grid import CSV_FLOAT
from .shell_kernel import assemble_kernels

log = logging.getLogger("radial_aggregation")

EXIT_OK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2

DEFAULTS = {
    "potential": {"family": "gaussian", "params": {"sigma": 1.0}, "dimension": 1},
    "problem": {"m": 2.0},
    "numerics": {"n": None, "angular_n": 64, "tol": None, "max_iter": None, "damping": None,
                 "residual_tol": 1e-6, "R_start": None, "R_cap": None},
    "output": {"directory": "out", "formats": ["csv", "json"]},
}
SECTIONS = tuple(DEFAULTS)
PROBLEM_KEYS = ("m", "epsilon", "R", "R_list")
# which problem fields each command needs and which it forbids
SHAPES = {
    "validate": ((), ("epsilon", "R", "R_list")),
    "solve": (("m", "R"), ("epsilon", "R_list")),
    "curve": (("m", "R_list"), ("epsilon", "R")),
    "minimize": (("m", "epsilon"), ("R", "R_list")),
    "thresholds": (("m",), ("epsilon", "R", "R_list")),
}


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    potential: dict
    problem: dict
    numerics: dict
    output: dict
    command: str = ""
    jobs: int = 1
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"potential": self.potential, "problem": self.problem,
                "numerics": self.numerics, "output": self.output}

    @property
    def out_dir(self) -> Path:
        return Path(self.output["directory"])

    def wants(self, fmt: str) -> bool:
        return fmt in self.output["formats"]


# -- config resolution ----------------------------------------------------

def _merge(base: dict, over: dict, where: str) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base and where != "potential.params":
            raise ConfigError(f"unknown key {where}.{k}")
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "params":
            out[k] = _merge(out[k], v, f"{where}.{k}")
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config_file(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}")
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping with sections " + ", ".join(SECTIONS))
    for k in data:
        if k not in SECTIONS:
            raise ConfigError(f"unknown config section {k!r}")
        if not isinstance(data[k], dict):
            raise ConfigError(f"config section {k!r} must be a mapping")
    return data


def _parse_list(text: str) -> list:
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"cannot parse R list {text!r}")


def _flag_overrides(args) -> dict:
    over = {s: {} for s in SECTIONS}
    pot, prob, num, out = over["potential"], over["problem"], over["numerics"], over["output"]
    if args.family is not None:
        pot["family"] = args.family
        pot["params"] = {}
    params = {}
    for name in ("sigma", "a", "exponent"):
        v = getattr(args, name, None)
        if v is not None:
            params["p" if name == "exponent" else name] = v
    if params:
        pot["params"] = params
    if args.dimension is not None:
        pot["dimension"] = args.dimension
    for key in ("m", "epsilon", "R"):
        v = getattr(args, key, None)
        if v is not None:
            prob[key] = v
    if getattr(args, "R_list", None) is not None:
        prob["R_list"] = _parse_list(args.R_list)
    for key in ("n", "angular_n", "tol", "max_iter", "damping", "residual_tol", "R_start", "R_cap"):
        v = getattr(args, key, None)
        if v is not None:
            num[key] = v
    if args.out is not None:
        out["directory"] = args.out
    if args.formats is not None:
        out["formats"] = [f.strip() for f in args.formats.split(",") if f.strip()]
    return over


def resolve_config(command: str, args=None, file_data: dict | None = None) -> RunConfig:
    """defaults < config file < flags, then validation of the problem shape."""
    cfg = copy.deepcopy(DEFAULTS)
    layers = []
    if file_data:
        layers.append(file_data)
    if args is not None:
        layers.append(_flag_overrides(args))
    for layer in layers:
        for sec in SECTIONS:
            if sec not in layer:
                continue
            if sec == "potential" and "family" in layer[sec] and "params" not in layer[sec]:
                cfg[sec]["params"] = {}
            if sec == "problem":
                for k in layer[sec]:
                    if k not in PROBLEM_KEYS:
                        raise ConfigError(f"unknown key problem.{k}")
                cfg[sec].update(copy.deepcopy(layer[sec]))
            else:
                cfg[sec] = _merge(cfg[sec], layer[sec], sec)
    rc = RunConfig(cfg["potential"], cfg["problem"], cfg["numerics"], cfg["output"], command)
    if args is not None:
        rc.jobs = int(getattr(args, "jobs", 1) or 1)
    _validate(rc)
    return rc


def _positive(name, v, integer=False):
    if v is None:
        return
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{name} must be a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{name} must be an integer, got {v!r}")
    if not (math.isfinite(v) and v > 0):
        raise ConfigError(f"{name} must be positive, got {v!r}")


def _validate(rc: RunConfig):
    need, forbid = SHAPES[rc.command]
    prob = rc.problem
    for k in need:
        if prob.get(k) is None:
            raise ConfigError(f"command {rc.command!r} needs problem.{k}")
    for k in forbid:
        if prob.get(k) is not None:
            raise ConfigError(f"problem.{k} does not apply to command {rc.command!r}")
    _positive("problem.m", prob.get("m"))
    _positive("problem.epsilon", prob.get("epsilon"))
    _positive("problem.R", prob.get("R"))
    if rc.command == "curve":
        R = prob["R_list"]
        if not isinstance(R, list) or not R:
            raise ConfigError("problem.R_list must be a non-empty list")
        for r in R:
            _positive("problem.R_list entry", r)
        if len(set(R)) != len(R):
            raise ConfigError("problem.R_list contains duplicate radii")
        if any(b <= a for a, b in zip(R, R[1:])):
            raise ConfigError("problem.R_list must be ascending")
    num = rc.numerics
    for k in ("n", "angular_n", "max_iter"):
        _positive(f"numerics.{k}", num.get(k), integer=True)
    for k in ("tol", "residual_tol", "R_start", "R_cap"):
        _positive(f"numerics.{k}", num.get(k))
    d = num.get("damping")
    if d is not None:
        _positive("numerics.damping", d)
        if d > 1:
            raise ConfigError(f"numerics.damping must lie in (0, 1], got {d}")
    fm = rc.output.get("formats")
    if not isinstance(fm, list) or any(f not in ("csv", "json") for f in fm):
        raise ConfigError(f"output.formats must be a list drawn from csv, json; got {fm!r}")
    if rc.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    try:
        rc.extra["pot"] = build_potential(rc)
    except InadmissibleParams as exc:
        raise ConfigError(str(exc))
    except (TypeError, KeyError, ValueError) as exc:
        raise ConfigError(f"invalid potential section: {exc}")


def build_potential(rc: RunConfig):
    p = rc.potential
    N = p.get("dimension")
    if isinstance(N, float) and N.is_integer():
        N = int(N)
    return make_potential(p["family"], p.get("params") or {}, N)


def solver_options(rc: RunConfig) -> SolverOptions:
    num = rc.numerics
    kw = {k: num[k] for k in ("n", "angular_n", "tol", "max_iter", "damping") if num.get(k) is not None}
    for k in ("n", "angular_n", "max_iter"):
        if k in kw:
            kw[k] = int(kw[k])
    return SolverOptions(**kw)


def minimize_options(rc: RunConfig) -> MinimizeOptions:
    num = rc.numerics
    kw = {k: num[k] for k in ("n", "angular_n", "tol", "max_iter", "R_start", "R_cap")
          if num.get(k) is not None}
    for k in ("n", "angular_n", "max_iter"):
        if k in kw:
            kw[k] = int(kw[k])
    return MinimizeOptions(**kw)


# -- output helpers --------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: non-finite floats become strings, tuples become lists."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        return _clean(obj.item())
    return obj


def _stamp(rc: RunConfig) -> dict:
    return {"config": rc.to_dict(), "command": rc.command,
            "version": {"package": "radial_aggregation", "version": __version__}}


def write_json(path: Path, payload: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(payload), indent=2, sort_keys=True) + "\n")


def write_rows(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, int)) or (hasattr(v, "dtype") and v.dtype.kind in "iub"):
        return str(int(v))
    return CSV_FLOAT % float(v)


def _outputs(rc: RunConfig, result: dict, profile=None):
    rc.out_dir.mkdir(parents=True, exist_ok=True)
    if profile is not None and rc.wants("csv"):
        profile.to_csv(rc.out_dir / "rho.csv")
    if rc.wants("json"):
        write_json(rc.out_dir / "result.json", {**_stamp(rc), "result": result})


# -- commands ----------------------------------------------------------------

def cmd_validate(rc: RunConfig) -> int:
    pot = rc.extra["pot"]
    rep = validate_assumptions(pot)
    payload = {**_stamp(rc), "report": rep.to_dict()}
    if rc.wants("json"):
        write_json(rc.out_dir / "report.json", payload)
    print(json.dumps(_clean(rep.to_dict()), sort_keys=True))
    for note in rep.notes:
        print(note, file=sys.stderr)
    return EXIT_OK if rep.all_passed else EXIT_NUMERIC


def cmd_solve(rc: RunConfig) -> int:
    pot = rc.extra["pot"]
    m, R = float(rc.problem["m"]), float(rc.problem["R"])
    opts = solver_options(rc)
    from .radial_grid import make_grid
    ker = assemble_kernels(pot, make_grid(pot.dimension, R, opts.n), opts.angular_n)
    try:
        res = solve_stationary(pot, m, R, opts, ker=ker)
    except NoConvergence as exc:
        print(f"NoConvergence: {exc}", file=sys.stderr)
        if exc.result is not None:
            _outputs(rc, {**exc.result.scalars(), "status": "NoConvergence"}, exc.result.rho)
        return EXIT_NUMERIC
    rep = energy_identities_check(res, ker)
    out = {**res.scalars(), "identities": rep.to_dict(), "status": "ok"}
    if m > 2:
        bound, ok = support_bound_check(res)
        out["support_bound_check"] = {"bound": bound, "ball_volume": res.rho.grid.ball_volume,
                                      "satisfied": ok}
    tol = float(rc.numerics["residual_tol"])
    failed = res.residual > tol or not rep.passed
    if failed:
        out["status"] = "failed_checks"
        print(f"residual {res.residual:.3e} (tol {tol:g}); identities pass: {rep.passed}",
              file=sys.stderr)
    _outputs(rc, out, res.rho)
    return EXIT_NUMERIC if failed else EXIT_OK


def _curve_worker(task) -> CurvePoint:
    pot, m, R, opts = task
    if m == 2.0:
        return eigen_curve_point(pot, R, opts.n, opts.angular_n)
    return stationary_curve_point(pot, m, R, opts)


def _map(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, tasks))


def cmd_curve(rc: RunConfig) -> int:
    pot = rc.extra["pot"]
    m = float(rc.problem["m"])
    opts = solver_options(rc)
    pts = _map(_curve_worker, [(pot, m, float(R), opts) for R in rc.problem["R_list"]], rc.jobs)
    rows = [(p.R, p.epsilon, p.energy, p.residual, p.iterations, "ok" if p.ok else p.error)
            for p in pts]
    if rc.wants("csv"):
        write_rows(rc.out_dir / "curve.csv",
                   ("R", "epsilon", "energy", "residual", "iterations", "status"), rows)
    good = [p.epsilon for p in pts if p.ok]
    mono = is_strictly_increasing(good)
    kind = "asserted" if m == 2.0 else "observed"
    print(f"monotonicity ({kind}): epsilon strictly increasing = {mono}", file=sys.stderr)
    if rc.wants("json"):
        write_json(rc.out_dir / "result.json",
                   {**_stamp(rc), "result": {"monotone": mono, "points": [p.__dict__ for p in pts]}})
    failed = any(not p.ok for p in pts) or (m == 2.0 and not mono)
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_minimize(rc: RunConfig) -> int:
    pot = rc.extra["pot"]
    m, eps = float(rc.problem["m"]), float(rc.problem["epsilon"])
    try:
        res = minimize_global(pot, m, eps, minimize_options(rc))
    except UnboundedSupport as exc:
        kind = type(exc).__name__
        regime = ("nonexistence_regime" if isinstance(exc, NoMinimizer)
                  else "support_escape")
        print(f"{kind}: {exc}", file=sys.stderr)
        out = {"status": kind, "classification": regime, "boxes": exc.history}
        if exc.result is not None:
            out.update({k: v for k, v in exc.result.scalars().items() if k != "status"})
        _outputs(rc, out, exc.result.rho if exc.result is not None else None)
        return EXIT_NUMERIC
    out = {**res.scalars(), "saturation_radius": res.support_radius, "status": "ok"}
    _outputs(rc, out, res.rho)
    return EXIT_OK


def _sweep_worker(task):
    pot, m, R, opts = task
    return stationary_curve_point(pot, m, R, opts)


def cmd_thresholds(rc: RunConfig) -> int:
    pot = rc.extra["pot"]
    m = float(rc.problem["m"])
    if not 1.0 < m < 2.0:
        print(f"thresholds need 1 < m < 2, got m = {m}", file=sys.stderr)
        return EXIT_NUMERIC
    e0 = estimate_epsilon0(pot, m, minimize_options(rc))
    from .energy_minimizer import default_sweep
    opts = solver_options(rc)
    pts = _map(_sweep_worker, [(pot, m, R, opts) for R in default_sweep(pot)], rc.jobs)
    rep = summarize_epsilon1(m, [(p.R, p.epsilon) for p in pts if p.ok],
                             [(p.R, p.error) for p in pts if not p.ok], e0.epsilon0)
    upper = epsilon0_upper_bound(pot, m)
    out = {"m": m, "epsilon0": e0.epsilon0, "epsilon0_upper_bound": upper,
           "epsilon1_empirical": rep.epsilon1_empirical, "epsilon1_ceiling": rep.epsilon1_ceiling,
           "epsilon0_support_radius": e0.support_radius, "attained": rep.attained,
           "failed": rep.failed}
    ok = (rep.ok and e0.epsilon0 <= upper + 1e-8 and rep.all_below_ceiling)
    out["orderings_hold"] = bool(ok)
    if rc.wants("json"):
        write_json(rc.out_dir / "thresholds.json", {**_stamp(rc), **out})
    print(json.dumps(_clean({k: out[k] for k in ("epsilon0", "epsilon0_upper_bound",
                                                  "epsilon1_empirical", "epsilon1_ceiling")}),
                     sort_keys=True))
    return EXIT_OK if ok else EXIT_NUMERIC


COMMANDS = {"validate": cmd_validate, "solve": cmd_solve, "curve": cmd_curve,
            "minimize": cmd_minimize, "thresholds": cmd_thresholds}


# -- argument parsing ------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    g = common.add_argument_group("potential")
    g.add_argument("--family", help="gaussian or inverse_multiquadric")
    g.add_argument("--sigma", type=float, help="gaussian width")
    g.add_argument("--a", type=float, help="inverse multiquadric scale")
    g.add_argument("--exponent", type=float, help="inverse multiquadric exponent p")
    g.add_argument("-N", "--dimension", type=int)
    g = common.add_argument_group("problem")
    g.add_argument("--m", type=float, help="diffusion exponent")
    g.add_argument("--epsilon", type=float)
    g.add_argument("--R", type=float, help="ball radius")
    g.add_argument("--R-list", dest="R_list", help="comma separated ascending radii")
    g = common.add_argument_group("numerics")
    g.add_argument("--n", type=int, help="radial nodes")
    g.add_argument("--angular-n", dest="angular_n", type=int)
    g.add_argument("--tol", type=float)
    g.add_argument("--max-iter", dest="max_iter", type=int)
    g.add_argument("--damping", type=float)
    g.add_argument("--residual-tol", dest="residual_tol", type=float)
    g.add_argument("--R-start", dest="R_start", type=float)
    g.add_argument("--R-cap", dest="R_cap", type=float)
    g = common.add_argument_group("output")
    g.add_argument("--out", help="output directory")
    g.add_argument("--formats", help="comma separated subset of csv,json")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="radial-aggregation", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"validate": "check the potential assumptions",
             "solve": "stationary state on a ball of radius R",
             "curve": "epsilon(R) over a list of radii",
             "minimize": "global energy minimizer at fixed epsilon",
             "thresholds": "estimate eps0 and eps1 for 1 < m < 2"}
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        file_data = load_config_file(args.config) if args.config else None
        rc = resolve_config(args.command, args, file_data)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](rc)
    except AggregationError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
