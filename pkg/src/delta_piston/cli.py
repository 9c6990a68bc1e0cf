"""Command-line front end.

A run is described by one JSON config; every flag overrides a config path.
Exit codes: 0 success, 2 config error, 3 solver error, 4 verification failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import copy
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .closed_form import ClosedFormDomainError, solve
from .measure import (
    MeasureField,
    TestFunction,
    entropy_check,
    rh_consistency,
    weak_residual_cauchy,
    weak_residual_ibvp,
    write_residual_csv,
)
from .ode import IntegratorConfig, integrate
from .particles import simulate
from .problem import SETUP_KEYS, RiemannSetup, classify
from .trajectory import write_trajectory_csv

log = logging.getLogger("delta_piston")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4
BACKENDS = ("closed", "ode", "particles", "all")

DEFAULTS = {
    "backend": "closed",
    "t_end": 10.0,
    "grid": 101,
    "integrator": {},
    "particles": {"n_per_side": 10000, "L": None},
    "output_dir": "out",
    "format": "csv",
    "tolerance": 1e-2,
    "jobs": 1,
    "verify": {"corrupt_alpha": False, "quadrature_order": 32},
    "sweep": {"parameter": None, "values": []},
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    setup: RiemannSetup
    backend: str = "closed"
    t_end: float = 10.0
    grid: int = 101
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    n_per_side: int = 10000
    L: float | None = None
    output_dir: Path = Path("out")
    format: str = "csv"
    tolerance: float = 1e-2
    jobs: int = 1
    corrupt_alpha: bool = False
    quadrature_order: int = 32
    sweep_parameter: str | None = None
    sweep_values: tuple = ()

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        try:
            setup = RiemannSetup.from_dict(data["setup"])
        except KeyError as exc:
            raise ConfigError(str(exc).strip("'\"")) from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad setup: {exc}") from None
        cfg = _merge(copy.deepcopy(DEFAULTS), data)
        backend = cfg["backend"]
        if backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {', '.join(BACKENDS)}")
        try:
            t_end = float(cfg["t_end"])
            grid = int(cfg["grid"])
            integ = IntegratorConfig.from_dict({**cfg["integrator"], "t_end": t_end})
            n = int(cfg["particles"]["n_per_side"])
            L = cfg["particles"].get("L")
            L = None if L is None else float(L)
            jobs = int(cfg["jobs"])
            tol = float(cfg["tolerance"])
            order = int(cfg["verify"]["quadrature_order"])
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"bad config value: {exc}") from None
        if not (math.isfinite(t_end) and t_end > 0):
            raise ConfigError("t_end must be positive")
        if grid < 2:
            raise ConfigError("grid must be at least 2")
        if n < 1 or jobs < 1 or order < 1:
            raise ConfigError("n_per_side, jobs and quadrature_order must be positive")
        if cfg["format"] not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        param = cfg["sweep"].get("parameter")
        if param is not None and param not in SETUP_KEYS:
            raise ConfigError(f"sweep parameter must be a setup field, got {param!r}")
        values = tuple(float(v) for v in cfg["sweep"].get("values", []))
        if not all(math.isfinite(v) for v in values):
            raise ConfigError("sweep values must be finite")
        return cls(
            setup=setup,
            backend=backend,
            t_end=t_end,
            grid=grid,
            integrator=integ,
            n_per_side=n,
            L=L,
            output_dir=Path(cfg["output_dir"]),
            format=cfg["format"],
            tolerance=tol,
            jobs=jobs,
            corrupt_alpha=bool(cfg["verify"].get("corrupt_alpha", False)),
            quadrature_order=order,
            sweep_parameter=param,
            sweep_values=values,
        )

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.grid)


def _merge(base: dict, over: dict) -> dict:
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _merge(base[k], v)
        else:
            base[k] = v
    return base


def set_path(data: dict, dotted: str, value) -> None:
    """Set ``data["a"]["b"] = value`` for ``dotted == "a.b"``."""
    keys = dotted.split(".")
    node = data
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{dotted}: {k} is not a section")
    node[keys[-1]] = value


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(args) -> RunConfig:
    data: dict = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        set_path(data, k.strip(), _parse_value(v))
    flag_paths = {
        "backend": "backend",
        "t_end": "t_end",
        "grid": "grid",
        "jobs": "jobs",
        "output": "output_dir",
        "n_per_side": "particles.n_per_side",
        "parameter": "sweep.parameter",
    }
    for attr, path in flag_paths.items():
        v = getattr(args, attr, None)
        if v is not None:
            set_path(data, path, v)
    if getattr(args, "values", None):
        set_path(data, "sweep.values", [_parse_value(v) for v in args.values.split(",")])
    if getattr(args, "corrupt_alpha", False):
        set_path(data, "verify.corrupt_alpha", True)
    if "setup" not in data:
        raise ConfigError("config has no setup section")
    return RunConfig.from_dict(data)


# -- output helpers ------------------------------------------------------------

def write_atomic(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return out.getvalue()


def _write_trajectory(cfg: RunConfig, traj, name: str) -> None:
    t = cfg.times
    if cfg.format == "json":
        data = traj.sample(t)
        text = json.dumps({
            "case": str(traj.case),
            "source": traj.source,
            "t": [float(v) for v in data["t"]],
            "x1": [float(v) for v in data["x1"]],
            "v": [float(v) for v in data["v"]],
            "branch": [str(b) for b in data["branch"]],
        }, sort_keys=True)
        write_atomic(cfg.output_dir / f"{name}.json", text)
    else:
        write_atomic(cfg.output_dir / f"{name}.csv", write_trajectory_csv(traj, t))


# -- commands --------------------------------------------------------------------

def cmd_classify(cfg: RunConfig) -> int:
    print(classify(cfg.setup))
    return EXIT_OK


def _run_particles(cfg: RunConfig):
    out = simulate(cfg.setup, cfg.n_per_side, cfg.t_end, cfg.times, L=cfg.L)
    return out


def cmd_solve(cfg: RunConfig) -> int:
    backends = ("closed", "ode", "particles") if cfg.backend == "all" else (cfg.backend,)
    xs = {}
    for b in backends:
        log.info("solving with %s backend", b)
        if b == "closed":
            traj = solve(cfg.setup)
        elif b == "ode":
            traj, events = integrate(cfg.setup, cfg.integrator)
            rows = [{"t": e.time, "side": e.side, "pre_velocity": e.pre_velocity,
                     "post_velocity": e.post_velocity} for e in events]
            write_atomic(cfg.output_dir / "events.json", json.dumps(rows, sort_keys=True))
        else:
            run = _run_particles(cfg)
            write_atomic(cfg.output_dir / "particles_events.csv", run.event_log_csv())
            traj = run.trajectory()
        _write_trajectory(cfg, traj, f"trajectory_{b}")
        xs[b] = np.asarray(traj.position(cfg.times), dtype=float)
    if cfg.backend != "all":
        return EXIT_OK
    stack = np.vstack([xs["closed"], xs["ode"], xs["particles"]])
    diff = stack.max(axis=0) - stack.min(axis=0)
    rows = [(t, a, b, c, d) for t, a, b, c, d in zip(cfg.times, *stack, diff)]
    write_atomic(cfg.output_dir / "compare.csv",
                 _csv_text(("t", "x1_closed", "x1_ode", "x1_particles", "max_abs_diff"), rows))
    bound = cfg.tolerance * (1.0 + np.abs(xs["closed"]))
    worst = float(np.max(diff - bound))
    if worst > 0:
        log.error("backends disagree beyond tolerance %g", cfg.tolerance)
        return EXIT_VERIFY
    return EXIT_OK


def verification_suite(cfg: RunConfig, traj) -> tuple[bool, dict, list]:
    """Entropy, force, Newton-closure, balance-law and weak-form checks."""
    s = cfg.setup
    field_ = MeasureField.from_trajectory(traj)
    if cfg.corrupt_alpha:
        field_ = field_.with_weights(field_.weights.scaled(alpha=2.0))
    w = field_.weights
    t = cfg.times
    checks = {}

    ent = entropy_check(traj, s, t)
    checks["entropy"] = {"passed": ent.passed, "worst_margin": ent.worst_margin}

    tp = t[t > 0]
    f1, f2 = np.asarray(w.wp1(tp)), np.asarray(w.wp2(tp))
    fscale = 1.0 + np.abs(f1) + np.abs(f2)
    fmin = float(np.min(np.minimum(f1, f2) / fscale))
    checks["forces_nonnegative"] = {"passed": fmin >= -1e-12, "worst": fmin}

    if s.m0 > 0:
        acc = np.asarray(w.accel(tp))
        scale = np.maximum(np.abs(acc), (np.abs(f1) + np.abs(f2)) / s.m0)
        scale = np.where(scale > 0, scale, 1.0)
        err = float(np.max(np.abs((f1 - f2) / s.m0 - acc) / scale))
        checks["newton_closure"] = {"passed": err <= 1e-9, "worst_relative": err}

    hs = (1e-2, 1e-3, 1e-4)
    kinks = [c for c in (traj.t1, traj.left_contact, traj.right_contact) if c is not None and math.isfinite(c)]
    rh_ok, rh_rows = True, []
    for frac in (0.25, 0.5, 0.75):
        tc = frac * cfg.t_end
        if any(abs(tc - k) < 2 * hs[0] for k in kinks) or tc - hs[0] <= 0:
            continue
        errs = [rh_consistency(traj, tc, h, w) for h in hs]
        floor = 1e-9 * (1.0 + abs(float(w.alpha(tc))))
        ok = all(e2 <= max(e1 / 50.0, floor) for e1, e2 in zip(errs[:-1], errs[1:]))
        rh_ok &= ok
        rh_rows.append({"t": tc, "errors": errs, "passed": ok})
    checks["rankine_hugoniot"] = {"passed": rh_ok, "probes": rh_rows}

    rows = []
    worst_c = worst_i = 0.0
    order = cfg.quadrature_order
    for k, frac in enumerate((0.2, 0.4, 0.6, 0.8)):
        tc = frac * cfg.t_end
        st = min(0.5, 0.19 * cfg.t_end)
        xc = float(traj.position(tc))
        phi = TestFunction(xc + 0.05, tc, 0.5, st, phi_id=f"shock{k}")
        rm, rp = weak_residual_cauchy(field_, phi, order)
        rows.append((phi, order, rm, rp))
        worst_c = max(worst_c, abs(rm), abs(rp))
        for side in ("left", "right"):
            shift = s.l if side == "right" else 0.0
            phs = TestFunction(xc + shift, tc, 0.5, st, phi_id=f"{side}{k}")
            rm, rp = weak_residual_ibvp(side, field_, phs, order)
            rows.append((phs, order, rm, rp))
            worst_i = max(worst_i, abs(rm), abs(rp))
    tol_c = 1e-8 if traj.source == "closed" else 1e-6
    checks["weak_cauchy"] = {"passed": worst_c <= tol_c, "worst": worst_c}
    checks["weak_ibvp"] = {"passed": worst_i <= 1e-6, "worst": worst_i}
    passed = all(c["passed"] for c in checks.values())
    return passed, checks, rows


def cmd_verify(cfg: RunConfig) -> int:
    if cfg.backend == "ode":
        traj, _ = integrate(cfg.setup, cfg.integrator)
    else:
        traj = solve(cfg.setup)
    passed, checks, rows = verification_suite(cfg, traj)
    report = {"case": str(traj.case), "passed": passed, "checks": checks}
    write_atomic(cfg.output_dir / "verify.json", json.dumps(report, sort_keys=True, indent=2, default=float))
    write_atomic(cfg.output_dir / "residuals.csv", write_residual_csv(rows))
    for name, c in checks.items():
        print(f"{name}: {'pass' if c['passed'] else 'FAIL'}")
    return EXIT_OK if passed else EXIT_VERIFY


def _sweep_point(args):
    setup, t_grid = args
    traj = solve(setup)
    return traj.limit_velocity, traj.t1, [float(x) for x in traj.position(t_grid)]


def cmd_sweep(cfg: RunConfig) -> int:
    if cfg.sweep_parameter is None or not cfg.sweep_values:
        raise ConfigError("sweep needs a parameter and at least one value")
    tasks, errors = [], {}
    for v in cfg.sweep_values:
        try:
            tasks.append((cfg.setup.replace(**{cfg.sweep_parameter: v}), cfg.times))
        except (TypeError, ValueError) as exc:
            tasks.append(None)
            errors[v] = str(exc)
    results = [None] * len(tasks)
    with concurrent.futures.ThreadPoolExecutor(cfg.jobs) as pool:
        futs = {pool.submit(_sweep_point, t): k for k, t in enumerate(tasks) if t is not None}
        for fut in concurrent.futures.as_completed(futs):
            k = futs[fut]
            try:
                results[k] = fut.result()
            except (ArithmeticError, ValueError, RuntimeError) as exc:
                errors[cfg.sweep_values[k]] = str(exc)
    rows, traj_cols, good = [], [], []
    for v, r in zip(cfg.sweep_values, results):
        if r is None:
            rows.append((v, "", ""))
            continue
        lim, t1, xs = r
        rows.append((v, lim, "" if t1 is None else t1))
        traj_cols.append(xs)
        good.append(v)
    out = cfg.output_dir
    write_atomic(out / "sweep.csv", _csv_text(("value", "limit_velocity", "t1_if_any"), rows))
    if errors:
        write_atomic(out / "sweep_errors.csv",
                     _csv_text(("value", "error"), [(v, errors[v]) for v in cfg.sweep_values if v in errors]))
    header = ("t",) + tuple(f"x1@{cfg.sweep_parameter}={v!r}" for v in good)
    table = [(t, *(col[k] for col in traj_cols)) for k, t in enumerate(cfg.times)]
    write_atomic(out / "sweep_x1.csv", _csv_text(header, table))
    plot = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set xlabel '{cfg.sweep_parameter}'",
        "set ylabel 'limit velocity'",
        "plot 'sweep.csv' using 1:2 with linespoints",
        "pause -1",
        "set xlabel 't'",
        "set ylabel 'x1'",
        f"plot for [k=2:{len(good) + 1}] 'sweep_x1.csv' using 1:k with lines",
        "pause -1",
    ]
    write_atomic(out / "sweep.gp", "\n".join(plot) + "\n")
    for v, msg in errors.items():
        log.error("sweep point %r failed: %s", v, msg)
    return EXIT_OK if good else EXIT_SOLVER


def cmd_particles(cfg: RunConfig) -> int:
    run = _run_particles(cfg)
    out = cfg.output_dir
    write_atomic(out / "particles_events.csv", run.event_log_csv())
    acc = run.accretion
    write_atomic(out / "accretion.csv", _csv_text(("t", "m1", "m2"), zip(acc.t, acc.m1, acc.m2)))
    _write_trajectory(cfg, run.trajectory(), "trajectory_particles")
    print(f"events={run.event_count} momentum_drift={run.max_momentum_drift!r} mass_drift={run.max_mass_drift!r}")
    return EXIT_OK


COMMANDS = {
    "classify": cmd_classify,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "particles": cmd_particles,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="delta-piston", description="Free piston in pressureless gas.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--backend", choices=BACKENDS)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--grid", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--output", help="output directory")
    p.add_argument("--n-per-side", dest="n_per_side", type=int)
    p.add_argument("--parameter", help="setup field to sweep")
    p.add_argument("--values", help="comma-separated sweep values")
    p.add_argument("--corrupt-alpha", action="store_true", help="test hook: double the atom mass")
    p.add_argument("--set", action="append", metavar="PATH=VALUE",
                   help="override a config entry by dotted path, e.g. setup.m0=0.5")
    return p


def main(argv=None) -> int:
    level = os.environ.get("DELTA_PISTON_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR), format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, ClosedFormDomainError, RuntimeError, ValueError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
