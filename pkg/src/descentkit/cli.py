"""Command-line harness: ``descentkit {run,schedule,range-test,solve}``.

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 diverged.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import momentum_rate, vanilla_gd_rate
from .cg import Preconditioner, cg_practical, pcg_untransformed
from .errors import ConfigError, DescentError, NoConvergence, NumericalFailure, NonSymmetric
from .linalg import cholesky, spectral
from .objective import Batcher, MlpTask, QuadraticForm, load_dataset_csv, make_synthetic_task
from .optimizers import Momentum, Nag, NoisySgd, Sgd, optimizer_from_dict, optimizer_to_dict, train
from .schedulers import Constant, schedule_from_dict, schedule_table, schedule_to_dict, table_to_csv
from .second_order import newton_method

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_DIVERGED = 4
SCHEMA_VERSION = 1

RUN_KEYS = {"objective", "optimizer", "schedule", "x1", "steps", "epochs", "batch_size", "seed",
            "record_x", "output"}
RANGE_KEYS = {"objective", "optimizer", "x1", "steps", "epochs", "batch_size", "seed", "rates", "grid"}
OBJECTIVE_KEYS = {
    "quadratic": {"type", "a", "b", "c"},
    "synthetic_mlp": {"type", "num_classes", "per_class", "dim", "hidden_width", "dropout_rate",
                      "data_seed"},
    "mlp_csv": {"type", "path", "hidden_width", "dropout_rate"},
}


# ---------------------------------------------------------------- config parsing


def load_json(text_or_path: str, what: str = "config"):
    """Parse JSON from a file path or an inline string, with line/column diagnostics."""
    p = Path(text_or_path)
    label = what
    try:
        is_file = p.is_file()
    except OSError:
        is_file = False
    if is_file:
        text = p.read_text()
        label = str(p)
    elif text_or_path.lstrip().startswith("{"):
        text = text_or_path
    else:
        raise ConfigError(f"{what}: no such file '{text_or_path}'")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{label}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ConfigError(f"{where}: missing required field '{key}'")
    return obj[key]


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected a JSON object")
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")


def _int_field(obj, key, where, default=None, minimum=1):
    v = obj.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(f"{where}.{key}: expected an integer >= {minimum}, got {v!r}")
    return v


def build_objective(spec: dict, seed: int):
    where = "objective"
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError("objective: expected an object with a 'type' field")
    kind = spec["type"]
    if kind not in OBJECTIVE_KEYS:
        raise ConfigError(f"objective.type: unknown objective '{kind}' (known: {', '.join(OBJECTIVE_KEYS)})")
    _check_keys(spec, OBJECTIVE_KEYS[kind], where)
    try:
        if kind == "quadratic":
            a = np.array(_require(spec, "a", where), dtype=float)
            b = spec.get("b")
            return QuadraticForm.from_matrix(a, None if b is None else np.array(b, dtype=float),
                                             float(spec.get("c", 0.0)))
        if kind == "synthetic_mlp":
            return make_synthetic_task(
                _int_field(spec, "num_classes", where, 2),
                _int_field(spec, "per_class", where, 100),
                _int_field(spec, "dim", where, 2),
                _int_field(spec, "data_seed", where, seed, minimum=0),
                hidden_width=_int_field(spec, "hidden_width", where, 16),
                dropout_rate=float(spec.get("dropout_rate", 0.5)),
            )
        return load_dataset_csv(_require(spec, "path", where),
                                hidden_width=_int_field(spec, "hidden_width", where, 16),
                                dropout_rate=float(spec.get("dropout_rate", 0.5)), seed=seed)
    except ConfigError:
        raise
    except (TypeError, ValueError, OSError, DescentError) as exc:
        raise ConfigError(f"objective ({kind}): {exc}") from exc


def _optimizer(obj, seed):
    if isinstance(obj, dict) and obj.get("type") == "noisy_sgd" and "seed" not in obj:
        obj = dict(obj, seed=seed)
    return optimizer_from_dict(obj)


def _x1(obj, objective, where="x1"):
    x1 = obj.get("x1")
    if x1 is None:
        if isinstance(objective, MlpTask):
            return objective.init_weights()
        return np.zeros(objective.dim)
    try:
        x = np.array(x1, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    if x.shape != (objective.dim,):
        raise ConfigError(f"{where}: expected {objective.dim} entries, got shape {x.shape}")
    return x


@dataclass
class ExperimentConfig:
    objective_spec: dict
    objective: object
    optimizer: object
    schedule: object
    x1: np.ndarray
    steps: int
    batch_size: int | None
    seed: int
    record_x: bool
    output: str | None

    @property
    def stochastic(self) -> bool:
        return isinstance(self.objective, MlpTask)


def parse_run_config(obj, seed_override: int | None = None) -> ExperimentConfig:
    _check_keys(obj, RUN_KEYS, "config")
    seed = seed_override if seed_override is not None else _int_field(obj, "seed", "config", 0, minimum=0)
    objective = build_objective(_require(obj, "objective", "config"), seed)
    stochastic = isinstance(objective, MlpTask)
    if stochastic:
        steps = _int_field(obj, "epochs", "config") or _int_field(obj, "steps", "config")
        batch_size = _int_field(obj, "batch_size", "config", 32)
    else:
        if "epochs" in obj or "batch_size" in obj:
            raise ConfigError("config: 'epochs'/'batch_size' only apply to MLP objectives")
        steps = _int_field(obj, "steps", "config")
        batch_size = None
    if steps is None:
        raise ConfigError("config: missing required field 'steps' (or 'epochs' for MLP objectives)")
    total = steps * (Batcher(objective.n_samples, batch_size).batches_per_epoch if stochastic else 1)
    schedule = schedule_from_dict(_require(obj, "schedule", "config"), t_max=total)
    record_x = obj.get("record_x", False)
    if not isinstance(record_x, bool):
        raise ConfigError("config.record_x: expected true or false")
    return ExperimentConfig(obj["objective"], objective, _optimizer(_require(obj, "optimizer", "config"), seed),
                            schedule, _x1(obj, objective), steps, batch_size, seed, record_x,
                            obj.get("output"))


# ---------------------------------------------------------------- run


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else None


def predicted_divergence(cfg: ExperimentConfig) -> bool | None:
    """Spectral prediction for constant-rate GD / heavy-ball momentum on a quadratic."""
    if not isinstance(cfg.objective, QuadraticForm) or not isinstance(cfg.schedule, Constant):
        return None
    if type(cfg.optimizer) not in (Sgd, Momentum):
        return None
    lam = spectral(cfg.objective.sym_h).lam
    if lam[-1] <= 0:
        return None
    eta = cfg.schedule.eta
    if isinstance(cfg.optimizer, Momentum):
        pred = momentum_rate(eta, cfg.optimizer.rho, lam)
    else:
        pred = vanilla_gd_rate(eta, lam)
    return not pred.converges


def execute_run(cfg: ExperimentConfig):
    """Run one experiment; returns (trajectory CSV text, summary dict)."""
    batcher = None
    if cfg.stochastic:
        batcher = Batcher(cfg.objective.n_samples, cfg.batch_size, cfg.seed)
    traj = train(cfg.objective, cfg.optimizer, cfg.schedule, cfg.x1, cfg.steps, batcher=batcher,
                 record_x=cfg.record_x)
    predicted = predicted_divergence(cfg)
    diverged = traj.diverged or bool(predicted)
    summary = {
        "schema": SCHEMA_VERSION,
        "final_loss": _num(traj.final_loss),
        "iterations": traj.iterations,
        "diverged": diverged,
        "trajectory_diverged": traj.diverged,
        "optimizer": optimizer_to_dict(cfg.optimizer),
        "schedule": schedule_to_dict(cfg.schedule),
        "seed": cfg.seed,
    }
    if predicted is not None:
        summary["predicted_diverged"] = predicted
    if isinstance(cfg.objective, QuadraticForm):
        summary["final_x"] = [_num(v) for v in traj.final_x]
    else:
        summary["final_accuracy"] = _num(cfg.objective.accuracy(traj.final_x)) \
            if np.all(np.isfinite(traj.final_x)) else None
    return traj.to_csv(include_x=cfg.record_x), summary


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _run_one(config_path: str, out_dir: str | None, seed: int | None, record_x: bool):
    """Worker for one config; returns (exit code, message)."""
    try:
        obj = load_json(config_path)
        cfg = parse_run_config(obj, seed)
        if record_x:
            cfg.record_x = True
        out = Path(out_dir or cfg.output or ".")
        csv_text, summary = execute_run(cfg)
    except ConfigError as exc:
        return EXIT_CONFIG, f"config error: {exc}"
    except (NumericalFailure, NoConvergence, NonSymmetric) as exc:
        return EXIT_NUMERIC, f"numerical failure: {type(exc).__name__}: {exc}"
    out.mkdir(parents=True, exist_ok=True)
    (out / "trajectory.csv").write_text(csv_text)
    (out / "summary.json").write_text(dump_json(summary))
    code = EXIT_DIVERGED if summary["diverged"] else EXIT_OK
    msg = f"{config_path}: {summary['iterations']} iterations, final loss {summary['final_loss']}"
    if summary["diverged"]:
        msg += " (diverged)"
    return code, msg


def cmd_run(args) -> int:
    configs = args.config
    if not configs:
        print("run: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    if len(configs) == 1:
        jobs = [(configs[0], args.out, args.seed, args.record_x)]
    else:
        base = Path(args.out or ".")
        jobs = [(c, str(base / Path(c).stem), args.seed, args.record_x) for c in configs]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, *zip(*jobs)))
    else:
        results = [_run_one(*j) for j in jobs]
    for code, msg in results:
        print(msg, file=sys.stderr if code in (EXIT_CONFIG, EXIT_NUMERIC) else sys.stdout)
    return max(code for code, _ in results)


# ---------------------------------------------------------------- schedule


def cmd_schedule(args) -> int:
    try:
        spec_src = args.spec or (args.config[0] if args.config else None)
        if spec_src is None:
            raise ConfigError("schedule: --spec is required")
        if args.t_max is None or args.t_max < 1:
            raise ConfigError("schedule: --t-max must be a positive integer")
        spec = schedule_from_dict(load_json(spec_src, "spec"), t_max=args.t_max)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = table_to_csv(schedule_table(spec, args.t_max))
    _emit(text, args.out, "schedule.csv")
    return EXIT_OK


def _emit(text: str, out: str | None, default_name: str):
    if out is None:
        sys.stdout.write(text)
        return
    p = Path(out)
    if p.is_dir() or out.endswith(("/", "\\")):
        p.mkdir(parents=True, exist_ok=True)
        p = p / default_name
    else:
        p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)


# ---------------------------------------------------------------- range test


def parse_rates(obj: dict, rates_flag: str | None, grid_flag) -> list[float]:
    if rates_flag:
        try:
            rates = [float(r) for r in rates_flag.split(",") if r.strip()]
        except ValueError as exc:
            raise ConfigError(f"--rates: {exc}") from exc
    elif grid_flag:
        lo, hi, n = grid_flag
        rates = log_grid(float(lo), float(hi), int(n))
    elif "rates" in obj:
        rates = [float(r) for r in obj["rates"]]
    elif "grid" in obj:
        g = obj["grid"]
        _check_keys(g, {"low", "high", "num"}, "config.grid")
        rates = log_grid(float(_require(g, "low", "grid")), float(_require(g, "high", "grid")),
                         int(_require(g, "num", "grid")))
    else:
        raise ConfigError("range-test: give a rate grid via --rates, --grid or the config")
    if not rates or any(not r > 0 for r in rates):
        raise ConfigError("range-test: rates must be a nonempty list of positive numbers")
    return rates


def log_grid(low: float, high: float, num: int) -> list[float]:
    if not (0 < low <= high) or num < 1:
        raise ConfigError("grid: need 0 < low <= high and num >= 1")
    if num == 1:
        return [low]
    return [float(v) for v in np.geomspace(low, high, num)]


def range_test(objective, optimizer, x1, rates, steps, batch_size=None, seed=0):
    """Final loss for each constant rate; None marks a diverged run."""
    rows = []
    for eta in rates:
        batcher = Batcher(objective.n_samples, batch_size, seed) if isinstance(objective, MlpTask) else None
        with np.errstate(over="ignore", invalid="ignore"):
            traj = train(objective, optimizer, Constant(eta), x1, steps, batcher=batcher)
        rows.append((eta, None if traj.diverged else traj.final_loss))
    return rows


def range_test_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rate", "final_loss"])
    for eta, loss in rows:
        w.writerow([repr(float(eta)), "diverged" if loss is None else repr(float(loss))])
    return buf.getvalue()


def cmd_range_test(args) -> int:
    try:
        if not args.config:
            raise ConfigError("range-test: --config is required")
        obj = load_json(args.config[0])
        _check_keys(obj, RANGE_KEYS, "config")
        seed = args.seed if args.seed is not None else _int_field(obj, "seed", "config", 0, minimum=0)
        objective = build_objective(_require(obj, "objective", "config"), seed)
        optimizer = _optimizer(obj.get("optimizer", {"type": "sgd"}), seed)
        steps = args.steps or _int_field(obj, "epochs", "config") or _int_field(obj, "steps", "config")
        if steps is None:
            raise ConfigError("config: missing required field 'steps'")
        rates = parse_rates(obj, args.rates, args.grid)
        x1 = _x1(obj, objective)
        batch_size = _int_field(obj, "batch_size", "config", 32)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rows = range_test(objective, optimizer, x1, rates, steps, batch_size, seed)
    except (NumericalFailure, NoConvergence) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    _emit(range_test_csv(rows), args.out, "range_test.csv")
    return EXIT_OK


# ---------------------------------------------------------------- solve


def read_matrix_file(path) -> np.ndarray:
    """First line ``d``, then ``d`` rows of ``d`` whitespace-separated numbers."""
    try:
        lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not lines:
        raise ConfigError(f"{path}: empty matrix file")
    try:
        d = int(lines[0].strip())
    except ValueError as exc:
        raise ConfigError(f"{path}:1: expected the dimension d, got {lines[0]!r}") from exc
    if d < 1 or len(lines) != d + 1:
        raise ConfigError(f"{path}: expected {d} matrix rows after the header, found {len(lines) - 1}")
    rows = []
    for i, ln in enumerate(lines[1:], start=2):
        parts = ln.split()
        if len(parts) != d:
            raise ConfigError(f"{path}:{i}: expected {d} entries, got {len(parts)}")
        try:
            rows.append([float(v) for v in parts])
        except ValueError as exc:
            raise ConfigError(f"{path}:{i}: {exc}") from exc
    return np.array(rows)


def read_vector_file(path, d: int) -> np.ndarray:
    try:
        vals = [float(v) for v in Path(path).read_text().split()]
    except (OSError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if len(vals) != d:
        raise ConfigError(f"{path}: expected {d} entries, got {len(vals)}")
    return np.array(vals)


def solve(a, b, method: str, tol: float = 1e-10) -> dict:
    """Solve A x = b from x_1 = 0; raises NotSpd for non-SPD A."""
    q = QuadraticForm.from_matrix(a, b)
    cholesky(q.sym_h)  # rejects non-SPD input up front
    x1 = np.zeros(q.dim)
    if method == "newton":
        run = newton_method(q, x1, steps=q.dim, tol=tol)
        x, iters = run.x, len(run.iterates) - 1
    elif method == "cg":
        run = cg_practical(q, x1, tol)
        x, iters = run.x, run.terminated_at
    elif method in ("pcg-diag", "pcg-perfect"):
        pre = Preconditioner.diagonal(q.sym_h) if method == "pcg-diag" else Preconditioner.perfect(q.sym_h)
        run = pcg_untransformed(q, x1, pre, tol)
        x, iters = run.x, run.terminated_at
    else:
        raise ConfigError(f"unknown method {method!r}")
    res = float(np.linalg.norm(q.b - q.a @ x))
    return {
        "schema": SCHEMA_VERSION,
        "method": method,
        "iterations": int(iters),
        "residual_norm": res,
        "converged": res <= tol * max(1.0, float(np.linalg.norm(q.b))) * 10,
        "x": [float(v) for v in x],
    }


def cmd_solve(args) -> int:
    try:
        a = read_matrix_file(args.matrix)
        b = read_vector_file(args.rhs, a.shape[0]) if args.rhs else np.ones(a.shape[0])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = solve(a, b, args.method, args.tol)
    except (NumericalFailure, NonSymmetric, NoConvergence) as exc:
        print(f"numerical failure: {type(exc).__name__}: matrix must be symmetric positive definite ({exc})",
              file=sys.stderr)
        return EXIT_NUMERIC
    _emit(dump_json(result), args.out, "solve.json")
    return EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="descentkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", action="append", default=[], help="JSON config file (repeatable for run)")
        p.add_argument("--out", default=None, help="output directory or file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers for several configs")

    p = sub.add_parser("run", help="train one or more configured experiments")
    common(p)
    p.add_argument("--record-x", action="store_true", help="add x columns to trajectory.csv")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("schedule", help="tabulate a learning-rate schedule")
    common(p)
    p.add_argument("--spec", default=None, help="schedule JSON (inline or file)")
    p.add_argument("--t-max", type=int, default=None, dest="t_max")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("range-test", help="final loss over a grid of constant learning rates")
    common(p)
    p.add_argument("--rates", default=None, help="comma-separated rates")
    p.add_argument("--grid", nargs=3, metavar=("LOW", "HIGH", "NUM"), default=None,
                   help="log-spaced grid")
    p.add_argument("--steps", type=int, default=None, help="steps (epochs for MLP) per rate")
    p.set_defaults(func=cmd_range_test)

    p = sub.add_parser("solve", help="solve A x = b for an SPD matrix file")
    common(p)
    p.add_argument("--matrix", required=True)
    p.add_argument("--rhs", default=None, help="vector file (default: all ones)")
    p.add_argument("--method", choices=["newton", "cg", "pcg-diag", "pcg-perfect"], default="cg")
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_solve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    if args.jobs < 1:
        print("--jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
