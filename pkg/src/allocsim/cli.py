"""Command-line entry point: simulate, sweep, optimize, baseline, report.

Exit codes: 0 success, 1 invalid input or usage, 2 file-system errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import random
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .agents import LlmBackend, LlmConfig, RuleBackend
from .agents.base import Backend
from .engine import DEFAULT_MAX_ROUNDS, run_simulation
from .metrics import (
    FAIRNESS_METRICS,
    METRIC_NAMES,
    SATISFACTION_METRICS,
    WEIGHT_PRESETS,
    MetricsReport,
    aggregate_f,
    compute_metrics,
    normalization_stats,
)
from .optimizer import (
    FeatureEncoder,
    GAParams,
    exhaustive_assignment,
    km_baseline,
    poa_optimize,
    random_vector,
    satisfaction_matrix,
    train_predictor_incremental,
)
from .optimizer.assignment import EXHAUSTIVE_LIMIT
from .policy import PRESETS, Policy, PolicyError, decode_policy, encode_policy, validate_policy
from .scenario import Scenario, ScenarioError, ScenarioSpec, apply_quality_variant, generate_scenario

log = logging.getLogger("allocsim")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2

POLICY_COLUMNS = ("label", "m", "entry_rule", "sort_rule", "k", "c", "resource_rule", "batch_p", "batch_r")
METRIC_COLUMNS = SATISFACTION_METRICS + FAIRNESS_METRICS


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists each offending field."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    scenario_path: Optional[str] = None
    scenario_spec: Optional[ScenarioSpec] = None
    scenario_seed: Optional[int] = None
    quality_variant: str = "S"
    policy: Policy = field(default_factory=Policy)
    grid: str = "entry_resource"
    backend: str = "rule"
    backend_params: Dict[str, Any] = field(default_factory=dict)
    seeds: List[int] = field(default_factory=lambda: [0])
    max_rounds: int = DEFAULT_MAX_ROUNDS
    social: bool = True
    parallel: bool = False
    weights: str = "satisfaction"
    ga: Dict[str, Any] = field(default_factory=dict)
    surrogate: Dict[str, Any] = field(default_factory=dict)
    calibration_size: int = 16
    out: Optional[str] = None


_CONFIG_KEYS = {
    "scenario", "scenario_spec", "scenario_seed", "quality_variant", "policy", "preset", "grid", "backend",
    "backend_params", "seeds", "max_rounds", "social", "parallel", "weights", "ga", "surrogate",
    "calibration_size", "out",
}
_SURROGATE_KEYS = {"mae_threshold", "batch", "max_samples", "lam", "exact"}


def parse_config(data: Any, base_dir: str = ".") -> RunConfig:
    """Validate a config document strictly, collecting every problem before failing."""
    if not isinstance(data, dict):
        raise ConfigError(["config must be a JSON object"])
    problems = [f"unknown key {k!r}" for k in sorted(set(data) - _CONFIG_KEYS)]
    cfg = RunConfig()
    has_path, has_spec = "scenario" in data, "scenario_spec" in data
    if has_path == has_spec:
        problems.append("exactly one of 'scenario' (path) or 'scenario_spec' is required")
    if has_path:
        if isinstance(data["scenario"], str):
            cfg.scenario_path = os.path.join(base_dir, data["scenario"])
        else:
            problems.append("scenario must be a file path string")
    if has_spec:
        try:
            cfg.scenario_spec = ScenarioSpec.from_dict(data["scenario_spec"]).validate()
        except (ScenarioError, TypeError) as exc:
            problems.append(f"scenario_spec: {exc}")
    if "policy" in data and "preset" in data:
        problems.append("give either 'policy' or 'preset', not both")
    try:
        if "preset" in data:
            if data["preset"] not in PRESETS:
                raise PolicyError([f"unknown preset {data['preset']!r}; known: {', '.join(PRESETS)}"])
            cfg.policy = PRESETS[data["preset"]]
        elif "policy" in data:
            pol = dict(data["policy"])
            if "proportions" in pol and pol["proportions"] is not None:
                pol["proportions"] = tuple(pol["proportions"])
            cfg.policy = validate_policy(Policy.from_dict(pol))
    except PolicyError as exc:
        problems += [f"policy: {p}" for p in exc.problems]
    except TypeError as exc:
        problems.append(f"policy: {exc}")

    def typed(key, kind, check=None, msg=""):
        if key not in data:
            return
        value = data[key]
        # bool is an int subclass; only accept it where a bool is wanted
        if not isinstance(value, kind) or (kind is not bool and isinstance(value, bool)):
            problems.append(f"{key} must be of type {kind.__name__}")
        elif check is not None and not check(value):
            problems.append(f"{key} {msg}")
        else:
            setattr(cfg, key, value)

    typed("scenario_seed", int)
    typed("quality_variant", str, lambda v: v in ("S", "H", "B"), "must be S, H or B")
    typed("grid", str, lambda v: v in SWEEP_GRIDS, f"must be one of {', '.join(SWEEP_GRIDS)}")
    typed("backend", str, lambda v: v in ("rule", "llm"), "must be 'rule' or 'llm'")
    typed("backend_params", dict)
    typed("seeds", list, lambda v: v and all(isinstance(s, int) and not isinstance(s, bool) for s in v),
          "must be a non-empty list of integers")
    typed("max_rounds", int, lambda v: v >= 1, "must be >= 1")
    typed("social", bool)
    typed("parallel", bool)
    typed("weights", str, lambda v: v in WEIGHT_PRESETS, f"must be one of {', '.join(WEIGHT_PRESETS)}")
    typed("ga", dict, lambda v: set(v) <= {f.name for f in fields(GAParams)}, "has unknown GA fields")
    typed("surrogate", dict, lambda v: set(v) <= _SURROGATE_KEYS, "has unknown surrogate fields")
    typed("calibration_size", int, lambda v: v >= 1, "must be >= 1")
    typed("out", str)
    if "ga" in data and isinstance(data["ga"], dict):
        try:
            GAParams(**data["ga"])
        except (TypeError, ValueError) as exc:
            problems.append(f"ga: {exc}")
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: not valid JSON ({exc})"]) from exc
    return parse_config(data, os.path.dirname(os.path.abspath(path)))


def write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)  # mkstemp creates 0600
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_outputs(out_dir: str, artifacts: Dict[str, str]) -> List[str]:
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, text in artifacts.items():
        path = os.path.join(out_dir, name)
        write_atomic(path, text)
        written.append(path)
    return written


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# shared runners
# ---------------------------------------------------------------------------

def build_scenario(cfg: RunConfig, seed: int) -> Scenario:
    if cfg.scenario_path is not None:
        with open(cfg.scenario_path, encoding="utf-8") as fh:
            try:
                scenario = Scenario.from_json(fh.read())
            except (json.JSONDecodeError, ScenarioError) as exc:
                raise ConfigError([f"scenario file: {exc}"]) from exc
    else:
        scenario = generate_scenario(cfg.scenario_spec, cfg.scenario_seed if cfg.scenario_seed is not None else seed)
    if cfg.quality_variant != "S":
        scenario = replace(scenario, resources=tuple(apply_quality_variant(scenario.resources, cfg.quality_variant)))
    return scenario


def build_backend(cfg: RunConfig) -> Backend:
    if cfg.backend == "llm":
        return LlmBackend(LlmConfig.from_env(**cfg.backend_params))
    try:
        return RuleBackend(**cfg.backend_params)
    except TypeError as exc:
        raise ConfigError([f"backend_params: {exc}"]) from exc


def simulate_once(cfg: RunConfig, policy: Policy, seed: int, backend: Optional[Backend] = None):
    scenario = build_scenario(cfg, seed)
    trace = run_simulation(scenario, policy, backend or build_backend(cfg), seed, cfg.max_rounds,
                           social=cfg.social, parallel=cfg.parallel)
    report = compute_metrics(trace.outcome, scenario.participants, scenario.resources)
    return scenario, trace, report


def _grid_entry_resource() -> List[Policy]:
    return [Policy(m=3, entry_rule=e, sort_rule="FIFO", k=2, c=1.5, resource_rule=r)
            for e in ("rent", "family", "select") for r in ("size", "rent", "random")]


SWEEP_GRIDS = {
    "entry_resource": _grid_entry_resource,
    "queues": lambda: [Policy(m=m) for m in range(1, 6)],
    "entry_numbers": lambda: [Policy(batch_p=bp, batch_r=br) for bp in (5, 10, 20) for br in (5, 10, 20)],
    "sorting": lambda: [Policy(sort_rule=s) for s in ("FIFO", "VFA", "VFR")],
    "waitlist": lambda: [Policy(k=k, c=c) for k in (1, 2, 3) for c in (1.2, 1.5, 1.8)],
}


def sweep_rows(cfg: RunConfig, policies: Sequence[Policy], seeds: Sequence[int], jobs: int = 1) -> List[Dict[str, Any]]:
    tasks = [(p, s) for p in policies for s in seeds]

    def run(task):
        pol, seed = task
        _, _, report = simulate_once(cfg, pol, seed)
        return pol, seed, report

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(run, tasks))
    else:
        results = [run(t) for t in tasks]
    rows = []
    for pol, seed, report in results:
        row: Dict[str, Any] = {"label": pol.label()}
        row.update({k: getattr(pol, k) for k in POLICY_COLUMNS[1:]})
        row["seed"] = seed
        row.update({m: getattr(report, m) for m in METRIC_COLUMNS})
        row["allocated_count"] = report.allocated_count
        rows.append(row)
    return rows


def rows_to_csv(rows: Sequence[Dict[str, Any]], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({c: (repr(v) if isinstance(v, float) else v) for c, v in row.items() if c in columns})
    return buf.getvalue()


SWEEP_COLUMNS = POLICY_COLUMNS + ("seed",) + METRIC_COLUMNS + ("allocated_count",)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "preset", None):
        if args.preset not in PRESETS:
            raise ConfigError([f"unknown preset {args.preset!r}"])
        cfg.policy = PRESETS[args.preset]
    if getattr(args, "backend", None):
        cfg.backend = args.backend
    if getattr(args, "max_rounds", None) is not None:
        if args.max_rounds < 1:
            raise ConfigError(["--max-rounds must be >= 1"])
        cfg.max_rounds = args.max_rounds
    if getattr(args, "seed", None) is not None:
        cfg.seeds = [args.seed]
    if getattr(args, "seeds", None):
        try:
            cfg.seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError as exc:
            raise ConfigError([f"--seeds: {exc}"]) from exc
        if not cfg.seeds:
            raise ConfigError(["--seeds must list at least one seed"])
    if getattr(args, "out", None):
        cfg.out = args.out
    if not cfg.out:
        raise ConfigError(["an output directory is required (--out or 'out' in the config)"])
    return cfg


def cmd_simulate(args) -> int:
    cfg = _config(args)
    seed = cfg.seeds[0]
    scenario, trace, report = simulate_once(cfg, cfg.policy, seed)
    save_outputs(cfg.out, {
        "trace.jsonl": trace.to_jsonl(),
        "metrics.json": dumps({"seed": seed, "policy": cfg.policy.to_dict(), **report.to_dict()}),
        "outcome.json": dumps(trace.outcome.to_dict()),
    })
    log.info("simulate: %d/%d allocated, SW %.3f", report.allocated_count, report.n, report.sw)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    grid = args.grid or cfg.grid
    if grid not in SWEEP_GRIDS:
        raise ConfigError([f"unknown grid {grid!r}; known: {', '.join(SWEEP_GRIDS)}"])
    rows = sweep_rows(cfg, SWEEP_GRIDS[grid](), cfg.seeds, args.jobs)
    save_outputs(cfg.out, {"sweep.csv": rows_to_csv(rows, SWEEP_COLUMNS)})
    return EXIT_OK


def cmd_optimize(args) -> int:
    cfg = _config(args)
    weights = WEIGHT_PRESETS[cfg.weights]
    backend = build_backend(cfg)
    cache: Dict[Tuple[float, ...], MetricsReport] = {}

    def metrics_for(policy: Policy) -> MetricsReport:
        key = encode_policy(policy).genes
        if key not in cache:
            reports = [simulate_once(cfg, policy, s, backend)[2] for s in cfg.seeds]
            mean = {m: sum(getattr(r, m) for r in reports) / len(reports) for m in METRIC_NAMES}
            cache[key] = MetricsReport(**mean, n=reports[0].n,
                                       allocated_count=round(sum(r.allocated_count for r in reports) / len(reports)))
        return cache[key]

    # fix normalisation from a calibration pool so f is stationary during the search
    rng = random.Random(cfg.seeds[0])
    calibration = list(PRESETS.values()) + [decode_policy(random_vector(rng)) for _ in range(cfg.calibration_size)]
    stats = normalization_stats([metrics_for(p) for p in calibration])

    def exact(v) -> float:
        return aggregate_f(metrics_for(decode_policy(v)), weights, stats) / weights.total

    sur = {"mae_threshold": 0.05, "batch": 20, "max_samples": 200, "lam": 1.0, "exact": False, **cfg.surrogate}
    ga = GAParams(**{"seed": cfg.seeds[0], **cfg.ga})
    artifacts: Dict[str, str] = {}
    if sur["exact"]:
        fitness, train_info = exact, None
    else:
        train = train_predictor_incremental(exact, FeatureEncoder(), sur["mae_threshold"], sur["batch"],
                                            sur["max_samples"], ga.seed, sur["lam"])
        fitness = train.predictor
        train_info = {"samples": len(train.dataset), "test_mae": train.test_mae, "converged": train.converged}
        artifacts["dataset.csv"] = train.dataset.csv_text()
    result = poa_optimize(list(PRESETS.values()), fitness, ga)
    best = result.best_policy
    summary = {
        "best_policy": best.to_dict(),
        "predicted_f": result.best_fitness,
        "simulated_f": exact(result.best_vector),
        "metrics": metrics_for(best).to_dict(),
        "weights": cfg.weights,
        "surrogate": train_info,
        "improvement": result.improvement,
    }
    hist = rows_to_csv([{"iteration": h["iteration"], "mean_f": h["mean"], "max_f": h["max"]} for h in result.history],
                       ("iteration", "mean_f", "max_f"))
    artifacts.update({"best_policy.json": dumps(summary), "history.csv": hist})
    save_outputs(cfg.out, artifacts)
    return EXIT_OK


def cmd_baseline(args) -> int:
    cfg = _config(args)
    seed = cfg.seeds[0]
    scenario = build_scenario(cfg, seed)
    U = satisfaction_matrix(scenario, build_backend(cfg))
    pids = [p.id for p in scenario.participants]
    rids = [r.id for r in scenario.resources]
    assignment, sw = km_baseline(U)
    out: Dict[str, Any] = {
        "seed": seed,
        "km": {"sw": sw, "assignment": {str(pids[i]): (rids[j] if j is not None else None)
                                        for i, j in assignment.items()}},
    }
    if max(U.shape) <= EXHAUSTIVE_LIMIT:
        ex_assign, ex_sw = exhaustive_assignment(U)
        out["exhaustive"] = {"sw": ex_sw, "assignment": {str(pids[i]): (rids[j] if j is not None else None)
                                                        for i, j in ex_assign.items()}}
    else:
        out["exhaustive"] = None
        out["exhaustive_skipped"] = f"matrix {U.shape[0]}x{U.shape[1]} exceeds {EXHAUSTIVE_LIMIT}"
    save_outputs(cfg.out, {"baseline.json": dumps(out)})
    return EXIT_OK


def cmd_report(args) -> int:
    rows = []
    for run_dir in args.inputs:
        path = os.path.join(run_dir, "metrics.json")
        with open(path, encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError([f"{path}: {exc}"]) from exc
        missing = [m for m in METRIC_COLUMNS if m not in data]
        if missing:
            raise ConfigError([f"{path}: missing metric {m!r}" for m in missing])
        row = {"run": os.path.basename(os.path.normpath(run_dir)), "seed": data.get("seed")}
        row.update({m: data[m] for m in METRIC_COLUMNS})
        row["allocated_count"] = data.get("allocated_count")
        rows.append(row)
    text = rows_to_csv(rows, ("run", "seed") + METRIC_COLUMNS + ("allocated_count",))
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    write_atomic(args.out, text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with status 2
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="allocsim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="{simulate,sweep,optimize,baseline,report}",
                                parser_class=_Parser)
    sub.required = True

    def common(p, many_seeds=False):
        p.add_argument("--config", required=True)
        p.add_argument("--out")
        p.add_argument("--backend", choices=("rule", "llm"))
        p.add_argument("--max-rounds", type=int, dest="max_rounds")
        if many_seeds:
            p.add_argument("--seeds", help="comma-separated seeds")
        else:
            p.add_argument("--seed", type=int)
        return p

    p = common(sub.add_parser("simulate", help="run one simulation"))
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.set_defaults(func=cmd_simulate)
    p = common(sub.add_parser("sweep", help="run a policy grid over seeds"), many_seeds=True)
    p.add_argument("--grid", choices=sorted(SWEEP_GRIDS))
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    p = common(sub.add_parser("optimize", help="search for a policy with the GA"), many_seeds=True)
    p.set_defaults(func=cmd_optimize)
    p = common(sub.add_parser("baseline", help="full-information assignment baselines"))
    p.set_defaults(func=cmd_baseline)
    p = sub.add_parser("report", help="merge metrics.json files into a CSV")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def run_command(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, PolicyError, ScenarioError) as exc:
        problems = getattr(exc, "problems", None) or [str(exc)]
        for p in problems:
            print(f"error: {p}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run_command())
