"""
Experiment configuration and runner.

An experiment is one JSON document: a problem selector, a method with its
options, a list of initializations, the seeds to repeat over and an
optional rho/eta sweep. Every (seed, initialization, sweep point) unit is
an independent run; units may execute on a process pool.
"""

import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from attrs import frozen
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, ValidationError, model_validator

from forum_moblo.baselines.moml import MODE_CAPABILITIES, MomlConfig, MomlMode, run_moml
from forum_moblo.harness.outputs import config_sha256, dump_hyperclean_csv, write_summary_json, write_trace_csv
from forum_moblo.problems.hyperclean import HypercleaningProblem, HypercleanSpec, hyperclean_report, hypercleaning_synthetic
from forum_moblo.problems.quadratic import RandomQuadratic, random_quadratic
from forum_moblo.problems.synthetic import STANDARD_INITIALIZATIONS, SyntheticMOBLO, standard_initial_points
from forum_moblo.shared.config import ForumConfig, QPConfig, StoppingTolerances
from forum_moblo.shared.errors import CapabilityError, ConfigurationError, DivergenceError
from forum_moblo.shared.models import Capability, DecisionPoint, ProblemOracle
from forum_moblo.shared.rng import make_rng
from forum_moblo.solver.driver import IterateRecord, run_forum
from forum_moblo.solver.lower_level import exact_constraint

logger = logging.getLogger(__name__)

Method = Literal["forum", "moml_exact", "moml_unrolled"]

PROBLEM_CLASSES = {
    "synthetic": SyntheticMOBLO,
    "random_quadratic": RandomQuadratic,
    "hyperclean": HypercleaningProblem,
}

METHOD_MODES = {"moml_exact": MomlMode.EXACT, "moml_unrolled": MomlMode.UNROLLED}


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class HypercleanOptions(_Strict):
    m: int = Field(default=2, ge=1)
    classes: int = Field(default=3, ge=2)
    feature_dim: int = Field(default=10, ge=1)
    train_size: Union[PositiveInt, List[PositiveInt]] = 200
    val_size: int = Field(default=100, ge=1)
    test_size: int = Field(default=200, ge=1)
    corruption_rate: float = Field(default=0.5, ge=0.0, lt=1.0)
    cluster_separation: float = Field(default=3.0, gt=0.0)
    ridge: float = Field(default=1e-2, gt=0.0)


class ProblemSelector(_Strict):
    kind: Literal["synthetic", "random_quadratic", "hyperclean"]
    n: int = Field(default=10, ge=1)
    p: int = Field(default=100, ge=1)
    m: int = Field(default=2, ge=1)
    kappa: Optional[float] = Field(default=None, ge=0.0)
    hyperclean: HypercleanOptions = Field(default_factory=HypercleanOptions)


class StoppingOptions(_Strict):
    tol: float = Field(default=1e-6, ge=0.0)
    stall_tol: float = Field(default=1e-12, ge=0.0)
    stall_window: int = Field(default=50, ge=1)


class ForumOptions(_Strict):
    K: int = Field(ge=0)
    T: int = Field(ge=0)
    mu: float = Field(gt=0.0)
    eta: float = Field(gt=0.0)
    rho: float = Field(default=0.5, ge=0.0)
    beta_exponent: float = Field(default=0.75, gt=0.0, le=1.0)
    warm_start: bool = True
    per_block_steps: Optional[Tuple[float, float]] = None
    qp_max_iters: int = Field(default=1000, ge=1)
    qp_tolerance: float = Field(default=1e-10, ge=0.0)
    qp_polish: bool = True
    grad_floor: float = Field(default=1e-12, ge=0.0)
    metric_stride: int = Field(default=1, ge=1)
    metric_ll_factor: int = Field(default=10, ge=1)
    stopping: Optional[StoppingOptions] = None


class MomlOptions(_Strict):
    K: int = Field(ge=0)
    mu: float = Field(gt=0.0)
    T: int = Field(default=0, ge=0)
    eta: float = Field(default=0.05, gt=0.0)
    warm_start: bool = True
    metric_stride: int = Field(default=1, ge=1)


class InitialPoint(_Strict):
    """Explicit z_0, or a seeded N(0, scale^2) draw for any missing block."""

    alpha: Optional[List[float]] = None
    omega: Optional[List[float]] = None
    scale: float = Field(default=1.0, ge=0.0)
    label: Optional[str] = None


class SweepOptions(_Strict):
    rho: Optional[List[float]] = None
    eta: Optional[List[float]] = None


class OutputOptions(_Strict):
    prefix: Optional[str] = None
    dump_dataset: bool = False


class BenchmarkOptions(_Strict):
    T_values: List[int] = Field(default_factory=lambda: [1, 4, 16, 64, 256])
    p_values: List[int] = Field(default_factory=lambda: [100, 1000, 10000])
    methods: List[Method] = Field(default_factory=lambda: ["forum", "moml_unrolled"])
    n: int = Field(default=10, ge=1)
    m: int = Field(default=2, ge=1)
    mu: float = Field(default=0.01, gt=0.0)
    eta: float = Field(default=0.05, gt=0.0)
    rho: float = Field(default=0.5, ge=0.0)
    warmup: int = Field(default=2, ge=0)
    timed: int = Field(default=5, ge=5)


class CompareEntry(_Strict):
    method: Method
    label: Optional[str] = None
    forum: Optional[ForumOptions] = None
    moml: Optional[MomlOptions] = None


class CompareOptions(_Strict):
    methods: List[CompareEntry] = Field(min_length=1)
    threshold: float = Field(default=1e-2, gt=0.0)
    metric: Literal["optimality_gap", "kkt_residual", "q_exact"] = "optimality_gap"


class ExperimentConfig(_Strict):
    name: str = "experiment"
    problem: ProblemSelector
    method: Method = "forum"
    forum: Optional[ForumOptions] = None
    moml: Optional[MomlOptions] = None
    initializations: Union[Literal["standard", "zeros"], List[InitialPoint]] = "zeros"
    seeds: Optional[List[int]] = None
    repeat: int = Field(default=1, ge=1)
    sweep: Optional[SweepOptions] = None
    outputs: OutputOptions = Field(default_factory=OutputOptions)
    benchmark: Optional[BenchmarkOptions] = None
    compare: Optional[CompareOptions] = None

    @model_validator(mode="after")
    def _check_sections(self) -> "ExperimentConfig":
        if self.method == "forum" and self.forum is None and self.compare is None and self.benchmark is None:
            raise ValueError("method 'forum' needs a 'forum' section")
        if self.method != "forum" and self.moml is None and self.compare is None and self.benchmark is None:
            raise ValueError(f"method '{self.method}' needs a 'moml' section")
        if self.seeds is not None:
            if len(self.seeds) != len(set(self.seeds)):
                raise ValueError("seeds must be distinct")
            if self.repeat != 1 and self.repeat != len(self.seeds):
                raise ValueError(f"repeat={self.repeat} disagrees with {len(self.seeds)} seeds")
        if any(s < 0 or s >= 1 << 64 for s in self.seeds or []):
            raise ValueError("seeds must be 64-bit unsigned integers")
        return self

    def with_seed(self, seed: Optional[int]) -> "ExperimentConfig":
        """The config as actually run when ``seed`` replaces the seed list."""
        if seed is None:
            return self
        return self.model_copy(update={"seeds": [seed], "repeat": 1})

    def resolved_seeds(self) -> List[int]:
        if self.seeds is not None:
            return list(self.seeds)
        return list(range(self.repeat))

    def sweep_points(self) -> List[Dict[str, float]]:
        if self.sweep is None:
            return [{}]
        axes = {k: v for k, v in (("rho", self.sweep.rho), ("eta", self.sweep.eta)) if v}
        return [dict(zip(axes, combo)) for combo in itertools.product(*axes.values())] or [{}]

    def to_forum_config(self, seed: int, overrides: Optional[Dict[str, float]] = None) -> ForumConfig:
        if self.forum is None:
            raise ConfigurationError("missing forum section", field="forum")
        options = self.forum.model_copy(update=overrides or {})
        stopping = None
        if options.stopping is not None:
            stopping = StoppingTolerances(**options.stopping.model_dump())
        return ForumConfig(
            K=options.K,
            T=options.T,
            mu=options.mu,
            eta=options.eta,
            rho=options.rho,
            beta_exponent=options.beta_exponent,
            warm_start=options.warm_start,
            per_block_steps=options.per_block_steps,
            seed=seed,
            qp=QPConfig(
                max_iters=options.qp_max_iters,
                tolerance=options.qp_tolerance,
                grad_floor=options.grad_floor,
                polish=options.qp_polish,
            ),
            metric_stride=options.metric_stride,
            metric_ll_factor=options.metric_ll_factor,
            stopping=stopping,
        )

    def to_moml_config(self, seed: int, overrides: Optional[Dict[str, float]] = None) -> MomlConfig:
        if self.moml is None:
            raise ConfigurationError("missing moml section", field="moml")
        options = self.moml.model_copy(update={k: v for k, v in (overrides or {}).items() if k == "eta"})
        return MomlConfig(
            K=options.K,
            mu=options.mu,
            mode=METHOD_MODES[self.method],
            T=options.T,
            eta=options.eta,
            warm_start=options.warm_start,
            seed=seed,
            metric_stride=options.metric_stride,
        )


def _field_path(error: Dict[str, Any]) -> str:
    return ".".join(str(part) for part in error.get("loc", ())) or "<root>"


def parse_experiment_config(text: str) -> ExperimentConfig:
    """Parse a JSON document; syntax errors carry line/column, validation errors the field path."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}", field="<json>") from exc
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigurationError(first["msg"], field=_field_path(first)) from exc


def load_experiment_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}", field="config")
    return parse_experiment_config(path.read_text(encoding="utf-8"))


def build_problem(selector: ProblemSelector, seed: int) -> Tuple[ProblemOracle, Optional[np.ndarray]]:
    """Instantiate the selected problem; generated problems draw from ``seed``."""
    if selector.kind == "synthetic":
        return SyntheticMOBLO(), None
    if selector.kind == "random_quadratic":
        return random_quadratic(seed, selector.n, selector.p, selector.m, kappa=selector.kappa), None
    spec = HypercleanSpec(seed=seed, **selector.hyperclean.model_dump())
    return hypercleaning_synthetic(spec)


def required_capabilities(config: ExperimentConfig, method: Optional[str] = None) -> Tuple[Capability, ...]:
    method = method or config.method
    if method == "forum":
        return ()
    return MODE_CAPABILITIES[METHOD_MODES[method]]


def check_capabilities(config: ExperimentConfig, methods: Optional[Sequence[str]] = None) -> None:
    """Reject problem-method mismatches before any compute."""
    problem_cls = PROBLEM_CLASSES[config.problem.kind]
    for method in methods or [config.method]:
        for capability in required_capabilities(config, method):
            if capability not in problem_cls.capabilities:
                raise CapabilityError(capability.value, problem_cls.name)
    if config.initializations == "standard" and config.problem.kind != "synthetic":
        raise ConfigurationError("'standard' initializations exist only for the synthetic problem", field="initializations")


def initial_points(config: ExperimentConfig, problem: ProblemOracle, seed: int) -> List[Tuple[str, DecisionPoint]]:
    dims = problem.dims
    if config.initializations == "standard":
        return [(f"init{j}", z) for j, z in enumerate(standard_initial_points())]
    if config.initializations == "zeros":
        return [("zeros", DecisionPoint(alpha=np.zeros(dims.n), omega=np.zeros(dims.p)))]
    rng = make_rng(seed)
    points = []
    for j, init in enumerate(config.initializations):
        alpha = init.alpha if init.alpha is not None else init.scale * rng.standard_normal(dims.n)
        omega = init.omega if init.omega is not None else init.scale * rng.standard_normal(dims.p)
        points.append((init.label or f"init{j}", problem.point(alpha, omega)))
    return points


@frozen(eq=False)
class MethodOutcome:
    trace: List[IterateRecord]
    final: DecisionPoint
    verdict: str
    final_metrics: Dict[str, Any]
    max_q_exact: Optional[float]


def execute_method(
    config: ExperimentConfig,
    problem: ProblemOracle,
    z_0: DecisionPoint,
    seed: int,
    overrides: Optional[Dict[str, float]] = None,
) -> MethodOutcome:
    """Run the configured method from z_0 and collect final-state metrics."""
    if config.method == "forum":
        forum_config = config.to_forum_config(seed, overrides)
        run = run_forum(problem, z_0, forum_config)
        fm = run.final_metrics
        final = {
            "F_values": [float(v) for v in fm.F_values],
            "q": fm.q,
            "kkt_residual": fm.kkt_residual,
            "optimality_gap": fm.optimality_gap,
            "approximate_metrics": fm.approximate,
        }
        return MethodOutcome(run.trace, run.final, run.verdict.value, final, run.max_q_exact)

    moml_config = config.to_moml_config(seed, overrides)
    run = run_moml(problem, z_0, moml_config)
    q = exact_constraint(problem, run.final)[0] if problem.supports(Capability.EXACT_SOLUTION) else None
    gap = problem.optimality_gap(run.final) if problem.supports(Capability.OPTIMALITY_GAP) else None
    final = {
        "F_values": [float(v) for v in problem.ul_values(run.final)],
        "q": q,
        "kkt_residual": run.trace[-1].kkt_residual if run.trace else None,
        "optimality_gap": gap,
        "approximate_metrics": False,
    }
    q_values = [r.q_exact for r in run.trace if r.q_exact is not None]
    return MethodOutcome(run.trace, run.final, run.verdict.value, final, max(q_values) if q_values else None)


@frozen
class RunUnit:
    seed: int
    init_index: int
    sweep: Tuple[Tuple[str, float], ...]


def _unit_name(config: ExperimentConfig, unit: RunUnit, init_label: str) -> str:
    parts = [config.outputs.prefix or config.name, config.method, f"seed{unit.seed}", init_label]
    parts.extend(f"{key}{value:g}" for key, value in unit.sweep)
    return "__".join(parts)


def _run_unit(config_data: Dict[str, Any], unit: RunUnit, out_dir: str) -> Dict[str, Any]:
    """Worker entry point; takes plain data so it pickles across processes."""
    config = ExperimentConfig.model_validate(config_data)
    problem, mask = build_problem(config.problem, unit.seed)
    label, z_0 = initial_points(config, problem, unit.seed)[unit.init_index]
    overrides = dict(unit.sweep)
    name = _unit_name(config, unit, label)
    try:
        outcome = execute_method(config, problem, z_0, unit.seed, overrides)
    except DivergenceError as exc:
        if exc.trace:
            partial_path = Path(out_dir) / f"{name}__diverged.csv"
            write_trace_csv(partial_path, exc.trace, problem.dims.m, config_data, unit.seed)
            logger.error(f"Run {name} diverged; wrote {len(exc.trace)} records to {partial_path}")
        raise

    trace_path = Path(out_dir) / f"{name}.csv"
    write_trace_csv(trace_path, outcome.trace, problem.dims.m, config_data, unit.seed)

    result: Dict[str, Any] = {
        "seed": unit.seed,
        "initialization": label,
        "sweep": overrides,
        "verdict": outcome.verdict,
        "iterations": len(outcome.trace),
        "final": outcome.final_metrics,
        "max_q_exact": outcome.max_q_exact,
        "total_wall_time_s": float(sum(r.wall_time_seconds for r in outcome.trace)),
        "trace_file": trace_path.name,
    }
    if isinstance(problem, HypercleaningProblem):
        result["hyperclean"] = hyperclean_report(problem, outcome.final, mask).as_dict()
        if config.outputs.dump_dataset:
            dump_hyperclean_csv(problem, Path(out_dir) / f"dataset__seed{unit.seed}.csv")
    return result


def _scalar_columns(run: Dict[str, Any]) -> Dict[str, float]:
    flat = {}
    for key in ("q", "kkt_residual", "optimality_gap"):
        value = run["final"].get(key)
        if value is not None:
            flat[f"final_{key}"] = value
    for i, value in enumerate(run["final"]["F_values"], start=1):
        flat[f"final_F_{i}"] = value
    report = run.get("hyperclean")
    if report:
        for key in ("mean_weight_clean", "mean_weight_corrupt", "mean_test_accuracy"):
            if report.get(key) is not None:
                flat[key] = report[key]
        flat["mean_test_macro_f1"] = float(np.mean(report["test_macro_f1"]))
    flat["total_wall_time_s"] = run["total_wall_time_s"]
    return flat


def aggregate_runs(runs: Sequence[Dict[str, Any]]) -> List[Dict[str, Any]]:
    """Mean and population std of final metrics across seeds, per (initialization, sweep point)."""
    rows = []
    for run in runs:
        key = {"initialization": run["initialization"], **{f"sweep_{k}": v for k, v in run["sweep"].items()}}
        rows.append({**key, **_scalar_columns(run)})
    frame = pd.DataFrame(rows)
    group_keys = [c for c in frame.columns if c == "initialization" or c.startswith("sweep_")]
    aggregates = []
    for key_values, group in frame.groupby(group_keys, sort=True, dropna=False):
        key_values = key_values if isinstance(key_values, tuple) else (key_values,)
        entry: Dict[str, Any] = dict(zip(group_keys, key_values))
        entry["runs"] = int(len(group))
        for column in frame.columns:
            if column in group_keys:
                continue
            values = group[column].dropna().to_numpy(dtype=float)
            if values.size:
                entry[column] = {"mean": float(values.mean()), "std": float(values.std())}
        aggregates.append(entry)
    return aggregates


def plan_units(config: ExperimentConfig, seeds: Sequence[int]) -> List[RunUnit]:
    if config.initializations == "standard":
        init_count = len(STANDARD_INITIALIZATIONS)
    elif config.initializations == "zeros":
        init_count = 1
    else:
        init_count = len(config.initializations)
    return [
        RunUnit(seed=seed, init_index=j, sweep=tuple(sorted(point.items())))
        for seed in seeds
        for j in range(init_count)
        for point in config.sweep_points()
    ]


def run_experiment(
    config: Union[ExperimentConfig, str, Path],
    out_dir: Union[str, Path],
    seed: Optional[int] = None,
    workers: int = 1,
) -> Dict[str, Any]:
    """
    Execute every unit of the experiment, write one trace CSV per unit and
    a summary JSON. Returns the summary. ``seed`` replaces the seed list.
    """
    if not isinstance(config, ExperimentConfig):
        config = load_experiment_config(config)
    check_capabilities(config)
    config = config.with_seed(seed)
    seeds = config.resolved_seeds()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config_data = config.model_dump(mode="json")
    units = plan_units(config, seeds)
    logger.info(f"Running {config.name}: {len(units)} runs of {config.method} on {config.problem.kind}")

    if workers > 1 and len(units) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_unit, config_data, unit, str(out_dir)) for unit in units]
            runs = [future.result() for future in futures]
    else:
        runs = [_run_unit(config_data, unit, str(out_dir)) for unit in units]

    summary = {
        "name": config.name,
        "method": config.method,
        "problem": config.problem.kind,
        "config": config_data,
        "config_sha256": config_sha256(config_data),
        "seeds": seeds,
        "runs": runs,
        "aggregates": aggregate_runs(runs),
    }
    summary_path = out_dir / f"{config.outputs.prefix or config.name}__summary.json"
    write_summary_json(summary_path, summary)
    summary["summary_file"] = str(summary_path)
    return summary
