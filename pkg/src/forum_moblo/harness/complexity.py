"""
Per-iteration time and workspace scaling in the LL step count T.

Each (method, p, T) cell runs 2 warm-up and 5 timed UL iterations on a
random quadratic; timings exclude metric computation, and workspace is the
peak float count of solver buffers within one iteration.
"""

import logging
import time
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from attrs import field, frozen
from scipy.stats import linregress

from forum_moblo.baselines.moml import MomlConfig, MomlMode, moml_step
from forum_moblo.problems.quadratic import random_quadratic
from forum_moblo.shared.config import ForumConfig
from forum_moblo.shared.errors import ConfigurationError
from forum_moblo.shared.models import DecisionPoint, ProblemOracle, SimplexWeights
from forum_moblo.shared.workspace import Workspace
from forum_moblo.solver.driver import forum_step

logger = logging.getLogger(__name__)

DEFAULT_T_VALUES = (1, 4, 16, 64, 256)
DEFAULT_P_VALUES = (100, 1000, 10000)
METHODS = ("forum", "moml_exact", "moml_unrolled")
MIN_TIMED = 5


@frozen
class ComplexityRow:
    method: str
    T: int
    p: int
    mean_time_s: float
    std_time_s: float
    peak_workspace_floats: int
    timed_iterations: int


@frozen
class ComplexityReport:
    rows: Tuple[ComplexityRow, ...] = field(converter=tuple)
    time_slopes: Dict[Tuple[str, int], float]
    memory_slopes: Dict[Tuple[str, int], float]

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "method": r.method,
                    "T": r.T,
                    "p": r.p,
                    "mean_time_s": r.mean_time_s,
                    "std_time_s": r.std_time_s,
                    "peak_workspace_floats": r.peak_workspace_floats,
                    "timed_iterations": r.timed_iterations,
                }
                for r in self.rows
            ]
        )

    def cells(self, method: str, p: int) -> List[ComplexityRow]:
        return sorted((r for r in self.rows if r.method == method and r.p == p), key=lambda r: r.T)

    def workspace_spread(self, method: str, p: int) -> float:
        """(max - min) / (value at the smallest T) of peak workspace across T."""
        cells = self.cells(method, p)
        values = np.array([c.peak_workspace_floats for c in cells], dtype=float)
        return float((values.max() - values.min()) / values[0])

    def slopes_dict(self) -> List[Dict[str, object]]:
        return [
            {"method": method, "p": p, "time_slope": self.time_slopes[(method, p)], "memory_slope": self.memory_slopes[(method, p)]}
            for method, p in sorted(self.time_slopes)
        ]


def _time_iteration(
    method: str,
    problem: ProblemOracle,
    z: DecisionPoint,
    lam: SimplexWeights,
    k: int,
    forum_config: ForumConfig,
    moml_config: Optional[MomlConfig],
    ws: Workspace,
) -> Tuple[DecisionPoint, SimplexWeights, float]:
    if method == "forum":
        z_next, lam, record = forum_step(problem, z, lam, k, forum_config, workspace=ws, with_metrics=False)
        return z_next, lam, record.wall_time_seconds
    ws.reset()
    started = time.perf_counter()
    step = moml_step(problem, z.alpha, moml_config.mode, moml_config, omega_init=z.omega, workspace=ws)
    elapsed = time.perf_counter() - started
    return DecisionPoint(alpha=step.alpha, omega=step.omega), lam, elapsed


def measure_cell(
    method: str,
    problem: ProblemOracle,
    T: int,
    mu: float = 0.01,
    eta: float = 0.05,
    rho: float = 0.5,
    warmup: int = 2,
    timed: int = MIN_TIMED,
    seed: int = 0,
) -> ComplexityRow:
    """Time ``timed`` UL iterations after ``warmup`` untimed ones from z = 0."""
    if timed < MIN_TIMED:
        raise ConfigurationError(f"need at least {MIN_TIMED} timed iterations, got {timed}", field="timed")
    if method not in METHODS:
        raise ConfigurationError(f"unknown method '{method}'", field="methods")
    dims = problem.dims
    forum_config = ForumConfig(K=warmup + timed, T=T, mu=mu, eta=eta, rho=rho, seed=seed)
    moml_config = None
    if method != "forum":
        mode = MomlMode.EXACT if method == "moml_exact" else MomlMode.UNROLLED
        moml_config = MomlConfig(K=warmup + timed, mu=mu, mode=mode, T=T, eta=eta, seed=seed)

    z = DecisionPoint(alpha=np.zeros(dims.n), omega=np.zeros(dims.p))
    lam = SimplexWeights.uniform(dims.m)
    ws = Workspace()
    times, peaks = [], []
    for k in range(warmup + timed):
        z, lam, elapsed = _time_iteration(method, problem, z, lam, k, forum_config, moml_config, ws)
        if k >= warmup:
            times.append(elapsed)
            peaks.append(ws.peak)
    return ComplexityRow(
        method=method,
        T=T,
        p=dims.p,
        mean_time_s=float(np.mean(times)),
        std_time_s=float(np.std(times)),
        peak_workspace_floats=int(max(peaks)),
        timed_iterations=timed,
    )


def benchmark_complexity(
    T_values: Sequence[int] = DEFAULT_T_VALUES,
    p_values: Sequence[int] = DEFAULT_P_VALUES,
    methods: Sequence[str] = ("forum", "moml_unrolled"),
    n: int = 10,
    m: int = 2,
    seed: int = 0,
    mu: float = 0.01,
    eta: float = 0.05,
    rho: float = 0.5,
    warmup: int = 2,
    timed: int = MIN_TIMED,
) -> ComplexityReport:
    """Measure every (method, p, T) cell and fit least-squares slopes of time and memory in T."""
    rows: List[ComplexityRow] = []
    for p in p_values:
        problem = random_quadratic(seed, n, p, m)
        for method in methods:
            for T in T_values:
                row = measure_cell(method, problem, T, mu=mu, eta=eta, rho=rho, warmup=warmup, timed=timed, seed=seed)
                logger.info(
                    f"{method} p={p} T={T}: {row.mean_time_s * 1e3:.3f} ms/iter, "
                    f"peak workspace {row.peak_workspace_floats} floats"
                )
                rows.append(row)

    time_slopes: Dict[Tuple[str, int], float] = {}
    memory_slopes: Dict[Tuple[str, int], float] = {}
    for p in p_values:
        for method in methods:
            cells = sorted((r for r in rows if r.method == method and r.p == p), key=lambda r: r.T)
            Ts = [c.T for c in cells]
            if len(set(Ts)) < 2:
                time_slopes[(method, p)] = 0.0
                memory_slopes[(method, p)] = 0.0
                continue
            time_slopes[(method, p)] = float(linregress(Ts, [c.mean_time_s for c in cells]).slope)
            memory_slopes[(method, p)] = float(linregress(Ts, [c.peak_workspace_floats for c in cells]).slope)
    return ComplexityReport(rows=rows, time_slopes=time_slopes, memory_slopes=memory_slopes)
