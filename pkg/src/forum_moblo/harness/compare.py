"""Side-by-side comparison of methods on one problem and initialization."""

import logging
from typing import List, Optional, Sequence, Union

import pandas as pd

from forum_moblo.harness.experiment import (
    ExperimentConfig,
    build_problem,
    check_capabilities,
    execute_method,
    initial_points,
)
from forum_moblo.shared.errors import ConfigurationError

logger = logging.getLogger(__name__)

NOT_REACHED = "not reached"

COMPARISON_COLUMNS = (
    "label",
    "method",
    "final_optimality_gap",
    "final_kkt_residual",
    "final_q",
    "iterations_to_threshold",
    "total_wall_time_s",
)

_RECORD_FIELDS = {"optimality_gap": "optimality_gap", "kkt_residual": "kkt_residual", "q_exact": "q_exact"}


def expand_compare_configs(config: ExperimentConfig) -> List[ExperimentConfig]:
    """One ExperimentConfig per entry of the document's ``compare.methods``."""
    if config.compare is None:
        raise ConfigurationError("missing compare section", field="compare")
    configs = []
    for j, entry in enumerate(config.compare.methods):
        update = {"method": entry.method, "name": entry.label or f"{entry.method}_{j}", "compare": None}
        if entry.forum is not None:
            update["forum"] = entry.forum
        if entry.moml is not None:
            update["moml"] = entry.moml
        configs.append(config.model_copy(update=update))
    return configs


def _check_shared_setup(configs: Sequence[ExperimentConfig]) -> None:
    first = configs[0]
    for other in configs[1:]:
        if other.problem != first.problem:
            raise ConfigurationError(
                f"'{other.name}' uses a different problem than '{first.name}'", field="problem"
            )
        if other.initializations != first.initializations:
            raise ConfigurationError(
                f"'{other.name}' uses a different initialization than '{first.name}'", field="initializations"
            )


def _iterations_to_threshold(trace, metric: str, threshold: float) -> Union[int, str]:
    attribute = _RECORD_FIELDS[metric]
    for record in trace:
        value = getattr(record, attribute)
        if value is not None and value < threshold:
            return record.k
    return NOT_REACHED


def compare_methods(
    configs: Sequence[ExperimentConfig],
    threshold: float = 1e-2,
    metric: str = "optimality_gap",
    seed: Optional[int] = None,
) -> pd.DataFrame:
    """
    Run each config from the first initialization under the first seed and
    return one row per method. A threshold never crossed within K gives the
    "not reached" sentinel.
    """
    if not configs:
        raise ConfigurationError("need at least one config", field="compare")
    if metric not in _RECORD_FIELDS:
        raise ConfigurationError(f"unknown metric '{metric}'", field="metric")
    _check_shared_setup(configs)
    for config in configs:
        check_capabilities(config)

    run_seed = seed if seed is not None else configs[0].resolved_seeds()[0]
    problem, _ = build_problem(configs[0].problem, run_seed)
    _, z_0 = initial_points(configs[0], problem, run_seed)[0]

    rows = []
    for config in configs:
        outcome = execute_method(config, problem, z_0, run_seed)
        final = outcome.final_metrics
        rows.append(
            {
                "label": config.name,
                "method": config.method,
                "final_optimality_gap": final["optimality_gap"],
                "final_kkt_residual": final["kkt_residual"],
                "final_q": final["q"],
                "iterations_to_threshold": _iterations_to_threshold(outcome.trace, metric, threshold),
                "total_wall_time_s": float(sum(r.wall_time_seconds for r in outcome.trace)),
            }
        )
        logger.info(f"Compared {config.name}: {rows[-1]['iterations_to_threshold']} iterations to {metric} < {threshold:g}")
    return pd.DataFrame(rows, columns=list(COMPARISON_COLUMNS))
