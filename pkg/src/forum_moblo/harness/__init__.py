from forum_moblo.harness.compare import NOT_REACHED, compare_methods, expand_compare_configs
from forum_moblo.harness.complexity import ComplexityReport, ComplexityRow, benchmark_complexity
from forum_moblo.harness.experiment import (
    ExperimentConfig,
    load_experiment_config,
    parse_experiment_config,
    run_experiment,
)

__all__ = [
    "NOT_REACHED",
    "compare_methods",
    "expand_compare_configs",
    "ComplexityReport",
    "ComplexityRow",
    "benchmark_complexity",
    "ExperimentConfig",
    "load_experiment_config",
    "parse_experiment_config",
    "run_experiment",
]
