from forum_moblo.baselines.moml import (
    Hypergradients,
    MomlConfig,
    MomlMode,
    MomlRun,
    MomlStep,
    exact_hypergradients,
    moml_step,
    run_moml,
    unrolled_hypergradients,
)

__all__ = [
    "Hypergradients",
    "MomlConfig",
    "MomlMode",
    "MomlRun",
    "MomlStep",
    "exact_hypergradients",
    "moml_step",
    "run_moml",
    "unrolled_hypergradients",
]
