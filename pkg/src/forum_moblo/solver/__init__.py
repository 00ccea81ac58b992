from forum_moblo.solver.direction import (
    DirectionSolution,
    DualQPResult,
    MGDAResult,
    assemble_direction,
    build_gram,
    compute_nu,
    mgda_direction,
    momentum_update,
    project_simplex,
    solve_dual_qp,
)
from forum_moblo.solver.driver import (
    ForumRun,
    IterateRecord,
    StopVerdict,
    forum_step,
    kkt_residual,
    run_forum,
    stopping_check,
)
from forum_moblo.solver.lower_level import (
    ConstraintEval,
    constraint_eval,
    exact_constraint,
    error_bound_check,
    solve_ll,
)

__all__ = [
    "DirectionSolution",
    "DualQPResult",
    "MGDAResult",
    "assemble_direction",
    "build_gram",
    "compute_nu",
    "mgda_direction",
    "momentum_update",
    "project_simplex",
    "solve_dual_qp",
    "ForumRun",
    "IterateRecord",
    "StopVerdict",
    "forum_step",
    "kkt_residual",
    "run_forum",
    "stopping_check",
    "ConstraintEval",
    "constraint_eval",
    "exact_constraint",
    "error_bound_check",
    "solve_ll",
]
