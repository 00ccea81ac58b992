"""
Solver configuration value types.

These are plain attrs classes so the kernel stays independent of the
harness's pydantic models; ``ExperimentConfig.to_forum_config`` converts.
"""

from typing import Optional, Tuple

from attrs import field, frozen
from attrs.validators import and_, ge, gt, instance_of, le, optional

from forum_moblo.shared.errors import ConfigurationError

SEED_LIMIT = 1 << 64


@frozen
class QPConfig:
    """Settings for the simplex-constrained direction subproblem."""

    max_iters: int = field(default=1000, validator=[instance_of(int), ge(1)])
    tolerance: float = field(default=1e-10, validator=ge(0.0))
    grad_floor: float = field(default=1e-12, validator=ge(0.0))
    polish: bool = field(default=True, validator=instance_of(bool))


@frozen
class StoppingTolerances:
    """Optional early exit; the default run uses the full iteration budget."""

    tol: float = field(default=1e-6, validator=ge(0.0))
    stall_tol: float = field(default=1e-12, validator=ge(0.0))
    stall_window: int = field(default=50, validator=[instance_of(int), ge(1)])


def _to_pair(value) -> Optional[Tuple[float, float]]:
    if value is None:
        return None
    mu_alpha, mu_omega = value
    return float(mu_alpha), float(mu_omega)


def _check_block_steps(instance, attribute, value):
    if value is None:
        return
    mu_alpha, mu_omega = value
    if mu_alpha < 0 or mu_omega < 0 or (mu_alpha == 0 and mu_omega == 0):
        raise ConfigurationError(
            f"block steps must be >= 0 with at least one positive, got {value}",
            field=attribute.name,
        )


def _check_seed(instance, attribute, value):
    if not 0 <= value < SEED_LIMIT:
        raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {value}", field="seed")


@frozen
class ForumConfig:
    K: int = field(validator=[instance_of(int), ge(0)])
    T: int = field(validator=[instance_of(int), ge(0)])
    mu: float = field(validator=gt(0.0))
    eta: float = field(validator=gt(0.0))
    rho: float = field(default=0.5, validator=ge(0.0))
    beta_exponent: float = field(default=0.75, validator=and_(gt(0.0), le(1.0)))
    warm_start: bool = field(default=True)
    per_block_steps: Optional[Tuple[float, float]] = field(
        default=None, converter=_to_pair, validator=_check_block_steps
    )
    seed: int = field(default=0, validator=[instance_of(int), _check_seed])
    qp: QPConfig = field(factory=QPConfig)
    metric_stride: int = field(default=1, validator=[instance_of(int), ge(1)])
    metric_ll_factor: int = field(default=10, validator=[instance_of(int), ge(1)])
    stopping: Optional[StoppingTolerances] = field(
        default=None, validator=optional(instance_of(StoppingTolerances))
    )

    def step_sizes(self) -> Tuple[float, float]:
        """(mu_alpha, mu_omega); both equal mu unless per-block steps are set."""
        if self.per_block_steps is None:
            return self.mu, self.mu
        return self.per_block_steps

    @property
    def metric_ll_steps(self) -> int:
        return self.metric_ll_factor * max(self.T, 1)
