import numpy as np
from attrs import field, frozen

from forum_moblo.shared.models.point import as_vector

NONNEGATIVE_TOL = 1e-12
SUM_TOL = 1e-10


def _on_simplex(instance, attribute, value):
    if value.shape[0] < 1:
        raise ValueError("simplex weights need at least one entry")
    if not np.all(np.isfinite(value)):
        raise ValueError("simplex weights contain non-finite entries")
    if np.min(value) < -NONNEGATIVE_TOL:
        raise ValueError(f"negative simplex weight {np.min(value)!r}")
    if abs(float(np.sum(value)) - 1.0) > SUM_TOL:
        raise ValueError(f"simplex weights sum to {float(np.sum(value))!r}, expected 1")


@frozen(eq=False)
class SimplexWeights:
    """A point lambda on the probability simplex."""

    values: np.ndarray = field(converter=as_vector, validator=_on_simplex)

    @property
    def m(self) -> int:
        return int(self.values.shape[0])

    @classmethod
    def uniform(cls, m: int) -> "SimplexWeights":
        return cls(np.full(m, 1.0 / m))

    def __len__(self) -> int:
        return self.m

    def __repr__(self) -> str:
        return f"<SimplexWeights({np.array2string(self.values, precision=6)})>"
