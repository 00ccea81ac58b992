from typing import Any, Optional

import numpy as np
from attrs import field, frozen


def as_vector(value: Any) -> np.ndarray:
    """Copy ``value`` into a read-only 1-D float64 array."""
    arr = np.array(value, dtype=np.float64).reshape(-1)
    arr.setflags(write=False)
    return arr


def is_finite(arr: np.ndarray) -> bool:
    return bool(np.all(np.isfinite(arr)))


def _finite(instance, attribute, value):
    if not is_finite(value):
        raise ValueError(f"{attribute.name} contains non-finite entries")


@frozen(eq=False)
class DecisionPoint:
    """The joint variable z = (alpha, omega) of a bi-level problem."""

    alpha: np.ndarray = field(converter=as_vector, validator=_finite)
    omega: np.ndarray = field(converter=as_vector, validator=_finite)

    @property
    def n(self) -> int:
        return int(self.alpha.shape[0])

    @property
    def p(self) -> int:
        return int(self.omega.shape[0])

    @property
    def size(self) -> int:
        return self.n + self.p

    def flat(self) -> np.ndarray:
        """Concatenated view (alpha, omega) as a fresh writable array."""
        return np.concatenate([self.alpha, self.omega])

    @classmethod
    def from_flat(cls, vector: np.ndarray, n: int) -> "DecisionPoint":
        vector = np.asarray(vector, dtype=np.float64).reshape(-1)
        return cls(alpha=vector[:n], omega=vector[n:])

    def with_omega(self, omega: np.ndarray) -> "DecisionPoint":
        return DecisionPoint(alpha=self.alpha, omega=omega)

    def moved(
        self,
        direction: np.ndarray,
        mu: float,
        mu_omega: Optional[float] = None,
    ) -> "DecisionPoint":
        """
        Return z + mu * d, or (alpha + mu * d_alpha, omega + mu_omega * d_omega)
        when a separate omega step is given. Raises ValueError on non-finite output.
        """
        mu_omega = mu if mu_omega is None else mu_omega
        return DecisionPoint(
            alpha=self.alpha + mu * direction[: self.n],
            omega=self.omega + mu_omega * direction[self.n :],
        )

    def __repr__(self) -> str:
        return f"<DecisionPoint(n={self.n}, p={self.p}, alpha={self.alpha}, omega={self.omega})>"
