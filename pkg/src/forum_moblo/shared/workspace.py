"""
Workspace accounting for solver-allocated numeric buffers.
Counts floats, not bytes or process RSS, so the same run reports the same
numbers on every platform.
"""

import logging
from contextlib import contextmanager
from typing import Generator, Optional

import numpy as np
from attrs import define, field

logger = logging.getLogger(__name__)


@define
class Workspace:
    """Tracks the number of floats currently held and the peak."""

    current: int = field(default=0)
    peak: int = field(default=0)

    def allocate(self, floats: int) -> None:
        """Register a buffer of ``floats`` entries."""
        if floats < 0:
            raise ValueError(f"cannot allocate a negative buffer ({floats})")
        self.current += int(floats)
        if self.current > self.peak:
            self.peak = self.current

    def release(self, floats: int) -> None:
        """Drop a previously registered buffer."""
        self.current -= int(floats)
        if self.current < 0:
            logger.debug(f"Workspace released more than allocated ({self.current})")
            self.current = 0

    def track(self, *arrays: np.ndarray) -> int:
        """Allocate the total size of ``arrays`` and return it."""
        total = sum(int(np.size(a)) for a in arrays)
        self.allocate(total)
        return total

    @contextmanager
    def buffer(self, floats: int) -> Generator[int, None, None]:
        """
        Scope a temporary buffer: allocated on entry, released on exit
        even when the body raises.
        """
        self.allocate(floats)
        try:
            yield floats
        finally:
            self.release(floats)

    def reset(self) -> None:
        """Forget everything; used between timed iterations."""
        self.current = 0
        self.peak = 0


def ensure_workspace(workspace: Optional[Workspace]) -> Workspace:
    """Return ``workspace`` or a throwaway counter."""
    return workspace if workspace is not None else Workspace()
