"""Event-time window assignment (half-open windows ``[start, start + size)``)."""

from __future__ import annotations

from dataclasses import dataclass

from scalebench.errors import SpecMismatch


@dataclass(frozen=True)
class WindowSpec:
    size: int
    advance: int

    def __post_init__(self):
        if not (self.size >= self.advance >= 1):
            raise ValueError(f"need size >= advance >= 1 ms, got size={self.size} advance={self.advance}")

    @classmethod
    def tumbling(cls, size: int) -> "WindowSpec":
        return cls(size, size)

    @property
    def is_tumbling(self) -> bool:
        return self.advance == self.size

    @property
    def overlap(self) -> int:
        """Number of windows a record belongs to (away from time zero)."""
        return -(-self.size // self.advance)


def assign_tumbling(event_time: int, spec: WindowSpec) -> int:
    if not spec.is_tumbling:
        raise SpecMismatch(f"{spec} is not tumbling")
    return event_time // spec.size * spec.size


def assign_hopping(event_time: int, spec: WindowSpec) -> list[int]:
    """Starts of all windows containing ``event_time``, ascending."""
    last = event_time // spec.advance * spec.advance
    first = ((event_time - spec.size) // spec.advance + 1) * spec.advance
    return list(range(max(first, 0), last + 1, spec.advance))
