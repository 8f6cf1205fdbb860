"""Process-wide operation counters.

Used to verify variant separation: a run of the outline-only variant must
finish with the knowledge-graph counter untouched.
"""

from __future__ import annotations

from collections import Counter

__all__ = ["KG_OPS", "OpCounter"]


class OpCounter:
    def __init__(self) -> None:
        self._counts: Counter[str] = Counter()

    def bump(self, name: str) -> None:
        self._counts[name] += 1

    def total(self) -> int:
        return sum(self._counts.values())

    def counts(self) -> dict[str, int]:
        return dict(self._counts)

    def reset(self) -> None:
        self._counts.clear()


KG_OPS = OpCounter()
