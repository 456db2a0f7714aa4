"""Container for a full set of learned (or hand-crafted) membership functions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .membership import Limits, Trapezoid


@dataclass
class Model:
    """Trapezoids and limits keyed by range id.

    ``levels`` lists every range the model is responsible for, including
    ranges that have not been trained; those are absent from
    ``trapezoids``.
    """

    trapezoids: dict[str, Trapezoid] = field(default_factory=dict)
    limits: dict[str, Limits] = field(default_factory=dict)
    levels: dict[str, int] = field(default_factory=dict)
    provenance: dict[str, str] = field(default_factory=dict)

    def __getitem__(self, range_id: str) -> Trapezoid:
        return self.trapezoids[range_id]

    def __contains__(self, range_id: str) -> bool:
        return range_id in self.trapezoids

    @property
    def untrained(self) -> list[str]:
        return [r for r in self.levels if r not in self.trapezoids]

    @property
    def is_partial(self) -> bool:
        return bool(self.untrained)

    def limits_for(self, range_id: str) -> Limits:
        return self.limits.get(range_id, Limits())

    def copy(self) -> "Model":
        return Model(
            trapezoids=dict(self.trapezoids),
            limits=dict(self.limits),
            levels=dict(self.levels),
            provenance=dict(self.provenance),
        )

    @classmethod
    def from_params(cls, params: dict, levels: Optional[dict] = None) -> "Model":
        """Build a model from ``{range_id: (z1, n1, n2, z2)}``."""
        traps = {r: Trapezoid(*map(float, p)) for r, p in params.items()}
        return cls(trapezoids=traps, levels=dict(levels) if levels else {r: 1 for r in traps})
