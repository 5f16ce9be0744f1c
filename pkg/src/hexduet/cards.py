"""Cards and the set-validity rule.

A card shows 1-3 copies of a shape in a color. A completed set is exactly three
selected cards whose colors, shapes and counts are pairwise distinct. The
inventories below are the defaults; games may be configured with different ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from .hexgrid import HexCoord

DEFAULT_COLORS: tuple[str, ...] = ("black", "blue", "green", "orange", "pink", "red")
DEFAULT_SHAPES: tuple[str, ...] = ("plus", "torch", "diamond", "heart", "star", "triangle")
DEFAULT_COUNTS: tuple[int, ...] = (1, 2, 3)


@dataclass
class Card:
    id: int
    cell: HexCoord
    color: str
    shape: str
    count: int
    selected: bool = False

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "cell": [self.cell.q, self.cell.r],
            "color": self.color,
            "shape": self.shape,
            "count": self.count,
            "selected": self.selected,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Card":
        return cls(
            id=d["id"],
            cell=HexCoord(d["cell"][0], d["cell"][1]),
            color=d["color"],
            shape=d["shape"],
            count=d["count"],
            selected=d["selected"],
        )


def is_valid_set(cards: Iterable[Card]) -> bool:
    """True iff exactly three cards with pairwise-distinct color, shape, count."""
    cs = list(cards)
    if len(cs) != 3:
        return False
    return (
        len({c.color for c in cs}) == 3
        and len({c.shape for c in cs}) == 3
        and len({c.count for c in cs}) == 3
    )
