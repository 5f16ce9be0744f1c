"""Axial hex coordinate algebra, movement geometry, pathfinding and visibility.

Cells are axial (q, r) pairs on a rectangular window 0 <= q < cols, 0 <= r < rows.
Headings are integers 0..5 in 60-degree counterclockwise increments; heading 0
points along +q. All functions here are pure; map passability is supplied by the
map object (duck-typed: ``in_bounds``, ``traversable``, ``step_allowed``).
"""

from __future__ import annotations

import math
from collections import deque
from typing import Callable, Iterable, NamedTuple, Optional


class HexCoord(NamedTuple):
    q: int
    r: int


class Pose(NamedTuple):
    cell: HexCoord
    heading: int  # 0..5


# Neighbor offsets indexed by heading. Heading 0 is +q; successive entries
# rotate 60 degrees counterclockwise.
DIRECTIONS: tuple[tuple[int, int], ...] = (
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, 0),
    (-1, 1),
    (0, 1),
)

LEFT = "left"
RIGHT = "right"

# Planar embedding used for angles: +q at 0 degrees, +r at -60 degrees.
_SQRT3_2 = math.sqrt(3.0) / 2.0


def neighbor(cell: HexCoord, heading: int) -> HexCoord:
    dq, dr = DIRECTIONS[heading % 6]
    return HexCoord(cell.q + dq, cell.r + dr)


def opposite(heading: int) -> int:
    return (heading + 3) % 6


def rotate(heading: int, turn: str) -> int:
    """Turn in place: 'left' is counterclockwise (+1 mod 6), 'right' clockwise."""
    if turn == LEFT:
        return (heading + 1) % 6
    if turn == RIGHT:
        return (heading - 1) % 6
    raise ValueError(f"unknown turn {turn!r}")


def distance(a: HexCoord, b: HexCoord) -> int:
    dq = a.q - b.q
    dr = a.r - b.r
    return (abs(dq) + abs(dr) + abs(dq + dr)) // 2


def to_cartesian(cell: HexCoord) -> tuple[float, float]:
    """Center of a cell in the planar embedding (unit edge-to-center spacing)."""
    return (cell.q + cell.r / 2.0, -_SQRT3_2 * cell.r)


def heading_vector(heading: int) -> tuple[float, float]:
    angle = math.radians(60.0 * (heading % 6))
    return (math.cos(angle), math.sin(angle))


def bfs_path(
    start: HexCoord,
    goal: HexCoord,
    step_ok: Callable[[HexCoord, HexCoord], bool],
) -> Optional[list[HexCoord]]:
    """Generic BFS over the hex neighbor relation.

    Expansion tries directions in index order 0..5, so ties between equal-length
    paths break toward the lowest direction index. Returns None when unreachable.
    """
    if start == goal:
        return [start]
    prev: dict[HexCoord, Optional[HexCoord]] = {start: None}
    frontier: deque[HexCoord] = deque([start])
    while frontier:
        cell = frontier.popleft()
        for h in range(6):
            nxt = neighbor(cell, h)
            if nxt in prev or not step_ok(cell, nxt):
                continue
            prev[nxt] = cell
            if nxt == goal:
                path = [nxt]
                back: Optional[HexCoord] = cell
                while back is not None:
                    path.append(back)
                    back = prev[back]
                path.reverse()
                return path
            frontier.append(nxt)
    return None


def shortest_path(
    game_map,
    start: HexCoord,
    goal: HexCoord,
    blocked: Iterable[HexCoord] = (),
) -> Optional[list[HexCoord]]:
    """Minimal traversable cell sequence from start to goal, or None.

    Respects the map's passability (water, props, elevation/ramp rules) plus any
    extra ``blocked`` cells (e.g. the other agent). Raises ValueError when either
    endpoint is out of bounds.
    """
    if not game_map.in_bounds(start) or not game_map.in_bounds(goal):
        raise ValueError(f"path endpoints out of bounds: {start} -> {goal}")
    blocked_set = frozenset(blocked)
    if goal in blocked_set or not game_map.traversable(goal):
        return None

    def step_ok(a: HexCoord, b: HexCoord) -> bool:
        return b not in blocked_set and game_map.step_allowed(a, b)

    return bfs_path(start, goal, step_ok)


def bfs_distances(
    game_map,
    start: HexCoord,
    blocked: Iterable[HexCoord] = (),
) -> dict[HexCoord, int]:
    """Step counts from start to every reachable cell under the map's rules."""
    blocked_set = frozenset(blocked)
    dist = {start: 0}
    frontier: deque[HexCoord] = deque([start])
    while frontier:
        cell = frontier.popleft()
        for h in range(6):
            nxt = neighbor(cell, h)
            if nxt in dist or nxt in blocked_set:
                continue
            if not game_map.step_allowed(cell, nxt):
                continue
            dist[nxt] = dist[cell] + 1
            frontier.append(nxt)
    return dist


def reachable_from(
    game_map,
    start: HexCoord,
    blocked: Iterable[HexCoord] = (),
) -> set[HexCoord]:
    """Connected component of start under the map's movement rules."""
    blocked_set = frozenset(blocked)
    seen = {start}
    frontier: deque[HexCoord] = deque([start])
    while frontier:
        cell = frontier.popleft()
        for h in range(6):
            nxt = neighbor(cell, h)
            if nxt in seen or nxt in blocked_set:
                continue
            if not game_map.step_allowed(cell, nxt):
                continue
            seen.add(nxt)
            frontier.append(nxt)
    return seen


def angle_from_heading(pose: Pose, cell: HexCoord) -> float:
    """Absolute angle in degrees between pose's facing and the bearing to cell."""
    px, py = to_cartesian(pose.cell)
    cx, cy = to_cartesian(cell)
    vx, vy = cx - px, cy - py
    hx, hy = heading_vector(pose.heading)
    dot = hx * vx + hy * vy
    cross = hx * vy - hy * vx
    return abs(math.degrees(math.atan2(cross, dot)))


def visible_set(game_map, pose: Pose, fov_degrees: float, fog_range: int) -> set[HexCoord]:
    """Cells inside the view cone: within fog_range hexes and half-FOV of facing.

    The agent's own cell is always included. No occlusion: terrain does not
    block sight, only distance and angle limit it.
    """
    out: set[HexCoord] = set()
    if game_map.in_bounds(pose.cell):
        out.add(pose.cell)
    if fog_range <= 0:
        return out
    half = fov_degrees / 2.0
    cq, cr = pose.cell
    for dr in range(-fog_range, fog_range + 1):
        for dq in range(-fog_range, fog_range + 1):
            cell = HexCoord(cq + dq, cr + dr)
            if cell == pose.cell or not game_map.in_bounds(cell):
                continue
            if distance(pose.cell, cell) > fog_range:
                continue
            if angle_from_heading(pose, cell) <= half + 1e-9:
                out.add(cell)
    return out
