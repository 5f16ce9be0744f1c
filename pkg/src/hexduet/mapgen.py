"""Seeded procedural map generation, validation, and a pre-generated map pool.

Maps are rectangular axial-hex grids with five terrain kinds, two elevation
levels, landmark props (houses cluster into towns, paths connect them), card
placements and two spawn cells. Generation is a pure function of GenConfig:
the same config (including seed) always yields a byte-identical map.
"""

from __future__ import annotations

import random
import threading
from dataclasses import dataclass, field, replace

from .cards import DEFAULT_COLORS, DEFAULT_COUNTS, DEFAULT_SHAPES, Card
from .hexgrid import DIRECTIONS, HexCoord, bfs_path, neighbor, reachable_from

GRASS = "grass"
PATH = "path"
WATER = "water"
MOUNTAIN = "mountain"
RAMP = "ramp"

TERRAIN_KINDS = (GRASS, PATH, WATER, MOUNTAIN, RAMP)
_TERRAIN_CODE = {GRASS: "g", PATH: "p", WATER: "w", MOUNTAIN: "m", RAMP: "r"}
_CODE_TERRAIN = {v: k for k, v in _TERRAIN_CODE.items()}

HOUSE = "house"
TREE = "tree"
STREETLIGHT = "streetlight"
ROCK = "rock"

ROOF_COLORS = ("red", "blue", "green", "gray", "brown")


class MapError(Exception):
    pass


@dataclass
class Prop:
    kind: str
    cell: HexCoord
    variant: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "cell": [self.cell.q, self.cell.r], "variant": self.variant}

    @classmethod
    def from_dict(cls, d: dict) -> "Prop":
        return cls(kind=d["kind"], cell=HexCoord(d["cell"][0], d["cell"][1]), variant=dict(d["variant"]))


@dataclass
class GameMap:
    rows: int
    cols: int
    terrain: list[list[str]]  # [r][q]
    elevation: list[list[int]]  # [r][q], 0 or 1
    props: list[Prop]
    initial_cards: list[Card]
    leader_spawn: HexCoord
    follower_spawn: HexCoord
    seed: int  # effective seed the map was actually generated from

    def __post_init__(self) -> None:
        self._prop_cells = {p.cell: p for p in self.props}
        self._tiles_cache: list[dict] | None = None

    def in_bounds(self, cell: HexCoord) -> bool:
        return 0 <= cell.q < self.cols and 0 <= cell.r < self.rows

    def terrain_at(self, cell: HexCoord) -> str:
        return self.terrain[cell.r][cell.q]

    def elevation_at(self, cell: HexCoord) -> int:
        return self.elevation[cell.r][cell.q]

    def prop_at(self, cell: HexCoord) -> Prop | None:
        return self._prop_cells.get(cell)

    def traversable(self, cell: HexCoord) -> bool:
        return (
            self.in_bounds(cell)
            and self.terrain_at(cell) != WATER
            and cell not in self._prop_cells
        )

    def step_allowed(self, a: HexCoord, b: HexCoord) -> bool:
        """One movement step a->b: b traversable, elevation change only via ramps."""
        if not self.traversable(b):
            return False
        if self.elevation_at(a) == self.elevation_at(b):
            return True
        return self.terrain_at(a) == RAMP or self.terrain_at(b) == RAMP

    def all_cells(self):
        for r in range(self.rows):
            for q in range(self.cols):
                yield HexCoord(q, r)

    def traversable_cells(self) -> list[HexCoord]:
        return [c for c in self.all_cells() if self.traversable(c)]

    def tiles_as_dicts(self) -> list[dict]:
        """Per-cell tile records, cached; the map is immutable once built."""
        if self._tiles_cache is None:
            self._tiles_cache = [
                {"cell": [c.q, c.r], "terrain": self.terrain_at(c), "elevation": self.elevation_at(c)}
                for c in self.all_cells()
            ]
        return self._tiles_cache

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "terrain": ["".join(_TERRAIN_CODE[t] for t in row) for row in self.terrain],
            "elevation": ["".join(str(e) for e in row) for row in self.elevation],
            "props": [p.to_dict() for p in sorted(self.props, key=lambda p: (p.cell.r, p.cell.q))],
            "cards": [c.to_dict() for c in sorted(self.initial_cards, key=lambda c: c.id)],
            "leader_spawn": [self.leader_spawn.q, self.leader_spawn.r],
            "follower_spawn": [self.follower_spawn.q, self.follower_spawn.r],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GameMap":
        return cls(
            rows=d["rows"],
            cols=d["cols"],
            terrain=[[_CODE_TERRAIN[ch] for ch in row] for row in d["terrain"]],
            elevation=[[int(ch) for ch in row] for row in d["elevation"]],
            props=[Prop.from_dict(p) for p in d["props"]],
            initial_cards=[Card.from_dict(c) for c in d["cards"]],
            leader_spawn=HexCoord(*d["leader_spawn"]),
            follower_spawn=HexCoord(*d["follower_spawn"]),
            seed=d["seed"],
        )


@dataclass
class GenConfig:
    rows: int = 25
    cols: int = 25
    town_count: int = 3
    town_size_range: tuple[int, int] = (3, 6)
    town_radius: int = 2
    lake_count: int = 3
    lake_size_range: tuple[int, int] = (5, 12)
    mountain_count: int = 2
    mountain_size_range: tuple[int, int] = (4, 9)
    card_count: int = 21
    tree_density: float = 0.04
    rock_density: float = 0.02
    streetlight_density: float = 0.08
    colors: tuple[str, ...] = DEFAULT_COLORS
    shapes: tuple[str, ...] = DEFAULT_SHAPES
    counts: tuple[int, ...] = DEFAULT_COUNTS
    seed: int = 0
    max_attempts: int = 32

    def validate(self) -> None:
        cells = self.rows * self.cols
        if self.rows < 5 or self.cols < 5:
            raise MapError("map must be at least 5x5")
        worst_blocked = (
            sum(r * 6 for r in [self.lake_size_range[1]] * self.lake_count) // 6
            + self.mountain_size_range[1] * self.mountain_count
            + self.town_count * self.town_size_range[1]
        )
        needed = self.card_count + 2
        if needed > cells - worst_blocked - int(cells * (self.tree_density + self.rock_density)):
            raise MapError(
                f"infeasible config: {needed} card/spawn cells cannot fit "
                f"in a {self.rows}x{self.cols} map with the requested features"
            )

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "town_count": self.town_count,
            "town_size_range": list(self.town_size_range),
            "town_radius": self.town_radius,
            "lake_count": self.lake_count,
            "lake_size_range": list(self.lake_size_range),
            "mountain_count": self.mountain_count,
            "mountain_size_range": list(self.mountain_size_range),
            "card_count": self.card_count,
            "tree_density": self.tree_density,
            "rock_density": self.rock_density,
            "streetlight_density": self.streetlight_density,
            "colors": list(self.colors),
            "shapes": list(self.shapes),
            "counts": list(self.counts),
            "seed": self.seed,
            "max_attempts": self.max_attempts,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        kw = dict(d)
        for key in ("town_size_range", "lake_size_range", "mountain_size_range", "colors", "shapes", "counts"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return cls(**kw)


@dataclass
class ValidationReport:
    ok: bool
    failures: list[str]


def check_world(game_map: GameMap, card_cells: list[HexCoord], pose_cells: list[HexCoord],
                spawn_card_overlap_ok: bool = False) -> list[str]:
    """Structural checks shared by map validation and scenario validation.

    Verifies exclusivity, traversability and single-component connectivity of
    the given card cells and agent/spawn cells, plus the ramp adjacency rule.
    Scenario snapshots may legitimately have an agent standing on a card it
    toggled; spawn_card_overlap_ok=True permits that one overlap.
    """
    failures: list[str] = []
    for i, cell in enumerate(pose_cells):
        if not game_map.in_bounds(cell):
            failures.append(f"spawn {i} out of bounds at {tuple(cell)}")
        elif game_map.terrain_at(cell) == WATER:
            failures.append(f"spawn {i} on water at {tuple(cell)}")
        elif not game_map.traversable(cell):
            failures.append(f"spawn {i} not traversable at {tuple(cell)}")
    if len(set(pose_cells)) != len(pose_cells):
        failures.append("spawn cells not distinct")

    seen_cells: set[HexCoord] = set()
    for cell in card_cells:
        if cell in seen_cells:
            failures.append(f"two cards share cell {tuple(cell)}")
        seen_cells.add(cell)
        if not game_map.in_bounds(cell):
            failures.append(f"card out of bounds at {tuple(cell)}")
        elif game_map.prop_at(cell) is not None:
            failures.append(f"card on a prop cell at {tuple(cell)}")
        elif not game_map.traversable(cell):
            failures.append(f"card not traversable at {tuple(cell)}")
        elif cell in pose_cells and not spawn_card_overlap_ok:
            failures.append(f"card on a spawn cell at {tuple(cell)}")

    if not failures:
        component = reachable_from(game_map, pose_cells[0])
        for cell in pose_cells[1:]:
            if cell not in component:
                failures.append(f"spawn at {tuple(cell)} unreachable from first spawn")
        for cell in card_cells:
            if cell not in component:
                failures.append(f"unreachable card at {tuple(cell)}")

    for cell in game_map.all_cells():
        if game_map.terrain_at(cell) != RAMP:
            continue
        kinds = [game_map.terrain_at(n) for h in range(6) if game_map.in_bounds(n := neighbor(cell, h))]
        if MOUNTAIN not in kinds:
            failures.append(f"ramp at {tuple(cell)} has no mountain neighbor")
        if not any(k in (GRASS, PATH) for k in kinds):
            failures.append(f"ramp at {tuple(cell)} has no ground neighbor")

    for prop in game_map.props:
        if not game_map.in_bounds(prop.cell):
            failures.append(f"prop out of bounds at {tuple(prop.cell)}")
        elif game_map.terrain_at(prop.cell) == WATER:
            failures.append(f"prop on water at {tuple(prop.cell)}")
    prop_cells = [p.cell for p in game_map.props]
    if len(set(prop_cells)) != len(prop_cells):
        failures.append("two props share a cell")

    return failures


def validate_map(game_map: GameMap, expected_card_count: int | None = None,
                 spawn_card_overlap_ok: bool = False) -> ValidationReport:
    """Check spawn/card connectivity, cell exclusivity and ramp adjacency."""
    failures = check_world(
        game_map,
        [c.cell for c in game_map.initial_cards],
        [game_map.leader_spawn, game_map.follower_spawn],
        spawn_card_overlap_ok=spawn_card_overlap_ok,
    )
    for card in game_map.initial_cards:
        if card.count < 1:
            failures.append(f"card {card.id} has non-positive count")
    if expected_card_count is not None and len(game_map.initial_cards) != expected_card_count:
        failures.append(
            f"card count {len(game_map.initial_cards)} != configured {expected_card_count}"
        )
    return ValidationReport(ok=not failures, failures=failures)


def _grow_blob(rng: random.Random, grid: list[list[str]], rows: int, cols: int, size: int,
               allowed: set[str]) -> list[HexCoord]:
    """Seeded random flood expansion: grow a contiguous blob over allowed terrain."""
    candidates = [
        HexCoord(q, r) for r in range(rows) for q in range(cols) if grid[r][q] in allowed
    ]
    if not candidates:
        return []
    blob = [candidates[rng.randrange(len(candidates))]]
    cells = set(blob)
    for _ in range(size - 1):
        frontier = sorted(
            {
                n
                for c in cells
                for h in range(6)
                if (n := neighbor(c, h)) not in cells
                and 0 <= n.q < cols
                and 0 <= n.r < rows
                and grid[n.r][n.q] in allowed
            }
        )
        if not frontier:
            break
        pick = frontier[rng.randrange(len(frontier))]
        cells.add(pick)
        blob.append(pick)
    return blob


def _gen_once(config: GenConfig, seed: int) -> GameMap | None:
    rng = random.Random(seed)
    rows, cols = config.rows, config.cols
    terrain = [[GRASS] * cols for _ in range(rows)]
    elevation = [[0] * cols for _ in range(rows)]

    for _ in range(config.lake_count):
        size = rng.randint(*config.lake_size_range)
        for cell in _grow_blob(rng, terrain, rows, cols, size, {GRASS}):
            terrain[cell.r][cell.q] = WATER

    ramp_anchors: list[HexCoord] = []
    for _ in range(config.mountain_count):
        size = rng.randint(*config.mountain_size_range)
        blob = _grow_blob(rng, terrain, rows, cols, size, {GRASS})
        if not blob:
            return None
        for cell in blob:
            terrain[cell.r][cell.q] = MOUNTAIN
            elevation[cell.r][cell.q] = 1
        # Ramps sit on ground cells that border the blob and keep a ground neighbor.
        border = sorted(
            {
                n
                for c in blob
                for h in range(6)
                if 0 <= (n := neighbor(c, h)).q < cols and 0 <= n.r < rows and terrain[n.r][n.q] == GRASS
            }
        )
        border = [
            c
            for c in border
            if any(
                0 <= (g := neighbor(c, h)).q < cols and 0 <= g.r < rows and terrain[g.r][g.q] == GRASS
                for h in range(6)
            )
        ]
        if not border:
            return None
        for _ in range(rng.randint(1, 2)):
            ramp = border[rng.randrange(len(border))]
            terrain[ramp.r][ramp.q] = RAMP
            if ramp not in ramp_anchors:
                ramp_anchors.append(ramp)

    props: list[Prop] = []
    prop_cells: set[HexCoord] = set()
    town_centers: list[HexCoord] = []
    for _ in range(config.town_count):
        size = rng.randint(*config.town_size_range)
        spots = sorted(
            HexCoord(q, r)
            for r in range(rows)
            for q in range(cols)
            if terrain[r][q] == GRASS and HexCoord(q, r) not in prop_cells
        )
        if not spots:
            break
        center = spots[rng.randrange(len(spots))]
        town_centers.append(center)
        ring = sorted(
            c
            for c in spots
            if c != center and 1 <= _hexdist(center, c) <= config.town_radius
        )
        rng.shuffle(ring)
        for cell in ring[:size]:
            props.append(
                Prop(
                    HOUSE,
                    cell,
                    {"roof_color": ROOF_COLORS[rng.randrange(len(ROOF_COLORS))], "floors": rng.randint(1, 3)},
                )
            )
            prop_cells.add(cell)

    # Route paths between towns and mountain ramps over open land.
    anchors = town_centers + ramp_anchors[: config.mountain_count]
    for a, b in zip(anchors, anchors[1:]):
        route = _route(a, b, terrain, prop_cells, rows, cols, avoid_mountain=True)
        if route is None:
            route = _route(a, b, terrain, prop_cells, rows, cols, avoid_mountain=False)
        if route is None:
            return None
        for cell in route:
            if terrain[cell.r][cell.q] == GRASS:
                terrain[cell.r][cell.q] = PATH

    open_grass = sorted(
        HexCoord(q, r)
        for r in range(rows)
        for q in range(cols)
        if terrain[r][q] == GRASS and HexCoord(q, r) not in prop_cells
    )
    rng.shuffle(open_grass)
    n_trees = int(len(open_grass) * config.tree_density)
    n_rocks = int(len(open_grass) * config.rock_density)
    for cell in open_grass[:n_trees]:
        props.append(Prop(TREE, cell, {}))
        prop_cells.add(cell)
    for cell in open_grass[n_trees : n_trees + n_rocks]:
        props.append(Prop(ROCK, cell, {}))
        prop_cells.add(cell)
    path_adjacent = sorted(
        c
        for c in open_grass[n_trees + n_rocks :]
        if any(
            0 <= (n := neighbor(c, h)).q < cols and 0 <= n.r < rows and terrain[n.r][n.q] == PATH
            for h in range(6)
        )
    )
    for cell in path_adjacent[: int(len(path_adjacent) * config.streetlight_density)]:
        props.append(Prop(STREETLIGHT, cell, {}))
        prop_cells.add(cell)

    game_map = GameMap(
        rows=rows,
        cols=cols,
        terrain=terrain,
        elevation=elevation,
        props=props,
        initial_cards=[],
        leader_spawn=HexCoord(0, 0),
        follower_spawn=HexCoord(0, 0),
        seed=seed,
    )

    component = _largest_component(game_map)
    if len(component) < config.card_count + 2:
        return None
    placed = _place_cards_and_spawns(rng, game_map, component, config)
    if placed is None:
        return None
    spawns, cards = placed
    game_map.leader_spawn, game_map.follower_spawn = spawns
    game_map.initial_cards = cards
    return game_map


def _hexdist(a: HexCoord, b: HexCoord) -> int:
    dq = a.q - b.q
    dr = a.r - b.r
    return (abs(dq) + abs(dr) + abs(dq + dr)) // 2


def _route(a, b, terrain, prop_cells, rows, cols, avoid_mountain: bool):
    banned = {WATER, MOUNTAIN} if avoid_mountain else {WATER}

    def step_ok(frm: HexCoord, to: HexCoord) -> bool:
        return (
            0 <= to.q < cols
            and 0 <= to.r < rows
            and terrain[to.r][to.q] not in banned
            and to not in prop_cells
        )

    return bfs_path(a, b, step_ok)


def _largest_component(game_map: GameMap) -> list[HexCoord]:
    remaining = set(game_map.traversable_cells())
    best: set[HexCoord] = set()
    while remaining:
        start = min(remaining)
        comp = reachable_from(game_map, start) & remaining
        if len(comp) > len(best):
            best = comp
        remaining -= comp
    return sorted(best)


def _place_cards_and_spawns(rng, game_map, component, config):
    pool = list(component)
    if len(pool) < config.card_count + 2:
        return None
    leader = pool.pop(rng.randrange(len(pool)))
    follower = pool.pop(rng.randrange(len(pool)))
    cards = []
    for i in range(config.card_count):
        cell = pool.pop(rng.randrange(len(pool)))
        cards.append(
            Card(
                id=i + 1,
                cell=cell,
                color=config.colors[rng.randrange(len(config.colors))],
                shape=config.shapes[rng.randrange(len(config.shapes))],
                count=config.counts[rng.randrange(len(config.counts))],
            )
        )
    return (leader, follower), cards


def generate_map(config: GenConfig) -> GameMap:
    """Generate a validated map; deterministic for a given config.

    Failed attempts (blocked layouts, unreachable placements) retry with the
    next seed offset; the effective seed is recorded on the map so it stays
    reproducible from its own fields.
    """
    config.validate()
    for attempt in range(config.max_attempts):
        seed = config.seed + attempt
        game_map = _gen_once(config, seed)
        if game_map is None:
            continue
        rng = random.Random(seed ^ 0x5EED)
        for _ in range(5):  # repair: re-place cards/spawns before giving up on the seed
            if validate_map(game_map, config.card_count).ok:
                return game_map
            component = _largest_component(game_map)
            placed = _place_cards_and_spawns(rng, game_map, component, config)
            if placed is None:
                break
            (game_map.leader_spawn, game_map.follower_spawn), game_map.initial_cards = placed
    raise MapError(f"could not generate a valid map from seed {config.seed} in {config.max_attempts} attempts")


class MapPool:
    """Pre-generated maps handed to new game rooms.

    acquire() pops a ready map and only generates synchronously when the pool
    is empty; refill() tops it up and is meant to run off the request path.
    Thread-safe; seeds stride by 1000 so retry offsets never overlap.
    """

    SEED_STRIDE = 1000

    def __init__(self, config: GenConfig, base_seed: int = 0):
        self._config = config
        self._base_seed = base_seed
        self._next_index = 0
        self._maps: list[GameMap] = []
        self._lock = threading.Lock()

    def _next_config(self) -> GenConfig:
        with self._lock:
            index = self._next_index
            self._next_index += 1
        return replace(self._config, seed=self._base_seed + index * self.SEED_STRIDE)

    def acquire(self) -> GameMap:
        with self._lock:
            if self._maps:
                return self._maps.pop(0)
        return generate_map(self._next_config())

    def refill(self, target_size: int) -> None:
        while True:
            with self._lock:
                if len(self._maps) >= target_size:
                    return
            game_map = generate_map(self._next_config())
            with self._lock:
                if len(self._maps) < target_size:
                    self._maps.append(game_map)

    def size(self) -> int:
        with self._lock:
            return len(self._maps)
