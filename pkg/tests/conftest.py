import random

import pytest

from hexduet.cards import Card
from hexduet.hexgrid import HexCoord
from hexduet.mapgen import GRASS, MOUNTAIN, RAMP, WATER, GameMap, Prop


def build_map(rows=7, cols=7, water=(), mountain=(), ramp=(), props=(), cards=(),
              leader=(0, 0), follower=(1, 0), seed=0):
    """Hand-built map for unit tests; terrain lists are (q, r) pairs."""
    terrain = [[GRASS] * cols for _ in range(rows)]
    elevation = [[0] * cols for _ in range(rows)]
    for q, r in water:
        terrain[r][q] = WATER
    for q, r in mountain:
        terrain[r][q] = MOUNTAIN
        elevation[r][q] = 1
    for q, r in ramp:
        terrain[r][q] = RAMP
    return GameMap(
        rows=rows,
        cols=cols,
        terrain=terrain,
        elevation=elevation,
        props=[Prop(kind, HexCoord(q, r), dict(variant)) for kind, (q, r), variant in props],
        initial_cards=[Card(**c) for c in cards],
        leader_spawn=HexCoord(*leader),
        follower_spawn=HexCoord(*follower),
        seed=seed,
    )


def card(id, cell, color="black", shape="plus", count=1, selected=False):
    return {"id": id, "cell": HexCoord(*cell), "color": color, "shape": shape,
            "count": count, "selected": selected}


def random_obstacle_map(rng: random.Random, rows=15, cols=15):
    """Random walls of water; used to exercise pathfinding against an oracle."""
    water = [(q, r) for r in range(rows) for q in range(cols) if rng.random() < 0.25]
    m = build_map(rows=rows, cols=cols, water=water)
    return m


@pytest.fixture
def open7():
    return build_map()
