import threading

import pytest

from hexduet import ser
from hexduet.hexgrid import HexCoord, distance, reachable_from
from hexduet.mapgen import (
    GRASS,
    HOUSE,
    MOUNTAIN,
    PATH,
    RAMP,
    WATER,
    GenConfig,
    MapError,
    MapPool,
    generate_map,
    validate_map,
)

from conftest import build_map, card

SMALL = GenConfig(rows=15, cols=15, town_count=2, lake_count=2, lake_size_range=(3, 6),
                  mountain_count=1, mountain_size_range=(3, 5), card_count=10)


def test_generate_map_deterministic_bytes():
    for seed in (0, 1, 17):
        cfg = GenConfig(seed=seed)
        a = ser.canonical_bytes(generate_map(cfg).to_dict())
        b = ser.canonical_bytes(generate_map(cfg).to_dict())
        assert a == b


def test_generate_map_different_seeds_differ():
    assert generate_map(GenConfig(seed=1)).to_dict() != generate_map(GenConfig(seed=2)).to_dict()


def test_generated_maps_pass_validation_100_seeds():
    for seed in range(100):
        m = generate_map(GenConfig(seed=seed))
        report = validate_map(m, expected_card_count=21)
        assert report.ok, f"seed {seed}: {report.failures}"


def test_generated_map_has_features():
    m = generate_map(GenConfig(seed=3))
    kinds = {t for row in m.terrain for t in row}
    assert WATER in kinds and MOUNTAIN in kinds and PATH in kinds and RAMP in kinds
    assert any(p.kind == HOUSE for p in m.props)
    houses = [p for p in m.props if p.kind == HOUSE]
    assert all("roof_color" in h.variant and "floors" in h.variant for h in houses)


def cluster_towns(m, radius=2):
    """Oracle: maximal house clusters under within-radius adjacency."""
    houses = [p.cell for p in m.props if p.kind == HOUSE]
    clusters = []
    remaining = set(houses)
    while remaining:
        seed_cell = remaining.pop()
        cluster = {seed_cell}
        changed = True
        while changed:
            changed = False
            for cell in list(remaining):
                if any(distance(cell, c) <= radius for c in cluster):
                    cluster.add(cell)
                    remaining.discard(cell)
                    changed = True
        clusters.append(cluster)
    return clusters


def test_towns_form_clusters():
    cfg = GenConfig(seed=5, town_count=2, town_size_range=(4, 6))
    m = generate_map(cfg)
    clusters = [c for c in cluster_towns(m, radius=cfg.town_radius) if len(c) >= 2]
    assert len(clusters) >= 2
    for cluster in clusters:
        for a in cluster:
            assert any(distance(a, b) <= 2 * cfg.town_radius for b in cluster if b != a)


def test_path_terrain_touches_every_town_center():
    for seed in range(10):
        m = generate_map(GenConfig(seed=seed))
        path_cells = {c for c in m.all_cells() if m.terrain_at(c) == PATH}
        if not path_cells:
            continue
        clusters = [c for c in cluster_towns(m) if len(c) >= 2]
        for cluster in clusters:
            near = {
                cell
                for house in cluster
                for cell in path_cells
                if distance(house, cell) <= 3
            }
            assert near, f"seed {seed}: town at {sorted(cluster)[0]} has no nearby path"


def test_map_roundtrip_via_dict():
    m = generate_map(SMALL)
    from hexduet.mapgen import GameMap

    again = GameMap.from_dict(m.to_dict())
    assert again.to_dict() == m.to_dict()


def test_validate_open_map_ok():
    m = build_map(cards=[card(1, (3, 3)), card(2, (4, 4))])
    assert validate_map(m).ok


def test_validate_card_on_island():
    m = build_map(
        rows=5, cols=5,
        water=[(3, 0), (2, 1), (3, 1), (4, 1)],
        cards=[card(1, (4, 0))],
    )
    report = validate_map(m)
    assert not report.ok
    assert any("unreachable card" in f for f in report.failures)


def test_validate_spawn_on_water():
    m = build_map(water=[(0, 0)])
    report = validate_map(m)
    assert not report.ok
    assert any("water" in f for f in report.failures)


def test_validate_ramp_rules():
    # ramp with no mountain neighbor
    m = build_map(ramp=[(3, 3)])
    report = validate_map(m)
    assert any("no mountain neighbor" in f for f in report.failures)
    # proper ramp passes
    m2 = build_map(mountain=[(4, 3)], ramp=[(3, 3)])
    assert validate_map(m2).ok


def test_validate_card_count_mismatch():
    m = build_map(cards=[card(1, (3, 3))])
    report = validate_map(m, expected_card_count=2)
    assert not report.ok


def test_infeasible_config_fails_before_generation():
    with pytest.raises(MapError):
        generate_map(GenConfig(rows=6, cols=6, card_count=200))


def test_spawns_and_cards_connected_and_exclusive():
    for seed in range(30):
        m = generate_map(GenConfig(seed=1000 + seed))
        comp = reachable_from(m, m.leader_spawn)
        assert m.follower_spawn in comp
        cells = [c.cell for c in m.initial_cards]
        assert len(set(cells)) == len(cells)
        for cell in cells:
            assert cell in comp
            assert m.prop_at(cell) is None
            assert m.terrain_at(cell) != WATER


def test_pool_acquire_and_refill():
    pool = MapPool(SMALL, base_seed=50)
    pool.refill(5)
    assert pool.size() == 5
    m = pool.acquire()
    assert pool.size() == 4
    assert validate_map(m, expected_card_count=SMALL.card_count).ok
    pool.refill(6)
    assert pool.size() == 6


def test_pool_empty_acquire_generates_synchronously():
    pool = MapPool(SMALL, base_seed=90)
    m = pool.acquire()
    assert validate_map(m, expected_card_count=SMALL.card_count).ok


def test_pool_maps_are_distinct():
    pool = MapPool(SMALL, base_seed=10)
    pool.refill(4)
    seen = {ser.digest(pool.acquire().to_dict()) for _ in range(4)}
    assert len(seen) == 4


def test_pool_concurrent_acquire_refill():
    pool = MapPool(SMALL, base_seed=200)
    pool.refill(4)
    got = []
    lock = threading.Lock()

    def worker():
        m = pool.acquire()
        with lock:
            got.append(m)

    threads = [threading.Thread(target=worker) for _ in range(6)]
    refiller = threading.Thread(target=pool.refill, args=(3,))
    for t in threads:
        t.start()
    refiller.start()
    for t in threads:
        t.join()
    refiller.join()
    assert len(got) == 6
    hashes = {ser.digest(m.to_dict()) for m in got}
    assert len(hashes) == 6
