import asyncio

import pytest
from aiohttp.test_utils import TestClient, TestServer

from hexduet import ser
from hexduet.gamecore import (
    FOLLOWER,
    LEADER,
    Action,
    GameConfig,
    apply_action,
    start_game,
    state_hash,
)
from hexduet.persistence import EventStore, StoreError, build_portal, replay_url

from conftest import build_map, card


def triple(cells):
    return [
        card(1, cells[0], "black", "plus", 1),
        card(2, cells[1], "blue", "torch", 2),
        card(3, cells[2], "green", "star", 3),
    ]


def play_scripted(game_id, store, lobby="test", script=None, finish=True):
    m = build_map(cards=triple([(1, 0), (2, 0), (3, 0)]), follower=(0, 6))
    cfg = GameConfig()
    state, events = start_game(m, cfg, seed=int(game_id.split("-")[-1]))
    store.create_game(game_id, lobby, "p-leader", "p-follower", started_at=100.0)
    seq = 0
    wall = 100.0

    def stamp(evs):
        nonlocal seq, wall
        for e in evs:
            e.game_id = game_id
            e.seq = seq
            e.wall_time = wall
            seq += 1
            wall += 0.5
        return evs

    store.append_events(stamp(events))
    script = script or [
        (LEADER, Action("forward")),
        (LEADER, Action("send_instruction", text="take the torch")),
        (LEADER, Action("forward")),
        (LEADER, Action("forward")),
        (LEADER, Action("end_turn")),
        (FOLLOWER, Action("mark_instruction_done")),
        (FOLLOWER, Action("end_turn")),
    ]
    for actor, action in script:
        if state.over:
            break
        state, evs = apply_action(state, actor, action)
        store.append_events(stamp(evs))
    if finish:
        store.finish_game(game_id, state.turn.score, state_hash(state), ended_at=wall)
    return state


def test_append_density_rules():
    store = EventStore()
    m = build_map(cards=triple([(1, 0), (2, 0), (3, 0)]), follower=(0, 6))
    state, events = start_game(m, GameConfig(), 5)
    store.create_game("g-5", "test", "a", "b", 0.0)
    ev = events[0]
    ev.game_id, ev.seq, ev.wall_time = "g-5", 0, 1.0
    store.append_event(ev)
    assert store.last_seq("g-5") == 0

    state2, evs = apply_action(state, LEADER, Action("forward"))
    move = evs[0]
    move.game_id, move.wall_time = "g-5", 2.0
    move.seq = 2  # gap
    with pytest.raises(StoreError):
        store.append_event(move)
    move.seq = 0  # duplicate
    with pytest.raises(StoreError):
        store.append_event(move)
    move.seq = 1
    store.append_event(move)


def test_first_event_must_be_game_start():
    store = EventStore()
    store.create_game("g-1", "test", "a", "b", 0.0)
    m = build_map(follower=(0, 6))
    state, _ = start_game(m, GameConfig(), 1)
    _, evs = apply_action(state, LEADER, Action("forward"))
    evs[0].game_id, evs[0].seq, evs[0].wall_time = "g-1", 0, 0.0
    with pytest.raises(StoreError):
        store.append_event(evs[0])


def test_append_after_terminal_rejected():
    store = EventStore()
    m = build_map(follower=(0, 6))
    cfg = GameConfig(initial_turns=1)
    state, events = start_game(m, cfg, 1)
    store.create_game("g-2", "test", "a", "b", 0.0)
    seq = 0
    for e in events:
        e.game_id, e.seq, e.wall_time = "g-2", seq, 0.0
        seq += 1
    store.append_events(events)
    state, evs = apply_action(state, LEADER, Action("end_turn"))
    for e in evs:
        e.game_id, e.seq, e.wall_time = "g-2", seq, 0.0
        seq += 1
    store.append_events(evs)  # ends the game: turn_transition + game_over
    tail = evs[-1]
    tail.seq = seq
    with pytest.raises(StoreError):
        store.append_event(tail)


def test_replay_reproduces_live_hash():
    store = EventStore()
    live = play_scripted("g-7", store)
    replayed = store.replay_game("g-7")
    assert state_hash(replayed) == state_hash(live)


def test_stats_arithmetic():
    store = EventStore()
    assert store.stats() == {
        "game_count": 0,
        "instruction_count": 0,
        "mean_score": None,
        "median_score": None,
        "score_histogram": {},
    }
    for i, score in enumerate([0, 0, 10]):
        gid = f"g-{i}"
        store.create_game(gid, "test", "a", "b", float(i))
        m = build_map(follower=(0, 6))
        _, events = start_game(m, GameConfig(), i)
        for j, e in enumerate(events):
            e.game_id, e.seq, e.wall_time = gid, j, float(i)
        store.append_events(events)
        store.finish_game(gid, score, "h", ended_at=float(i) + 1)
    st = store.stats()
    assert st["game_count"] == 3
    assert abs(st["mean_score"] - 10 / 3) < 0.01
    assert st["median_score"] == 0
    assert st["score_histogram"] == {"0": 2, "10": 1}


def test_abandoned_games_excluded_from_stats():
    store = EventStore()
    store.create_game("g-a", "test", "a", "b", 0.0)
    m = build_map(follower=(0, 6))
    _, events = start_game(m, GameConfig(), 3)
    for j, e in enumerate(events):
        e.game_id, e.seq, e.wall_time = "g-a", j, 0.0
    store.append_events(events)
    store.finish_game("g-a", 2, "h", 1.0, abandoned=True)
    assert store.stats()["game_count"] == 0


def test_archive_roundtrip_identical_stats(tmp_path):
    store = EventStore()
    for i in range(3):
        play_scripted(f"g-{i}", store)
    store.export_archive(str(tmp_path / "arch"))
    fresh = EventStore()
    n = fresh.import_archive(str(tmp_path / "arch"))
    assert n == 3
    assert fresh.stats() == store.stats()
    for i in range(3):
        assert state_hash(fresh.replay_game(f"g-{i}")) == state_hash(store.replay_game(f"g-{i}"))


def test_store_persists_to_disk(tmp_path):
    path = str(tmp_path / "events.db")
    store = EventStore(path)
    play_scripted("g-9", store)
    store.close()
    again = EventStore(path)
    assert again.record("g-9") is not None
    assert len(again.events_for("g-9")) > 0


# --- portal endpoints ---


@pytest.fixture
def portal_client():
    loop = asyncio.new_event_loop()
    store = EventStore()
    for i in range(3):
        play_scripted(f"g-{i}", store)
    client = loop.run_until_complete(_make_client(store))
    yield loop, client, store
    loop.run_until_complete(client.close())
    loop.close()


async def _make_client(store):
    app = build_portal(store)
    client = TestClient(TestServer(app))
    await client.start_server()
    return client


def test_portal_lists_games(portal_client):
    loop, client, store = portal_client

    async def go():
        resp = await client.get("/games")
        assert resp.status == 200
        body = await resp.json()
        assert body["total"] == 3
        assert len(body["games"]) == 3
        assert all("replay_url" in g for g in body["games"])
        resp = await client.get("/games?limit=1&offset=1")
        body = await resp.json()
        assert len(body["games"]) == 1
        resp = await client.get("/games?limit=nope")
        assert resp.status == 400

    loop.run_until_complete(go())


def test_portal_single_game_and_replay_link(portal_client):
    loop, client, store = portal_client

    async def go():
        resp = await client.get("/games/g-1")
        assert resp.status == 200
        body = await resp.json()
        assert body["replay_url"] == replay_url("g-1")
        assert "g-1" in body["replay_url"]
        resp = await client.get("/games/nope")
        assert resp.status == 404

    loop.run_until_complete(go())


def test_portal_events_and_stats(portal_client):
    loop, client, store = portal_client

    async def go():
        resp = await client.get("/games/g-0/events")
        body = await resp.json()
        assert body["events"][0]["kind"] == "game_start"
        assert [e["seq"] for e in body["events"]] == list(range(len(body["events"])))
        resp = await client.get("/stats")
        stats = await resp.json()
        assert stats == store.stats()
        resp = await client.get("/games/nope/events")
        assert resp.status == 404

    loop.run_until_complete(go())


def test_portal_archive_download(portal_client, tmp_path):
    loop, client, store = portal_client

    async def go():
        resp = await client.get("/archive")
        assert resp.status == 200
        assert resp.content_type == "application/zip"
        return await resp.read()

    blob = loop.run_until_complete(go())
    import io
    import zipfile

    zf = zipfile.ZipFile(io.BytesIO(blob))
    names = zf.namelist()
    assert "records.index" in names
    assert any(n.startswith("game_") for n in names)
    # unpack and import: stats must be identical
    out = tmp_path / "unpacked"
    zf.extractall(out)
    fresh = EventStore()
    fresh.import_archive(str(out))
    assert fresh.stats() == store.stats()
