"""Scenario files and the real-time editing API.

A scenario is a fully specified controlled game state: a map plus optional
overrides for poses, card states, turn state and pre-queued instructions.
Scenario rooms start exactly in that state, and an editor can attach over the
websocket protocol to watch every event and push validated edits between
actions. Edits enter the room's single event stream, so edited games replay
exactly like ordinary ones.
"""

from __future__ import annotations

import time
import uuid
from dataclasses import dataclass, field
from typing import Optional

from . import protocol, ser
from .cards import Card
from .gamecore import (
    ACTIVE,
    CANCELLED,
    DONE,
    FOLLOWER,
    LEADER,
    QUEUED,
    GameConfig,
    GameState,
    start_game,
)
from .hexgrid import HexCoord, Pose
from .mapgen import TERRAIN_KINDS, GameMap, check_world, validate_map
from .protocol import WireMessage, decode, encode

_STATUSES = (QUEUED, ACTIVE, DONE, CANCELLED)


class ScenarioError(Exception):
    """Schema or invariant violation; names the offending field."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class EditRejected(Exception):
    pass


@dataclass
class Scenario:
    map: GameMap
    config: GameConfig
    seed: int
    overlay: dict = field(default_factory=dict)

    def build_state(self) -> GameState:
        state, _ = start_game(self.map, self.config, self.seed, scenario=self.overlay or None)
        return state

    def to_dict(self) -> dict:
        return {
            "map": self.map.to_dict(),
            "config": self.config.to_dict(),
            "seed": self.seed,
            "state": self.overlay,
        }


def scenario_from_state(state: GameState) -> Scenario:
    """Snapshot a live state as a loadable scenario."""
    game_map = GameMap.from_dict(state.map.to_dict())
    game_map.initial_cards = [Card.from_dict(c.to_dict()) for c in state.cards]
    # the agents' current cells are the scenario's effective spawns
    game_map.leader_spawn = state.leader_pose.cell
    game_map.follower_spawn = state.follower_pose.cell
    overlay = {
        "leader_pose": {"cell": list(state.leader_pose.cell), "heading": state.leader_pose.heading},
        "follower_pose": {"cell": list(state.follower_pose.cell), "heading": state.follower_pose.heading},
        "cards": [c.to_dict() for c in sorted(state.cards, key=lambda c: c.id)],
        "turn": state.turn.to_dict(),
        "instructions": [i.to_dict() for i in state.instructions],
        "turn_number": state.turn_number,
    }
    return Scenario(map=game_map, config=state.config, seed=state.rng.randrange(2**31), overlay=overlay)


def _require(d: dict, key: str, types, where: str):
    if key not in d:
        raise ScenarioError(f"{where}.{key}" if where else key, "missing")
    if not isinstance(d[key], types):
        raise ScenarioError(f"{where}.{key}" if where else key, f"expected {types}")
    return d[key]


def _parse_pose(d, where: str) -> Pose:
    if not isinstance(d, dict):
        raise ScenarioError(where, "expected an object")
    cell = _require(d, "cell", list, where)
    heading = _require(d, "heading", int, where)
    if len(cell) != 2 or not all(isinstance(v, int) for v in cell):
        raise ScenarioError(f"{where}.cell", "expected [q, r] integers")
    if not 0 <= heading <= 5:
        raise ScenarioError(f"{where}.heading", "heading must be 0..5")
    return Pose(HexCoord(cell[0], cell[1]), heading)


def load_scenario(source) -> Scenario:
    """Parse and fully validate a scenario from a path, text, or dict."""
    if isinstance(source, dict):
        doc = source
    else:
        text = source
        if isinstance(source, str) and "\n" not in source and source.endswith(".json"):
            with open(source) as fh:
                text = fh.read()
        try:
            doc = ser.canonical_loads(text)
        except Exception as exc:
            raise ScenarioError("document", f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ScenarioError("document", "expected a JSON object")

    map_dict = _require(doc, "map", dict, "")
    try:
        game_map = GameMap.from_dict(map_dict)
    except Exception as exc:
        raise ScenarioError("map", f"malformed: {exc}") from None
    config_dict = _require(doc, "config", dict, "")
    try:
        config = GameConfig.from_dict(config_dict)
        config.validate()
    except ScenarioError:
        raise
    except Exception as exc:
        raise ScenarioError("config", str(exc)) from None
    seed = _require(doc, "seed", int, "")
    overlay = doc.get("state") or {}
    if not isinstance(overlay, dict):
        raise ScenarioError("state", "expected an object")

    scenario = Scenario(map=game_map, config=config, seed=seed, overlay=overlay)
    _validate_scenario(scenario)
    return scenario


def save_scenario(scenario: Scenario, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(ser.canonical_dumps(scenario.to_dict()))


def _validate_scenario(scenario: Scenario) -> None:
    overlay = scenario.overlay
    game_map = scenario.map

    leader_pose = (
        _parse_pose(overlay["leader_pose"], "state.leader_pose")
        if "leader_pose" in overlay
        else Pose(game_map.leader_spawn, 0)
    )
    follower_pose = (
        _parse_pose(overlay["follower_pose"], "state.follower_pose")
        if "follower_pose" in overlay
        else Pose(game_map.follower_spawn, 0)
    )

    cards = game_map.initial_cards
    if "cards" in overlay:
        if not isinstance(overlay["cards"], list):
            raise ScenarioError("state.cards", "expected a list")
        cards = []
        for i, cd in enumerate(overlay["cards"]):
            try:
                cards.append(Card.from_dict(cd))
            except Exception as exc:
                raise ScenarioError(f"state.cards[{i}]", f"malformed: {exc}") from None
        ids = [c.id for c in cards]
        if len(set(ids)) != len(ids):
            raise ScenarioError("state.cards", "duplicate card ids")
        for c in cards:
            if c.color not in scenario.config.colors or c.shape not in scenario.config.shapes \
                    or c.count not in scenario.config.counts:
                raise ScenarioError(f"state.cards[{c.id}]", "outside configured inventories")

    failures = check_world(
        game_map, [c.cell for c in cards], [leader_pose.cell, follower_pose.cell],
        spawn_card_overlap_ok=True,
    )
    if failures:
        raise ScenarioError("state", "; ".join(failures))
    # the map's own card placements must also be sound for game start
    report = validate_map(game_map, spawn_card_overlap_ok=True)
    if not report.ok:
        raise ScenarioError("map", "; ".join(report.failures))

    if "turn" in overlay:
        t = overlay["turn"]
        where = "state.turn"
        role = _require(t, "active_role", str, where)
        if role not in (LEADER, FOLLOWER):
            raise ScenarioError(f"{where}.active_role", f"unknown role {role!r}")
        for key in ("turns_remaining", "steps_remaining", "score", "sets_collected"):
            value = _require(t, key, int, where)
            if value < 0:
                raise ScenarioError(f"{where}.{key}", "must be non-negative")
        if t["score"] != t["sets_collected"]:
            raise ScenarioError(f"{where}.score", "score must equal sets_collected")
        budget = scenario.config.steps_for(role)
        if t["steps_remaining"] > budget:
            raise ScenarioError(f"{where}.steps_remaining", f"exceeds {role} budget {budget}")

    if "instructions" in overlay:
        if not isinstance(overlay["instructions"], list):
            raise ScenarioError("state.instructions", "expected a list")
        active = 0
        for i, ins in enumerate(overlay["instructions"]):
            where = f"state.instructions[{i}]"
            status = _require(ins, "status", str, where)
            if status not in _STATUSES:
                raise ScenarioError(f"{where}.status", f"unknown status {status!r}")
            text = _require(ins, "text", str, where)
            if not text or len(text) > 1000:
                raise ScenarioError(f"{where}.text", "must be 1..1000 characters")
            _require(ins, "id", int, where)
            _require(ins, "issued_turn", int, where)
            active += status == ACTIVE
        if active > 1:
            raise ScenarioError("state.instructions", "more than one active instruction")


# ---------------------------------------------------------------------------
# Edit validation (server side, before the edit becomes an event)
# ---------------------------------------------------------------------------


def validate_edit(state: GameState, edit: dict) -> list[str]:
    """Dry-run an edit against a copy of the state; returns human-readable
    failures (empty when the edit is acceptable)."""
    if not isinstance(edit, dict):
        return ["edit must be an object"]
    allowed = {"tiles", "props", "cards", "leader_pose", "follower_pose", "edit_id"}
    unknown = set(edit) - allowed
    if unknown:
        return [f"unknown edit fields: {sorted(unknown)}"]
    for tile in edit.get("tiles", []):
        if not isinstance(tile, dict) or "cell" not in tile:
            return ["tiles entries need cell/terrain/elevation"]
        if tile.get("terrain") not in TERRAIN_KINDS:
            return [f"unknown terrain {tile.get('terrain')!r}"]
        if tile.get("elevation") not in (0, 1):
            return ["elevation must be 0 or 1"]
        q, r = tile["cell"]
        if not (0 <= q < state.map.cols and 0 <= r < state.map.rows):
            return [f"tile out of bounds at ({q}, {r})"]
    work = state.clone()
    try:
        from .gamecore import apply_edit

        apply_edit(work, edit)
    except Exception as exc:
        return [f"edit does not apply: {exc}"]
    failures = check_world(
        work.map,
        [c.cell for c in work.cards],
        [work.leader_pose.cell, work.follower_pose.cell],
        spawn_card_overlap_ok=True,
    )
    ids = [c.id for c in work.cards]
    if len(set(ids)) != len(ids):
        failures.append("duplicate card ids")
    for c in work.cards:
        if c.color not in work.config.colors or c.shape not in work.config.shapes \
                or c.count not in work.config.counts:
            failures.append(f"card {c.id} outside configured inventories")
    return failures


# ---------------------------------------------------------------------------
# Editor client
# ---------------------------------------------------------------------------


class EditorSession:
    """Synchronous editor attached to a scenario room's event feed."""

    def __init__(self, ws, room_id: str):
        self._ws = ws
        self.room_id = room_id
        self._out_seq = 0
        self._pending_events: list[dict] = []

    @classmethod
    def attach(cls, endpoint: str, room_id: str, timeout: float = 10.0) -> "EditorSession":
        from websockets.sync.client import connect as ws_connect

        url = endpoint.rstrip("/") + "/ws/_editor"
        ws = ws_connect(url, open_timeout=timeout, close_timeout=2.0)
        session = cls(ws, room_id)
        session._send(protocol.SCENARIO_ATTACH, {"room_id": room_id})
        # the server acks an attach with the event backlog; surface a rejection now
        first = session._read(timeout)
        if first.kind == protocol.REJECTED:
            ws.close()
            raise EditRejected(first.payload["reason"])
        session._stash(first)
        return session

    def _send(self, kind: str, payload: dict) -> int:
        self._out_seq += 1
        self._ws.send(encode(WireMessage(kind=kind, seq=self._out_seq, payload=payload)).decode("utf-8"))
        return self._out_seq

    def _read(self, timeout: float) -> WireMessage:
        msg = decode(self._ws.recv(timeout=timeout))
        if msg.kind == protocol.PING:
            self._send(protocol.PONG, {})
        return msg

    def _stash(self, msg: WireMessage) -> None:
        if msg.kind == protocol.SCENARIO_EVENT:
            self._pending_events.append(msg.payload["event"])

    def next_event(self, timeout: float = 10.0) -> dict:
        """Next room event (the full backlog streams first after attach)."""
        while not self._pending_events:
            self._stash(self._read(timeout))
        return self._pending_events.pop(0)

    def push_update(self, edit: dict, timeout: float = 10.0) -> dict:
        """Atomically replace parts of the room state; returns the edit event."""
        edit = dict(edit)
        edit.setdefault("edit_id", uuid.uuid4().hex)
        seq = self._send(protocol.SCENARIO_PUSH, {"room_id": self.room_id, "edit": edit})
        deadline = time.monotonic() + timeout
        while True:
            msg = self._read(max(0.05, deadline - time.monotonic()))
            if msg.kind == protocol.REJECTED and msg.payload.get("ack") == seq:
                raise EditRejected(msg.payload["reason"])
            if msg.kind == protocol.SCENARIO_EVENT:
                event = msg.payload["event"]
                if event["kind"] == "scenario_edit" and event["payload"]["edit"].get("edit_id") == edit["edit_id"]:
                    self._pending_events.append(event)
                    return event
                self._pending_events.append(event)

    def close(self) -> None:
        try:
            self._ws.close()
        except Exception:
            pass
