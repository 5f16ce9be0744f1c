"""Authoritative game state machine.

Movement, card selection, set resolution, scoring, turn/step/time budgets,
instruction queue lifecycle, and role-filtered observations. Every state change
is expressed as an event; live execution builds the event list by applying one
event at a time through the same effect functions that replay uses, so folding
a recorded log reproduces the live state exactly.

The clock is injected: ``now`` is seconds of game time supplied by the caller,
never read ambiently. Turn deadlines are runtime-only and are excluded from the
canonical serialization so that logs and hashes are independent of wall time.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable, Optional

from . import ser
from .cards import Card, is_valid_set
from .hexgrid import HexCoord, Pose, neighbor, opposite, rotate, reachable_from, visible_set
from .mapgen import GameMap, Prop, validate_map

# Roles
LEADER = "leader"
FOLLOWER = "follower"
SERVER = "server"
ROLES = (LEADER, FOLLOWER)

# Action kinds
FORWARD = "forward"
BACKWARD = "backward"
TURN_LEFT = "turn_left"
TURN_RIGHT = "turn_right"
END_TURN = "end_turn"
NOOP = "noop"
SEND_INSTRUCTION = "send_instruction"
MARK_INSTRUCTION_DONE = "mark_instruction_done"
CANCEL_INSTRUCTIONS = "cancel_instructions"
MOVEMENT_KINDS = (FORWARD, BACKWARD, TURN_LEFT, TURN_RIGHT)
ACTION_KINDS = MOVEMENT_KINDS + (
    END_TURN,
    NOOP,
    SEND_INSTRUCTION,
    MARK_INSTRUCTION_DONE,
    CANCEL_INSTRUCTIONS,
)

# Instruction statuses
QUEUED = "queued"
ACTIVE = "active"
DONE = "done"
CANCELLED = "cancelled"

# Turn transition reasons
STEPS_EXHAUSTED = "steps_exhausted"
TIMER_EXPIRED = "timer_expired"
END_TURN_ACTION = "end_turn_action"

# Event kinds
EV_GAME_START = "game_start"
EV_MOVE = "move"
EV_CARD_TOGGLE = "card_toggle"
EV_SET_COMPLETED = "set_completed"
EV_TURN_TRANSITION = "turn_transition"
EV_INSTRUCTION_SENT = "instruction_sent"
EV_INSTRUCTION_ACTIVATED = "instruction_activated"
EV_INSTRUCTION_DONE = "instruction_done"
EV_INSTRUCTION_CANCELLED = "instruction_cancelled"
EV_TIMER_EXPIRED = "timer_expired"
EV_ABANDONED = "abandoned"
EV_GAME_OVER = "game_over"
EV_SCENARIO_EDIT = "scenario_edit"

TERMINAL_EVENTS = (EV_GAME_OVER, EV_ABANDONED)

# Payload fields that are inputs to the effect (the rest are derived outputs,
# recomputed and verified during replay).
_EVENT_INPUTS = {
    EV_GAME_START: ("map", "config", "seed", "scenario"),
    EV_MOVE: ("action",),
    EV_CARD_TOGGLE: (),
    EV_SET_COMPLETED: (),
    EV_TURN_TRANSITION: ("reason",),
    EV_INSTRUCTION_SENT: ("text",),
    EV_INSTRUCTION_ACTIVATED: (),
    EV_INSTRUCTION_DONE: (),
    EV_INSTRUCTION_CANCELLED: (),
    EV_TIMER_EXPIRED: (),
    EV_ABANDONED: ("by",),
    EV_GAME_OVER: (),
    EV_SCENARIO_EDIT: ("edit",),
}


class ActionRejected(Exception):
    """Typed rejection; the state passed to apply_action is left untouched."""

    def __init__(self, code: str, message: str = ""):
        super().__init__(message or code)
        self.code = code


class ReplayError(Exception):
    def __init__(self, seq, message: str):
        super().__init__(f"event seq {seq}: {message}")
        self.seq = seq


@dataclass
class Action:
    kind: str
    text: Optional[str] = None  # only for send_instruction

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        if self.text is not None:
            d["text"] = self.text
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Action":
        return cls(kind=d["kind"], text=d.get("text"))


@dataclass
class GameConfig:
    leader_steps_per_turn: int = 5
    follower_steps_per_turn: int = 10
    leader_turn_seconds: float = 50.0
    follower_turn_seconds: float = 15.0
    initial_turns: int = 12  # individual turns, leader moves first
    turn_bonus_schedule: tuple[int, ...] = (6, 6, 6, 5, 5, 5, 4, 4, 4, 3, 3, 3, 2, 2, 2, 1)
    card_count: int = 21
    fog_range: int = 14
    fov_degrees: float = 210.0
    hide_card_patterns: bool = False
    colors: tuple[str, ...] = ("black", "blue", "green", "orange", "pink", "red")
    shapes: tuple[str, ...] = ("plus", "torch", "diamond", "heart", "star", "triangle")
    counts: tuple[int, ...] = (1, 2, 3)

    def validate(self) -> None:
        if self.leader_steps_per_turn <= 0 or self.follower_steps_per_turn <= 0:
            raise ValueError("step budgets must be positive")
        if self.leader_turn_seconds <= 0 or self.follower_turn_seconds <= 0:
            raise ValueError("turn timers must be positive")
        if self.initial_turns < 0:
            raise ValueError("initial_turns must be non-negative")
        if not self.turn_bonus_schedule:
            raise ValueError("turn_bonus_schedule must be non-empty")
        if any(b < 0 for b in self.turn_bonus_schedule):
            raise ValueError("turn bonuses must be non-negative")
        if list(self.turn_bonus_schedule) != sorted(self.turn_bonus_schedule, reverse=True):
            raise ValueError("turn_bonus_schedule must be non-increasing")
        if self.fog_range < 0:
            raise ValueError("fog_range must be non-negative")
        if not (0 < self.fov_degrees <= 360):
            raise ValueError("fov_degrees must be in (0, 360]")
        for inv, name in ((self.colors, "colors"), (self.shapes, "shapes"), (self.counts, "counts")):
            if len(set(inv)) != len(inv) or not inv:
                raise ValueError(f"{name} must be non-empty and distinct")

    def steps_for(self, role: str) -> int:
        return self.leader_steps_per_turn if role == LEADER else self.follower_steps_per_turn

    def seconds_for(self, role: str) -> float:
        return self.leader_turn_seconds if role == LEADER else self.follower_turn_seconds

    def bonus_for_set(self, sets_collected: int) -> int:
        index = min(sets_collected - 1, len(self.turn_bonus_schedule) - 1)
        return self.turn_bonus_schedule[index]

    def to_dict(self) -> dict:
        return {
            "leader_steps_per_turn": self.leader_steps_per_turn,
            "follower_steps_per_turn": self.follower_steps_per_turn,
            "leader_turn_seconds": self.leader_turn_seconds,
            "follower_turn_seconds": self.follower_turn_seconds,
            "initial_turns": self.initial_turns,
            "turn_bonus_schedule": list(self.turn_bonus_schedule),
            "card_count": self.card_count,
            "fog_range": self.fog_range,
            "fov_degrees": self.fov_degrees,
            "hide_card_patterns": self.hide_card_patterns,
            "colors": list(self.colors),
            "shapes": list(self.shapes),
            "counts": list(self.counts),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GameConfig":
        kw = dict(d)
        for key in ("turn_bonus_schedule", "colors", "shapes", "counts"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return cls(**kw)


@dataclass
class TurnState:
    active_role: str
    turns_remaining: int
    steps_remaining: int
    turn_deadline: float  # game-time seconds; runtime-only, not hashed
    score: int = 0
    sets_collected: int = 0

    def to_dict(self) -> dict:
        return {
            "active_role": self.active_role,
            "turns_remaining": self.turns_remaining,
            "steps_remaining": self.steps_remaining,
            "score": self.score,
            "sets_collected": self.sets_collected,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TurnState":
        return cls(
            active_role=d["active_role"],
            turns_remaining=d["turns_remaining"],
            steps_remaining=d["steps_remaining"],
            turn_deadline=0.0,
            score=d["score"],
            sets_collected=d["sets_collected"],
        )


@dataclass
class Instruction:
    id: int
    text: str
    status: str
    issued_turn: int

    def to_dict(self) -> dict:
        return {"id": self.id, "text": self.text, "status": self.status, "issued_turn": self.issued_turn}

    @classmethod
    def from_dict(cls, d: dict) -> "Instruction":
        return cls(id=d["id"], text=d["text"], status=d["status"], issued_turn=d["issued_turn"])


@dataclass
class GameEvent:
    kind: str
    actor: str
    payload: dict
    game_id: Optional[str] = None
    seq: Optional[int] = None
    wall_time: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "actor": self.actor,
            "payload": self.payload,
            "game_id": self.game_id,
            "seq": self.seq,
            "wall_time": self.wall_time,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GameEvent":
        return cls(
            kind=d["kind"],
            actor=d["actor"],
            payload=d["payload"],
            game_id=d.get("game_id"),
            seq=d.get("seq"),
            wall_time=d.get("wall_time"),
        )


def _pose_dict(pose: Pose) -> dict:
    return {"cell": [pose.cell.q, pose.cell.r], "heading": pose.heading}


def _pose_from(d: dict) -> Pose:
    return Pose(HexCoord(d["cell"][0], d["cell"][1]), d["heading"])


@dataclass
class GameState:
    map: GameMap
    leader_pose: Pose
    follower_pose: Pose
    cards: list[Card]
    turn: TurnState
    instructions: list[Instruction]
    config: GameConfig
    rng: random.Random
    over: bool = False
    turn_number: int = 0
    next_card_id: int = 1
    next_instruction_id: int = 1
    _card_cells: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self._reindex()

    def _reindex(self) -> None:
        self._card_cells = {c.cell: c for c in self.cards}

    def pose_of(self, role: str) -> Pose:
        return self.leader_pose if role == LEADER else self.follower_pose

    def set_pose(self, role: str, pose: Pose) -> None:
        if role == LEADER:
            self.leader_pose = pose
        else:
            self.follower_pose = pose

    def card_at(self, cell: HexCoord) -> Optional[Card]:
        return self._card_cells.get(cell)

    def selected_cards(self) -> list[Card]:
        return [c for c in self.cards if c.selected]

    def active_instruction(self) -> Optional[Instruction]:
        for ins in self.instructions:
            if ins.status == ACTIVE:
                return ins
        return None

    def queued_instructions(self) -> list[Instruction]:
        return [i for i in self.instructions if i.status == QUEUED]

    def clone(self) -> "GameState":
        rng = random.Random()
        rng.setstate(self.rng.getstate())
        return GameState(
            map=self.map,  # immutable during play; scenario edits replace it
            leader_pose=self.leader_pose,
            follower_pose=self.follower_pose,
            cards=[Card(c.id, c.cell, c.color, c.shape, c.count, c.selected) for c in self.cards],
            turn=TurnState(
                self.turn.active_role,
                self.turn.turns_remaining,
                self.turn.steps_remaining,
                self.turn.turn_deadline,
                self.turn.score,
                self.turn.sets_collected,
            ),
            instructions=[Instruction(i.id, i.text, i.status, i.issued_turn) for i in self.instructions],
            config=self.config,
            rng=rng,
            over=self.over,
            turn_number=self.turn_number,
            next_card_id=self.next_card_id,
            next_instruction_id=self.next_instruction_id,
        )

    def to_dict(self) -> dict:
        version, mt, gauss = self.rng.getstate()
        return {
            "map": self.map.to_dict(),
            "leader_pose": _pose_dict(self.leader_pose),
            "follower_pose": _pose_dict(self.follower_pose),
            "cards": [c.to_dict() for c in sorted(self.cards, key=lambda c: c.id)],
            "turn": self.turn.to_dict(),
            "instructions": [i.to_dict() for i in self.instructions],
            "config": self.config.to_dict(),
            "rng": {"version": version, "state": list(mt), "gauss": gauss},
            "over": self.over,
            "turn_number": self.turn_number,
            "next_card_id": self.next_card_id,
            "next_instruction_id": self.next_instruction_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GameState":
        rng = random.Random()
        rng.setstate((d["rng"]["version"], tuple(d["rng"]["state"]), d["rng"]["gauss"]))
        return cls(
            map=GameMap.from_dict(d["map"]),
            leader_pose=_pose_from(d["leader_pose"]),
            follower_pose=_pose_from(d["follower_pose"]),
            cards=[Card.from_dict(c) for c in d["cards"]],
            turn=TurnState.from_dict(d["turn"]),
            instructions=[Instruction.from_dict(i) for i in d["instructions"]],
            config=GameConfig.from_dict(d["config"]),
            rng=rng,
            over=d["over"],
            turn_number=d["turn_number"],
            next_card_id=d["next_card_id"],
            next_instruction_id=d["next_instruction_id"],
        )


def state_hash(state: GameState) -> str:
    return ser.digest(state.to_dict())


def new_game(game_map: GameMap, config: GameConfig, seed: int,
             spawn_card_overlap_ok: bool = False) -> GameState:
    """Fresh state on a validated map: leader active, full budgets, no score."""
    config.validate()
    report = validate_map(game_map, spawn_card_overlap_ok=spawn_card_overlap_ok)
    if not report.ok:
        raise ValueError("invalid map: " + "; ".join(report.failures))
    for card in game_map.initial_cards:
        if card.color not in config.colors or card.shape not in config.shapes or card.count not in config.counts:
            raise ValueError(f"card {card.id} outside configured inventories")
    cards = [Card(c.id, c.cell, c.color, c.shape, c.count, False) for c in game_map.initial_cards]
    return GameState(
        map=game_map,
        leader_pose=Pose(game_map.leader_spawn, 0),
        follower_pose=Pose(game_map.follower_spawn, 0),
        cards=cards,
        turn=TurnState(
            active_role=LEADER,
            turns_remaining=config.initial_turns,
            steps_remaining=config.leader_steps_per_turn,
            turn_deadline=config.leader_turn_seconds,
        ),
        instructions=[],
        config=config,
        rng=random.Random(seed),
        over=config.initial_turns == 0,
        next_card_id=max((c.id for c in cards), default=0) + 1,
    )


# ---------------------------------------------------------------------------
# Event effects: each function mutates the working state according to the event
# inputs and returns the full payload (inputs plus derived outputs). Replay runs
# the same functions and verifies the recomputed payload against the record.
# ---------------------------------------------------------------------------


def _eff_move(state: GameState, actor: str, inputs: dict, now: float) -> dict:
    action = inputs["action"]
    pose = state.pose_of(actor)
    if action == TURN_LEFT:
        new_pose = Pose(pose.cell, rotate(pose.heading, "left"))
    elif action == TURN_RIGHT:
        new_pose = Pose(pose.cell, rotate(pose.heading, "right"))
    elif action == FORWARD:
        new_pose = Pose(neighbor(pose.cell, pose.heading), pose.heading)
    elif action == BACKWARD:
        new_pose = Pose(neighbor(pose.cell, opposite(pose.heading)), pose.heading)
    else:
        raise ValueError(f"not a movement action: {action}")
    state.set_pose(actor, new_pose)
    state.turn.steps_remaining -= 1
    return {
        "action": action,
        "from": _pose_dict(pose),
        "to": _pose_dict(new_pose),
        "steps_remaining": state.turn.steps_remaining,
    }


def _eff_card_toggle(state: GameState, actor: str, inputs: dict, now: float) -> dict:
    cell = state.pose_of(actor).cell
    card = state.card_at(cell)
    if card is None:
        raise ValueError(f"no card under {actor} at {tuple(cell)}")
    card.selected = not card.selected
    return {"card_id": card.id, "cell": [cell.q, cell.r], "selected": card.selected}


def _eff_set_completed(state: GameState, actor: str, inputs: dict, now: float) -> dict:
    removed = sorted(state.selected_cards(), key=lambda c: c.id)
    for card in removed:
        state.cards.remove(card)
    state._reindex()
    state.turn.score += 1
    state.turn.sets_collected += 1
    bonus = state.config.bonus_for_set(state.turn.sets_collected)
    state.turn.turns_remaining += bonus

    # Spawn cells: traversable, unoccupied, reachable from both agents.
    comp_leader = reachable_from(state.map, state.leader_pose.cell)
    comp_follower = reachable_from(state.map, state.follower_pose.cell)
    occupied = {c.cell for c in state.cards} | {state.leader_pose.cell, state.follower_pose.cell}
    candidates = sorted(comp_leader & comp_follower)
    new_cards: list[Card] = []
    for _ in range(3):
        while True:
            cell = candidates[state.rng.randrange(len(candidates))]
            if cell not in occupied:
                break
        occupied.add(cell)
        cfg = state.config
        card = Card(
            id=state.next_card_id,
            cell=cell,
            color=cfg.colors[state.rng.randrange(len(cfg.colors))],
            shape=cfg.shapes[state.rng.randrange(len(cfg.shapes))],
            count=cfg.counts[state.rng.randrange(len(cfg.counts))],
        )
        state.next_card_id += 1
        state.cards.append(card)
        new_cards.append(card)
    state._reindex()
    return {
        "card_ids": [c.id for c in removed],
        "new_cards": [c.to_dict() for c in new_cards],
        "score": state.turn.score,
        "sets_collected": state.turn.sets_collected,
        "bonus_turns": bonus,
        "turns_remaining": state.turn.turns_remaining,
    }


def _eff_turn_transition(state: GameState, actor: str, inputs: dict, now: float) -> dict:
    state.turn.turns_remaining -= 1
    new_role = FOLLOWER if state.turn.active_role == LEADER else LEADER
    state.turn.active_role = new_role
    state.turn.steps_remaining = state.config.steps_for(new_role)
    state.turn.turn_deadline = now + state.config.seconds_for(new_role)
    state.turn_number += 1
    return {
        "reason": inputs["reason"],
        "active_role": new_role,
        "turns_remaining": state.turn.turns_remaining,
        "steps_remaining": state.turn.steps_remaining,
        "turn_number": state.turn_number,
    }


def _eff_instruction_sent(state: GameState, actor: str, inputs: dict, now: float) -> dict:
    ins = Instruction(
        id=state.next_instruction_id,
        text=inputs["text"],
        status=QUEUED,
        issued_turn=state.turn_number,
    )
    state.next_instruction_id += 1
    state.instructions.append(ins)
    return {
        "id": ins.id,
        "text": ins.text,
        "issued_turn": ins.issued_turn,
        "steps_remaining": state.turn.steps_remaining,
    }


def _eff_instruction_activated(state: GameState, actor: str, inputs: dict, now: float) -> dict:
    if state.active_instruction() is not None:
        raise ValueError("an instruction is already active")
    queued = state.queued_instructions()
    if not queued:
        raise ValueError("no queued instruction to activate")
    queued[0].status = ACTIVE
    return {"id": queued[0].id}


def _eff_instruction_done(state: GameState, actor: str, inputs: dict, now: float) -> dict:
    ins = state.active_instruction()
    if ins is None:
        raise ValueError("no active instruction")
    ins.status = DONE
    return {"id": ins.id, "steps_remaining": state.turn.steps_remaining}


def _eff_instruction_cancelled(state: GameState, actor: str, inputs: dict, now: float) -> dict:
    ids = []
    for ins in state.instructions:
        if ins.status in (ACTIVE, QUEUED):
            ins.status = CANCELLED
            ids.append(ins.id)
    return {"ids": ids, "steps_remaining": state.turn.steps_remaining}


def _eff_timer_expired(state: GameState, actor: str, inputs: dict, now: float) -> dict:
    return {}


def _eff_abandoned(state: GameState, actor: str, inputs: dict, now: float) -> dict:
    state.over = True
    return {"by": inputs["by"], "score": state.turn.score}


def _eff_game_over(state: GameState, actor: str, inputs: dict, now: float) -> dict:
    state.over = True
    return {"score": state.turn.score}


def _eff_scenario_edit(state: GameState, actor: str, inputs: dict, now: float) -> dict:
    apply_edit(state, inputs["edit"])
    return {"edit": inputs["edit"]}


_EFFECTS = {
    EV_MOVE: _eff_move,
    EV_CARD_TOGGLE: _eff_card_toggle,
    EV_SET_COMPLETED: _eff_set_completed,
    EV_TURN_TRANSITION: _eff_turn_transition,
    EV_INSTRUCTION_SENT: _eff_instruction_sent,
    EV_INSTRUCTION_ACTIVATED: _eff_instruction_activated,
    EV_INSTRUCTION_DONE: _eff_instruction_done,
    EV_INSTRUCTION_CANCELLED: _eff_instruction_cancelled,
    EV_TIMER_EXPIRED: _eff_timer_expired,
    EV_ABANDONED: _eff_abandoned,
    EV_GAME_OVER: _eff_game_over,
    EV_SCENARIO_EDIT: _eff_scenario_edit,
}


def apply_edit(state: GameState, edit: dict) -> None:
    """Apply a scenario edit in place: replace tiles, props, cards and/or poses.

    Validation happens before the edit is accepted into the event stream; the
    effect itself applies the recorded edit verbatim so replays stay faithful.
    """
    m = state.map
    if "tiles" in edit or "props" in edit:
        terrain = [list(row) for row in m.terrain]
        elevation = [list(row) for row in m.elevation]
        for tile in edit.get("tiles", []):
            q, r = tile["cell"]
            terrain[r][q] = tile["terrain"]
            elevation[r][q] = tile["elevation"]
        if "props" in edit:
            props = [Prop.from_dict(p) for p in edit["props"]]
        else:
            props = m.props
        state.map = GameMap(
            rows=m.rows,
            cols=m.cols,
            terrain=terrain,
            elevation=elevation,
            props=props,
            initial_cards=m.initial_cards,
            leader_spawn=m.leader_spawn,
            follower_spawn=m.follower_spawn,
            seed=m.seed,
        )
    if "cards" in edit:
        state.cards = [Card.from_dict(c) for c in edit["cards"]]
        state.next_card_id = max((c.id for c in state.cards), default=0) + 1
        state._reindex()
    if "leader_pose" in edit:
        state.leader_pose = _pose_from(edit["leader_pose"])
    if "follower_pose" in edit:
        state.follower_pose = _pose_from(edit["follower_pose"])


def _apply(state: GameState, kind: str, actor: str, inputs: dict, now: float) -> GameEvent:
    payload = _EFFECTS[kind](state, actor, inputs, now)
    return GameEvent(kind=kind, actor=actor, payload=payload)


def _movement_target(state: GameState, actor: str, action_kind: str) -> Optional[HexCoord]:
    pose = state.pose_of(actor)
    if action_kind == FORWARD:
        return neighbor(pose.cell, pose.heading)
    if action_kind == BACKWARD:
        return neighbor(pose.cell, opposite(pose.heading))
    return None  # in-place turn


def _movement_legal(state: GameState, actor: str, action_kind: str) -> bool:
    if state.turn.steps_remaining < 1:
        return False
    target = _movement_target(state, actor, action_kind)
    if target is None:
        return True
    other = state.pose_of(LEADER if actor == FOLLOWER else FOLLOWER).cell
    if target == other:
        return False
    return state.map.step_allowed(state.pose_of(actor).cell, target)


def _run_transition(state: GameState, events: list[GameEvent], reason: str, now: float) -> None:
    events.append(_apply(state, EV_TURN_TRANSITION, SERVER, {"reason": reason}, now))
    if state.turn.turns_remaining <= 0:
        events.append(_apply(state, EV_GAME_OVER, SERVER, {}, now))


def apply_action(state: GameState, actor: str, action: Action, now: float = 0.0):
    """Validate and apply one action; returns (new_state, events).

    Rejections raise ActionRejected and leave the input state untouched. Noop
    is always legal and produces no events.
    """
    if state.over:
        raise ActionRejected("game-over", "the game is over")
    kind = action.kind
    if kind == NOOP:
        return state, []
    if kind not in ACTION_KINDS:
        raise ActionRejected("unknown-action", f"unknown action kind {kind!r}")
    if actor not in ROLES:
        raise ActionRejected("wrong-actor", f"unknown actor {actor!r}")
    active = state.turn.active_role
    if actor != active and not (kind == CANCEL_INSTRUCTIONS and actor == LEADER):
        raise ActionRejected("wrong-actor", f"it is the {active}'s turn")
    if kind == SEND_INSTRUCTION and actor != LEADER:
        raise ActionRejected("wrong-actor", "only the leader sends instructions")
    if kind == CANCEL_INSTRUCTIONS and actor != LEADER:
        raise ActionRejected("wrong-actor", "only the leader cancels instructions")
    if kind == MARK_INSTRUCTION_DONE and actor != FOLLOWER:
        raise ActionRejected("wrong-actor", "only the follower marks instructions done")

    work = state.clone()
    events: list[GameEvent] = []

    if kind in MOVEMENT_KINDS:
        if not _movement_legal(state, actor, kind):
            raise ActionRejected("illegal-move", f"{kind} is blocked")
        moved_event = _apply(work, EV_MOVE, actor, {"action": kind}, now)
        events.append(moved_event)
        target = _movement_target(state, actor, kind)
        if target is not None and work.card_at(target) is not None:
            events.append(_apply(work, EV_CARD_TOGGLE, actor, {}, now))
            selected = work.selected_cards()
            if len(selected) == 3 and is_valid_set(selected):
                events.append(_apply(work, EV_SET_COMPLETED, SERVER, {}, now))
        if work.turn.steps_remaining <= 0:
            _run_transition(work, events, STEPS_EXHAUSTED, now)
    elif kind == END_TURN:
        _run_transition(work, events, END_TURN_ACTION, now)
    elif kind == SEND_INSTRUCTION:
        text = action.text or ""
        if not text.strip():
            raise ActionRejected("empty-instruction-text", "instruction text is empty")
        if len(text) > 1000:
            raise ActionRejected("instruction-too-long", "instruction text exceeds 1000 characters")
        had_active = work.active_instruction() is not None
        events.append(_apply(work, EV_INSTRUCTION_SENT, actor, {"text": text}, now))
        if not had_active:
            events.append(_apply(work, EV_INSTRUCTION_ACTIVATED, SERVER, {}, now))
    elif kind == MARK_INSTRUCTION_DONE:
        if work.active_instruction() is None:
            raise ActionRejected("no-active-instruction", "there is no active instruction")
        events.append(_apply(work, EV_INSTRUCTION_DONE, actor, {}, now))
        if work.queued_instructions():
            events.append(_apply(work, EV_INSTRUCTION_ACTIVATED, SERVER, {}, now))
    elif kind == CANCEL_INSTRUCTIONS:
        if work.active_instruction() is None and not work.queued_instructions():
            raise ActionRejected("nothing-to-cancel", "no instructions to cancel")
        events.append(_apply(work, EV_INSTRUCTION_CANCELLED, actor, {}, now))

    return work, events


def handle_timeout(state: GameState, now: float):
    """Advance the turn when the deadline passed; no-op if it has not."""
    if state.over or now < state.turn.turn_deadline:
        return state, []
    work = state.clone()
    events = [_apply(work, EV_TIMER_EXPIRED, SERVER, {}, now)]
    _run_transition(work, events, TIMER_EXPIRED, now)
    return work, events


def mark_abandoned(state: GameState, by: Optional[str]):
    if state.over:
        return state, []
    work = state.clone()
    events = [_apply(work, EV_ABANDONED, SERVER, {"by": by}, 0.0)]
    return work, events


def make_scenario_edit(state: GameState, edit: dict):
    """Apply a validated scenario edit as an event (validation is the caller's)."""
    work = state.clone()
    events = [_apply(work, EV_SCENARIO_EDIT, SERVER, {"edit": edit}, 0.0)]
    return work, events


def build_game_start(game_map: GameMap, config: GameConfig, seed: int, scenario: Optional[dict] = None) -> GameEvent:
    return GameEvent(
        kind=EV_GAME_START,
        actor=SERVER,
        payload={"map": game_map.to_dict(), "config": config.to_dict(), "seed": seed, "scenario": scenario},
    )


def _overlay_scenario(state: GameState, scenario: dict) -> None:
    if "leader_pose" in scenario:
        state.leader_pose = _pose_from(scenario["leader_pose"])
    if "follower_pose" in scenario:
        state.follower_pose = _pose_from(scenario["follower_pose"])
    if "cards" in scenario:
        state.cards = [Card.from_dict(c) for c in scenario["cards"]]
        state.next_card_id = max((c.id for c in state.cards), default=0) + 1
        state._reindex()
    if "turn" in scenario:
        t = scenario["turn"]
        state.turn.active_role = t["active_role"]
        state.turn.turns_remaining = t["turns_remaining"]
        state.turn.steps_remaining = t["steps_remaining"]
        state.turn.score = t["score"]
        state.turn.sets_collected = t["sets_collected"]
        state.turn.turn_deadline = state.config.seconds_for(t["active_role"])
        state.over = t["turns_remaining"] <= 0
    if "instructions" in scenario:
        state.instructions = [Instruction.from_dict(i) for i in scenario["instructions"]]
        state.next_instruction_id = max((i.id for i in state.instructions), default=0) + 1
    if "turn_number" in scenario:
        state.turn_number = scenario["turn_number"]


def start_game(game_map: GameMap, config: GameConfig, seed: int, scenario: Optional[dict] = None):
    """Initial state plus its events (game_start, and game_over if born finished)."""
    start = build_game_start(game_map, config, seed, scenario)
    state = replay_step(None, start)
    events = [start]
    if state.over:
        work = state.clone()
        events.append(_apply(work, EV_GAME_OVER, SERVER, {}, 0.0))
        state = work
    return state, events


def replay_step(state: Optional[GameState], event: GameEvent) -> GameState:
    """Fold one recorded event; recomputes derived payload fields and verifies."""
    if event.kind == EV_GAME_START:
        if state is not None:
            raise ReplayError(event.seq, "game_start after the game began")
        payload = event.payload
        new_state = new_game(
            GameMap.from_dict(payload["map"]),
            GameConfig.from_dict(payload["config"]),
            payload["seed"],
            spawn_card_overlap_ok=bool(payload.get("scenario")),
        )
        if payload.get("scenario"):
            _overlay_scenario(new_state, payload["scenario"])
        return new_state
    if state is None:
        raise ReplayError(event.seq, f"log must begin with {EV_GAME_START}, got {event.kind}")
    if event.kind not in _EFFECTS:
        raise ReplayError(event.seq, f"unknown event kind {event.kind!r}")
    inputs = {key: event.payload[key] for key in _EVENT_INPUTS[event.kind] if key in event.payload}
    work = state.clone()
    try:
        recomputed = _apply(work, event.kind, event.actor, inputs, now=0.0)
    except Exception as exc:  # corrupt logs must fail loudly, not crash oddly
        raise ReplayError(event.seq, f"effect failed: {exc}") from exc
    if recomputed.payload != event.payload:
        raise ReplayError(
            event.seq,
            f"recorded payload diverges for {event.kind}: {event.payload} != {recomputed.payload}",
        )
    return work


def replay_log(events: Iterable[GameEvent]) -> GameState:
    """Left-fold a recorded event sequence into the state it produced."""
    state: Optional[GameState] = None
    any_events = False
    for event in events:
        any_events = True
        state = replay_step(state, event)
    if not any_events or state is None:
        raise ReplayError(None, "empty event log")
    return state


# ---------------------------------------------------------------------------
# Observations and legality
# ---------------------------------------------------------------------------


@dataclass
class Observation:
    role: str
    rows: int
    cols: int
    cells: list[HexCoord]
    tiles: list[dict]
    props: list[dict]
    cards: list[dict]
    own_pose: Pose
    other_pose: Optional[Pose]
    turn: dict
    instructions: list[dict]
    selected_invalid: bool
    over: bool
    config: dict

    def to_dict(self) -> dict:
        return {
            "role": self.role,
            "rows": self.rows,
            "cols": self.cols,
            "cells": sorted([c.q, c.r] for c in self.cells),
            "tiles": self.tiles,
            "props": self.props,
            "cards": self.cards,
            "own_pose": _pose_dict(self.own_pose),
            "other_pose": _pose_dict(self.other_pose) if self.other_pose else None,
            "turn": self.turn,
            "instructions": self.instructions,
            "selected_invalid": self.selected_invalid,
            "over": self.over,
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Observation":
        return cls(
            role=d["role"],
            rows=d["rows"],
            cols=d["cols"],
            cells=[HexCoord(c[0], c[1]) for c in d["cells"]],
            tiles=d["tiles"],
            props=d["props"],
            cards=d["cards"],
            own_pose=_pose_from(d["own_pose"]),
            other_pose=_pose_from(d["other_pose"]) if d["other_pose"] else None,
            turn=d["turn"],
            instructions=d["instructions"],
            selected_invalid=d["selected_invalid"],
            over=d["over"],
            config=d["config"],
        )


def observe(state: GameState, role: str, now: Optional[float] = None) -> Observation:
    """Role-filtered view: full overhead for the leader, fogged cone for the follower."""
    selected = state.selected_cards()
    selected_invalid = len(selected) >= 3 and not is_valid_set(selected)
    turn = state.turn.to_dict()
    turn["time_remaining"] = max(0.0, state.turn.turn_deadline - now) if now is not None else None

    if role == LEADER:
        cells = list(state.map.all_cells())
        tiles = state.map.tiles_as_dicts()
        props = [p.to_dict() for p in state.map.props]
        cards = [c.to_dict() for c in sorted(state.cards, key=lambda c: c.id)]
        own, other = state.leader_pose, state.follower_pose
        instructions = [i.to_dict() for i in state.instructions]
    elif role == FOLLOWER:
        visible = visible_set(state.map, state.follower_pose, state.config.fov_degrees, state.config.fog_range)
        cells = sorted(visible)
        tiles = [
            {"cell": [c.q, c.r], "terrain": state.map.terrain_at(c), "elevation": state.map.elevation_at(c)}
            for c in cells
        ]
        props = [p.to_dict() for p in state.map.props if p.cell in visible]
        cards = []
        for card in sorted(state.cards, key=lambda c: c.id):
            if card.cell not in visible:
                continue
            if state.config.hide_card_patterns and not card.selected:
                cards.append({"id": card.id, "cell": [card.cell.q, card.cell.r], "selected": card.selected})
            else:
                cards.append(card.to_dict())
        own = state.follower_pose
        other = state.leader_pose if state.leader_pose.cell in visible else None
        instructions = [i.to_dict() for i in state.instructions if i.status in (ACTIVE, DONE, CANCELLED)]
    else:
        raise ValueError(f"unknown role {role!r}")

    return Observation(
        role=role,
        rows=state.map.rows,
        cols=state.map.cols,
        cells=cells,
        tiles=tiles,
        props=props,
        cards=cards,
        own_pose=own,
        other_pose=other,
        turn=turn,
        instructions=instructions,
        selected_invalid=selected_invalid,
        over=state.over,
        config=state.config.to_dict(),
    )


def legal_actions(state: GameState, role: str) -> set[str]:
    """Exactly the action kinds apply_action would accept for this actor now."""
    if state.over:
        return set()
    legal = {NOOP}
    active = state.turn.active_role
    if role == LEADER and (state.active_instruction() or state.queued_instructions()):
        legal.add(CANCEL_INSTRUCTIONS)
    if role != active:
        return legal
    legal.add(END_TURN)
    for kind in MOVEMENT_KINDS:
        if _movement_legal(state, role, kind):
            legal.add(kind)
    if role == LEADER:
        legal.add(SEND_INSTRUCTION)
    if role == FOLLOWER and state.active_instruction() is not None:
        legal.add(MARK_INSTRUCTION_DONE)
    return legal
