"""Deterministic scripted agents for self-play and human-vs-bot games.

The leader plans card triples over its full view and sends instructions in a
small machine-readable grammar; the follower executes them inside its fogged
cone and marks them done. Both bots only ever emit actions that the rules
accept, and both are pure functions of the observation stream, so self-play is
reproducible action for action.

Instruction grammar (case-insensitive, ';'-separated):
    turn left | turn right | forward N | backward N | goto Q R | card Q R | wait
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Optional

from .gamecore import (
    ACTIVE,
    CANCEL_INSTRUCTIONS,
    END_TURN,
    FOLLOWER,
    LEADER,
    MARK_INSTRUCTION_DONE,
    NOOP,
    QUEUED,
    SEND_INSTRUCTION,
    Action,
    Observation,
    is_valid_set,
)
from .cards import Card
from .hexgrid import (
    HexCoord,
    Pose,
    bfs_distances,
    neighbor,
    opposite,
    shortest_path,
    visible_set,
)


class InstructionParseError(Exception):
    pass


@dataclass
class Command:
    op: str  # turn | move | goto | card | wait
    arg: Optional[str] = None  # turn direction or move kind
    n: int = 0  # remaining repetitions for turn/move
    cell: Optional[HexCoord] = None  # goto/card target


_TURN_RE = re.compile(r"^turn\s+(left|right)$")
_MOVE_RE = re.compile(r"^(forward|backward)\s+(\d+)$")
_CELL_RE = re.compile(r"^(goto|card)\s+(-?\d+)\s+(-?\d+)$")


def parse_instruction(text: str) -> list[Command]:
    """Parse the bot grammar; raises InstructionParseError on free-form text."""
    commands: list[Command] = []
    for part in text.lower().split(";"):
        part = " ".join(part.split())
        if not part:
            continue
        if part == "wait":
            commands.append(Command("wait"))
            continue
        m = _TURN_RE.match(part)
        if m:
            commands.append(Command("turn", arg=m.group(1), n=1))
            continue
        m = _MOVE_RE.match(part)
        if m:
            n = int(m.group(2))
            if n < 1:
                raise InstructionParseError(f"repeat count must be >= 1: {part!r}")
            commands.append(Command("move", arg=m.group(1), n=n))
            continue
        m = _CELL_RE.match(part)
        if m:
            commands.append(Command(m.group(1), cell=HexCoord(int(m.group(2)), int(m.group(3)))))
            continue
        raise InstructionParseError(f"unparseable command: {part!r}")
    if not commands:
        raise InstructionParseError("empty instruction")
    return commands


def _approach_dist(world, flood: dict[HexCoord, int], cell: HexCoord) -> Optional[int]:
    """Steps to enter a card cell given a flood that treats cards as walls."""
    best = None
    for h in range(6):
        n = neighbor(cell, h)
        d = flood.get(n)
        if d is None or not world.step_allowed(n, cell):
            continue
        if best is None or d + 1 < best:
            best = d + 1
    return best


def _final_cell(text: str) -> Optional[HexCoord]:
    """Target cell of an instruction's last goto/card command, if it parses."""
    try:
        commands = parse_instruction(text)
    except InstructionParseError:
        return None
    for cmd in reversed(commands):
        if cmd.cell is not None:
            return cmd.cell
    return None


class ObsWorld:
    """Map-like view built from an observation; unknown cells are impassable."""

    def __init__(self, obs: Observation):
        self.rows = obs.rows
        self.cols = obs.cols
        self._tiles = {HexCoord(*t["cell"]): (t["terrain"], t["elevation"]) for t in obs.tiles}
        self._props = {HexCoord(*p["cell"]) for p in obs.props}

    def in_bounds(self, cell: HexCoord) -> bool:
        return 0 <= cell.q < self.cols and 0 <= cell.r < self.rows

    def known(self, cell: HexCoord) -> bool:
        return cell in self._tiles

    def traversable(self, cell: HexCoord) -> bool:
        tile = self._tiles.get(cell)
        return tile is not None and tile[0] != "water" and cell not in self._props

    def step_allowed(self, a: HexCoord, b: HexCoord) -> bool:
        ta = self._tiles.get(a)
        tb = self._tiles.get(b)
        if ta is None or tb is None or not self.traversable(b):
            return False
        if ta[1] == tb[1]:
            return True
        return ta[0] == "ramp" or tb[0] == "ramp"


def _card_cells(obs: Observation) -> dict[HexCoord, dict]:
    return {HexCoord(*c["cell"]): c for c in obs.cards}


def _step_toward(world, own: Pose, target: HexCoord, obs: Observation,
                 blocked: frozenset[HexCoord]) -> Optional[Action]:
    """First action of a minimal-action plan to target, or None when there is none.

    Moving and turning both cost one step, so the search runs over
    (cell, heading) states rather than cells; this avoids zigzag paths that
    burn the budget on needless turns.
    """
    if own.cell == target:
        return None
    from collections import deque

    start = (own.cell, own.heading)
    prev: dict[tuple, tuple] = {start: (None, None)}
    frontier = deque([start])
    while frontier:
        state = frontier.popleft()
        cell, h = state
        candidates = (
            ("forward", (neighbor(cell, h), h)),
            ("backward", (neighbor(cell, opposite(h)), h)),
            ("turn_left", (cell, (h + 1) % 6)),
            ("turn_right", (cell, (h - 1) % 6)),
        )
        for kind, nxt in candidates:
            if nxt in prev:
                continue
            if nxt[0] != cell and (nxt[0] in blocked or not world.step_allowed(cell, nxt[0])):
                continue
            prev[nxt] = (state, kind)
            if nxt[0] == target:
                cur, act = state, kind
                while prev[cur][0] is not None:
                    cur, act = prev[cur]
                return Action(act)
            frontier.append(nxt)
    return None


class FollowerBot:
    """Executes the active instruction inside the visible cone; Noops off-turn."""

    def __init__(self):
        self._commands: list[Command] = []
        self._instruction_id: Optional[int] = None

    def decide(self, obs: Observation) -> Action:
        if obs.over or obs.turn["active_role"] != FOLLOWER:
            return Action(NOOP)
        active = next((i for i in obs.instructions if i["status"] == ACTIVE), None)
        if active is None:
            self._commands = []
            return Action(END_TURN)
        if active["id"] != self._instruction_id:
            self._instruction_id = active["id"]
            try:
                self._commands = parse_instruction(active["text"])
            except InstructionParseError:
                self._commands = [Command("wait")]
        while self._commands:
            cmd = self._commands[0]
            action = self._step_command(cmd, obs)
            if action is not None:
                return action
            if self._commands and self._commands[0] is cmd:
                self._commands.pop(0)  # command complete; abandon already emptied the list
        return Action(MARK_INSTRUCTION_DONE)

    def _abandon(self) -> None:
        self._commands = []

    def _step_command(self, cmd: Command, obs: Observation) -> Optional[Action]:
        world = ObsWorld(obs)
        own = obs.own_pose
        other = obs.other_pose.cell if obs.other_pose else None
        if cmd.op == "wait":
            cmd.op = "waited"
            return Action(END_TURN)
        if cmd.op == "waited":
            return None
        if cmd.op == "turn":
            if cmd.n <= 0:
                return None
            cmd.n -= 1
            return Action("turn_left" if cmd.arg == "left" else "turn_right")
        if cmd.op == "move":
            if cmd.n <= 0:
                return None
            target = neighbor(own.cell, own.heading if cmd.arg == "forward" else opposite(own.heading))
            if not world.step_allowed(own.cell, target) or target == other:
                self._abandon()
                return None
            cmd.n -= 1
            return Action("forward" if cmd.arg == "forward" else "backward")
        if cmd.op in ("goto", "card"):
            target = cmd.cell
            if own.cell == target:
                return None
            if not world.in_bounds(target) or not world.known(target):
                self._abandon()  # outside the visible region: give up, leader reissues
                return None
            cards = _card_cells(obs)
            blocked = frozenset(
                {c for c in cards if c != target} | ({other} if other else set())
            )
            action = _step_toward(world, own, target, obs, blocked)
            if action is None:
                self._abandon()
                return None
            return action
        raise AssertionError(f"unknown command op {cmd.op}")


@dataclass
class LeaderPlan:
    triple_ids: tuple[int, ...] = ()
    leader_targets: list[HexCoord] = field(default_factory=list)
    follower_targets: list[HexCoord] = field(default_factory=list)
    instruction: Optional[str] = None


class LeaderBot:
    """Plans valid triples over the full view, splits work, instructs the follower.

    The chosen triple is sticky: once committed it is kept until completed or
    infeasible, so the follower's in-flight work is never silently discarded.
    Cards are assigned to whichever agent needs fewer turns (path length over
    per-turn budget, ties to the follower), minimizing the slower agent's time.
    """

    def __init__(self):
        self._triple: Optional[tuple[int, ...]] = None
        self._intended: dict[str, HexCoord] = {}  # instruction text -> final target

    def decide(self, obs: Observation) -> Action:
        if obs.over or obs.turn["active_role"] != LEADER:
            return Action(NOOP)
        plan = self.plan(obs)
        world = ObsWorld(obs)
        outstanding = [i for i in obs.instructions if i["status"] in (ACTIVE, QUEUED)]
        desired = plan.follower_targets
        covered: list[HexCoord] = []
        stale = False
        for ins in outstanding:
            target = self._intended.get(ins["text"], _final_cell(ins["text"]))
            if target is None or target not in desired:
                stale = True
                break
            covered.append(target)
        if outstanding and stale:
            self._intended.clear()
            return Action(CANCEL_INSTRUCTIONS)
        missing = [t for t in desired if t not in covered]
        if missing:
            target = missing[0]
            if outstanding:
                text = f"card {target.q} {target.r}"
            else:
                text = self._compose_instruction(obs, world, obs.other_pose, target)
            if text:
                self._intended[text] = target
                return Action(SEND_INSTRUCTION, text=text)
        if plan.leader_targets:
            cards = _card_cells(obs)
            target = plan.leader_targets[0]
            other = obs.other_pose.cell if obs.other_pose else None
            blocked = frozenset({c for c in cards if c != target} | ({other} if other else set()))
            action = _step_toward(world, obs.own_pose, target, obs, blocked)
            if action is not None:
                return action
        return Action(END_TURN)

    # -- planning ----------------------------------------------------------

    def plan(self, obs: Observation) -> LeaderPlan:
        world = ObsWorld(obs)
        cards = sorted([Card.from_dict(dict(c)) for c in obs.cards], key=lambda c: c.id)
        by_id = {c.id: c for c in cards}
        own = obs.own_pose
        follower = obs.other_pose
        if follower is None:
            return LeaderPlan()
        budgets = (obs.config["leader_steps_per_turn"], obs.config["follower_steps_per_turn"])
        # Floods treat every card as a wall; a card's own distance is then one
        # more than its best approach neighbor. Keeps planning consistent with
        # execution, where agents never walk over cards they are not grabbing.
        all_cards = frozenset(c.cell for c in cards)
        flood_leader = bfs_distances(world, own.cell, blocked=all_cards | {follower.cell})
        flood_follower = bfs_distances(world, follower.cell, blocked=all_cards | {own.cell})
        dist_leader = {c.cell: _approach_dist(world, flood_leader, c.cell) for c in cards}
        dist_follower = {c.cell: _approach_dist(world, flood_follower, c.cell) for c in cards}
        selected = [c for c in cards if c.selected]
        selected_ids = {c.id for c in selected}

        committed = None
        if self._triple and all(i in by_id for i in self._triple):
            triple = [by_id[i] for i in self._triple]
            if is_valid_set(triple) and selected_ids <= set(self._triple):
                split = self._partition(triple, selected_ids, dist_leader, dist_follower, budgets)
                if split[0] is not None:
                    committed = (self._triple, split)
        if committed is None:
            committed = self._choose_triple(cards, selected_ids, dist_leader, dist_follower, budgets)
        if committed is None:
            self._triple = None
            # No completable triple: deselect strays, otherwise sidle up to a card.
            if selected:
                leader_share, follower_share = self._assign(selected, dist_leader, dist_follower)
                return self._finish_plan(obs, world, (), leader_share, follower_share,
                                         dist_leader, dist_follower)
            approach = self._nearest_card_cell(cards, flood_leader)
            plan = LeaderPlan()
            if approach is not None:
                plan.leader_targets = [approach]
            return plan

        ids, (_, leader_share, follower_share) = committed
        self._triple = tuple(sorted(ids))
        return self._finish_plan(obs, world, self._triple, leader_share, follower_share,
                                 dist_leader, dist_follower)

    def _choose_triple(self, cards, selected_ids, dist_leader, dist_follower, budgets):
        best = None
        for triple in itertools.combinations(cards, 3):
            if not is_valid_set(triple):
                continue
            ids = tuple(sorted(c.id for c in triple))
            if not selected_ids <= set(ids):
                continue
            split = self._partition(triple, selected_ids, dist_leader, dist_follower, budgets)
            if split[0] is None:
                continue
            key = (split[0], ids)
            if best is None or key < best[0]:
                best = (key, ids, split)
        if best is None:
            return None
        return best[1], best[2]

    # rough surcharge for the turning steps a straight path estimate misses
    TURN_OVERHEAD = 1.25

    def _partition(self, triple, selected_ids, dist_leader, dist_follower, budgets):
        """Assign each unselected card to the agent that reaches it in fewer
        turns; the cost of a split is the slower agent's total turn count,
        with travel between a share's cards chained greedily."""
        leader_budget, follower_budget = budgets
        leader_share: list[Card] = []
        follower_share: list[Card] = []
        for card in triple:
            if card.id in selected_ids:
                continue  # already toggled; nobody needs to walk there
            dl = dist_leader.get(card.cell)
            df = dist_follower.get(card.cell)
            if dl is None and df is None:
                return None, None, None
            tl = dl / leader_budget if dl is not None else float("inf")
            tf = df / follower_budget if df is not None else float("inf")
            if tf <= tl:
                follower_share.append(card)
            else:
                leader_share.append(card)
        leader_steps = self._chain_steps(leader_share, dist_leader)
        follower_steps = self._chain_steps(follower_share, dist_follower)
        cost = self.TURN_OVERHEAD * max(
            leader_steps / leader_budget, follower_steps / follower_budget
        )
        return cost, leader_share, follower_share

    @staticmethod
    def _chain_steps(share, dist_from_agent) -> float:
        if not share:
            return 0.0
        ordered = sorted(share, key=lambda c: (dist_from_agent.get(c.cell, 1 << 30), c.id))
        total = float(dist_from_agent.get(ordered[0].cell, 1 << 30))
        for a, b in zip(ordered, ordered[1:]):
            dq = a.cell.q - b.cell.q
            dr = a.cell.r - b.cell.r
            total += (abs(dq) + abs(dr) + abs(dq + dr)) / 2
        return total

    def _assign(self, cards, dist_leader, dist_follower):
        leader_share, follower_share = [], []
        for card in cards:
            dl = dist_leader.get(card.cell)
            df = dist_follower.get(card.cell)
            if df is None and dl is None:
                continue
            if dl is None or (df is not None and df <= dl):
                follower_share.append(card)
            else:
                leader_share.append(card)
        return leader_share, follower_share

    def _nearest_card_cell(self, cards, dist_leader) -> Optional[HexCoord]:
        best = None
        for card in cards:
            for h in range(6):
                cell = neighbor(card.cell, h)
                d = dist_leader.get(cell)
                if d is None:
                    continue
                key = (d, cell.q, cell.r)
                if best is None or key < best[0]:
                    best = (key, cell)
        return best[1] if best else None

    def _finish_plan(self, obs, world, triple_ids, leader_share, follower_share,
                     dist_leader, dist_follower) -> LeaderPlan:
        plan = LeaderPlan(triple_ids=tuple(sorted(triple_ids)))
        plan.leader_targets = [
            c.cell for c in sorted(leader_share, key=lambda c: (dist_leader.get(c.cell, 1 << 30), c.id))
        ]
        ordered = sorted(follower_share, key=lambda c: (dist_follower.get(c.cell, 1 << 30), c.id))
        plan.follower_targets = [c.cell for c in ordered]
        if plan.follower_targets:
            plan.instruction = self._compose_instruction(obs, world, obs.other_pose, plan.follower_targets[0])
        return plan

    def _compose_instruction(self, obs, world, follower_pose: Pose, target: HexCoord) -> Optional[str]:
        """Turns to face the route, a waypoint the follower can already see when
        the target is beyond its cone, then the card grab itself. Later parts
        are re-checked by the follower against its own fresh view."""
        cards = _card_cells(obs)
        blocked = frozenset({c for c in cards if c != target} | {obs.own_pose.cell})
        path = shortest_path(world, follower_pose.cell, target, blocked=blocked)
        if path is None or len(path) < 2:
            return None
        want = next(h for h in range(6) if neighbor(path[0], h) == path[1])
        diff = (want - follower_pose.heading) % 6
        if diff <= 3:
            turns = ["turn left"] * diff
        else:
            turns = ["turn right"] * (6 - diff)
        cfg = obs.config
        cone = visible_set(world, Pose(follower_pose.cell, want), cfg["fov_degrees"], cfg["fog_range"])
        reach = 0
        for i in range(1, len(path)):
            if path[i] in cone:
                reach = i
            else:
                break
        if reach == 0:
            return None
        parts = turns
        if path[reach] != target:
            parts = parts + [f"goto {path[reach].q} {path[reach].r}"]
        parts = parts + [f"card {target.q} {target.r}"]
        return "; ".join(parts)
