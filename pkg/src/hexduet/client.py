"""Headless programmatic clients: networked play and a fast in-process engine.

Both modes expose the same blocking step API: submit an action, block until
this role's next decision point (its turn, with a fresh observation) or game
over. Noop submits nothing and just waits, which is how an agent idles through
the opponent's turn. Rejections come back in-band without advancing state.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Callable, Optional

from .gamecore import (
    FOLLOWER,
    LEADER,
    NOOP,
    Action,
    ActionRejected,
    GameConfig,
    GameEvent,
    Observation,
    apply_action,
    handle_timeout,
    observe,
    start_game,
    state_hash,
)
from .mapgen import GameMap
from . import protocol
from .protocol import WireMessage, decode, encode


class SessionError(Exception):
    pass


class SessionTimeout(SessionError):
    pass


class GameOverError(SessionError):
    """step() was called after the game-over result was already delivered."""


@dataclass
class StepResult:
    observation: Observation
    turn: dict
    game_over: bool
    score: int
    rejected: bool = False
    reject_reason: Optional[str] = None
    abandoned: bool = False


# ---------------------------------------------------------------------------
# Local (in-process) mode
# ---------------------------------------------------------------------------


class LocalGame:
    """One engine shared by a leader and a follower session.

    The injected clock returns game-time seconds; the default never advances,
    so turn timers only fire in tests that drive the clock by hand. With
    record=True every event is captured and the log replays to the live hash.
    """

    def __init__(self, game_map: GameMap, config: GameConfig, seed: int,
                 record: bool = False, clock: Optional[Callable[[], float]] = None):
        self.game_id = f"local-{uuid.uuid4().hex[:8]}"
        self.clock = clock or (lambda: 0.0)
        self.record = record
        self._cond = threading.Condition()
        self._seq = 0
        self.events: list[GameEvent] = []
        state, events = start_game(game_map, config, seed)
        self.state = state
        self._capture(events)

    def _capture(self, events) -> None:
        for event in events:
            event.game_id = self.game_id
            event.seq = self._seq
            event.wall_time = 0.0
            self._seq += 1
            if self.record:
                self.events.append(event)

    def sessions(self) -> tuple["LocalSession", "LocalSession"]:
        return LocalSession(self, LEADER), LocalSession(self, FOLLOWER)

    def final_hash(self) -> str:
        with self._cond:
            return state_hash(self.state)

    def _maybe_timeout(self, now: float) -> None:
        state, events = handle_timeout(self.state, now)
        if events:
            self.state = state
            self._capture(events)
            self._cond.notify_all()

    def poke_clock(self) -> None:
        """Re-check the turn deadline against the injected clock (test hook)."""
        with self._cond:
            if not self.state.over:
                self._maybe_timeout(self.clock())


class LocalSession:
    def __init__(self, game: LocalGame, role: str):
        self._game = game
        self.role = role
        self.game_id = game.game_id
        self._finished = False

    def observation(self) -> Observation:
        with self._game._cond:
            return observe(self._game.state, self.role)

    def step(self, action: Action) -> StepResult:
        game = self._game
        with game._cond:
            if self._finished:
                raise GameOverError("the game is over")
            if action.kind != NOOP and not game.state.over:
                now = game.clock()
                game._maybe_timeout(now)
                if not game.state.over:
                    try:
                        state, events = apply_action(game.state, self.role, action, now=now)
                    except ActionRejected as exc:
                        obs = observe(game.state, self.role)
                        return StepResult(
                            observation=obs,
                            turn=obs.turn,
                            game_over=False,
                            score=game.state.turn.score,
                            rejected=True,
                            reject_reason=exc.code,
                        )
                    game.state = state
                    game._capture(events)
                    game._cond.notify_all()
            while not (game.state.over or game.state.turn.active_role == self.role):
                game._cond.wait()
            obs = observe(game.state, self.role)
            if game.state.over:
                self._finished = True
            return StepResult(
                observation=obs,
                turn=obs.turn,
                game_over=game.state.over,
                score=game.state.turn.score,
            )

    def close(self) -> None:
        with self._game._cond:
            self._game._cond.notify_all()


def local_game(game_map: GameMap, config: GameConfig, seed: int,
               record: bool = False) -> tuple[LocalSession, LocalSession]:
    """In-process leader and follower sessions over one deterministic engine."""
    return LocalGame(game_map, config, seed, record=record).sessions()


# ---------------------------------------------------------------------------
# Networked mode (sync websocket client)
# ---------------------------------------------------------------------------


class NetSession:
    """Blocking networked session; one websocket per player per game."""

    def __init__(self, ws, role: str, game_id: str, obs: Observation):
        self._ws = ws
        self.role = role
        self.game_id = game_id
        self._obs = obs
        self._out_seq = 0
        self._finished = False
        self._over_result: Optional[StepResult] = None

    # -- connection --------------------------------------------------------

    @classmethod
    def connect(cls, endpoint: str, lobby_id: str, display_name: str = "bot",
                leader_qualified: bool = True, recent_scores: tuple = (),
                is_bot: bool = True, record: bool = True,
                timeout: float = 30.0) -> "NetSession":
        from websockets.sync.client import connect as ws_connect

        url = endpoint.rstrip("/") + f"/ws/{lobby_id}"
        try:
            ws = ws_connect(url, open_timeout=timeout, close_timeout=2.0)
        except Exception as exc:
            raise SessionTimeout(f"could not reach {url}: {exc}") from exc
        session = cls.__new__(cls)
        session._ws = ws
        session._out_seq = 0
        session._finished = False
        session._over_result = None
        session._send(
            protocol.JOIN_LOBBY,
            {
                "lobby_id": lobby_id,
                "display_name": display_name,
                "role_qualifications": {
                    "leader_qualified": leader_qualified,
                    "recent_scores": list(recent_scores),
                },
                "is_bot": is_bot,
                "record": record,
            },
        )
        role = game_id = None
        obs = None
        deadline = time.monotonic() + timeout
        while obs is None or role is None:
            msg = session._recv(deadline - time.monotonic())
            if msg.kind == protocol.JOINED:
                continue
            if msg.kind == protocol.PAIRED:
                role = msg.payload["role"]
                game_id = msg.payload["game_id"]
            elif msg.kind == protocol.STATE_SYNC:
                obs = Observation.from_dict(msg.payload["observation"])
            elif msg.kind == protocol.REJECTED:
                ws.close()
                raise SessionError(f"join rejected: {msg.payload['reason']}")
            elif msg.kind == protocol.ERROR:
                ws.close()
                raise SessionError(f"{msg.payload['code']}: {msg.payload['message']}")
        session.role = role
        session.game_id = game_id
        session._obs = obs
        return session

    def _send(self, kind: str, payload: dict) -> int:
        self._out_seq += 1
        self._ws.send(encode(WireMessage(kind=kind, seq=self._out_seq, payload=payload)).decode("utf-8"))
        return self._out_seq

    def _recv(self, timeout: Optional[float]) -> WireMessage:
        if timeout is not None and timeout <= 0:
            raise SessionTimeout("timed out waiting for the server")
        raw = self._ws.recv(timeout=timeout)
        msg = decode(raw)
        if msg.kind == protocol.PING:
            self._send(protocol.PONG, {})
        return msg

    # -- gameplay ------------------------------------------------------------

    def observation(self) -> Observation:
        return self._obs

    def step(self, action: Action, timeout: float = 120.0) -> StepResult:
        if self._finished:
            raise GameOverError("the game is over")
        if self._over_result is not None:
            self._finished = True
            return self._over_result
        # A noop is also sent: the server acks it with a fresh observation, so a
        # yielding agent never acts on a stale view (scenario edits, timeouts).
        sent_seq = self._send(protocol.PLAYER_ACTION, {"action": action.to_dict()})
        acked = False
        deadline = time.monotonic() + timeout
        try:
            while True:
                if acked and self._obs.turn["active_role"] == self.role and not self._obs.over:
                    return self._result(game_over=False)
                msg = self._recv(deadline - time.monotonic())
                if msg.kind == protocol.STATE_SYNC:
                    self._obs = Observation.from_dict(msg.payload["observation"])
                    if msg.payload["ack"] is not None and sent_seq is not None and msg.payload["ack"] >= sent_seq:
                        acked = True
                elif msg.kind == protocol.REJECTED:
                    if sent_seq is not None and msg.payload.get("ack") == sent_seq:
                        result = self._result(game_over=False)
                        result.rejected = True
                        result.reject_reason = msg.payload["reason"]
                        return result
                elif msg.kind == protocol.GAME_OVER:
                    self._finished = True
                    return StepResult(
                        observation=self._obs,
                        turn=self._obs.turn,
                        game_over=True,
                        score=msg.payload["score"],
                        abandoned=msg.payload["abandoned"],
                    )
                elif msg.kind == protocol.ERROR:
                    raise SessionError(f"{msg.payload['code']}: {msg.payload['message']}")
                # turn_update / instruction_update carry no extra state beyond the sync
        except SessionTimeout:
            raise
        except SessionError:
            raise
        except Exception:
            # connection dropped: the game is gone, surface as abandonment
            self._finished = True
            return StepResult(
                observation=self._obs,
                turn=self._obs.turn,
                game_over=True,
                score=self._obs.turn.get("score", 0),
                abandoned=True,
            )

    def _result(self, game_over: bool) -> StepResult:
        return StepResult(
            observation=self._obs,
            turn=self._obs.turn,
            game_over=game_over,
            score=self._obs.turn.get("score", 0),
        )

    def close(self) -> None:
        try:
            self._ws.close()
        except Exception:
            pass


# ---------------------------------------------------------------------------
# Drivers and the environment-style wrapper
# ---------------------------------------------------------------------------


def drive_session(session, bot, strict: bool = True, max_steps: int = 200_000) -> StepResult:
    """Run one bot over a session until game over; returns the final result."""
    obs = session.observation()
    result = None
    for _ in range(max_steps):
        action = bot.decide(obs)
        result = session.step(action)
        if result.rejected and strict:
            raise SessionError(
                f"{session.role} bot submitted an illegal action: {action.kind} -> {result.reject_reason}"
            )
        obs = result.observation
        if result.game_over:
            return result
    raise SessionError("game did not finish within the step limit")


def run_bot_pair(leader_session, follower_session, leader_bot, follower_bot,
                 timeout: float = 300.0) -> tuple[StepResult, StepResult]:
    """Drive both sessions to completion on two threads."""
    results: dict[str, StepResult] = {}
    errors: list[BaseException] = []

    def run(name, session, bot):
        try:
            results[name] = drive_session(session, bot)
        except BaseException as exc:  # surfaces in the caller
            errors.append(exc)

    threads = [
        threading.Thread(target=run, args=("leader", leader_session, leader_bot), daemon=True),
        threading.Thread(target=run, args=("follower", follower_session, follower_bot), daemon=True),
    ]
    deadline = time.monotonic() + timeout
    for t in threads:
        t.start()
    for t in threads:
        while t.is_alive():
            t.join(0.2)
            if errors:
                raise errors[0]  # one bot failed; don't sit out the other's block
            if time.monotonic() > deadline:
                raise SessionTimeout("bot pair did not finish in time")
    if errors:
        raise errors[0]
    return results["leader"], results["follower"]


class SingleAgentEnv:
    """reset/step wrapper over the local engine controlling one role.

    The reward is the per-step score delta; done mirrors game over. The other
    role is driven by the given opponent bot on a background thread.
    """

    def __init__(self, game_map: GameMap, config: GameConfig, role: str = FOLLOWER,
                 opponent_factory: Optional[Callable[[], object]] = None):
        from .agents import FollowerBot, LeaderBot

        self._map = game_map
        self._config = config
        self.role = role
        if opponent_factory is None:
            opponent_factory = LeaderBot if role == FOLLOWER else FollowerBot
        self._opponent_factory = opponent_factory
        self._session: Optional[LocalSession] = None
        self._thread: Optional[threading.Thread] = None
        self._last_score = 0

    def reset(self, seed: int = 0) -> Observation:
        self.close()
        game = LocalGame(self._map, self._config, seed)
        leader, follower = game.sessions()
        mine, theirs = (follower, leader) if self.role == FOLLOWER else (leader, follower)
        self._session = mine
        self._thread = threading.Thread(
            target=drive_session, args=(theirs, self._opponent_factory()), kwargs={"strict": False}, daemon=True
        )
        self._thread.start()
        result = self._session.step(Action(NOOP))  # wait for the first decision point
        self._last_score = result.score
        return result.observation

    def step(self, action: Action) -> tuple[Observation, float, bool, dict]:
        if self._session is None:
            raise SessionError("call reset() first")
        result = self._session.step(action)
        reward = float(result.score - self._last_score)
        self._last_score = result.score
        info = {"rejected": result.rejected, "reject_reason": result.reject_reason}
        return result.observation, reward, result.game_over, info

    def close(self) -> None:
        if self._thread is not None and self._thread.is_alive():
            self._thread.join(timeout=0.5)
        self._session = None
        self._thread = None
