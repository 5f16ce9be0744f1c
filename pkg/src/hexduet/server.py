"""Network service: lobbies, pairing queues, game rooms, timers, data portal.

Each room is an isolated sequential event loop owning exactly one game state;
rooms never share mutable data and all player input flows through the room's
queue. Events are persisted before any state sync leaves the server, so a
crash between the two never loses an acknowledged action.
"""

from __future__ import annotations

import asyncio
import logging
import os
import threading
import time
import uuid
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from aiohttp import WSMsgType, web

from . import protocol, ser
from .config import LobbyConfig, ServerConfig
from .gamecore import (
    EV_ABANDONED,
    EV_GAME_OVER,
    EV_INSTRUCTION_ACTIVATED,
    EV_INSTRUCTION_CANCELLED,
    EV_INSTRUCTION_DONE,
    EV_INSTRUCTION_SENT,
    EV_TURN_TRANSITION,
    FOLLOWER,
    LEADER,
    Action,
    ActionRejected,
    GameState,
    apply_action,
    handle_timeout,
    mark_abandoned,
    make_scenario_edit,
    observe,
    start_game,
    state_hash,
)
from .mapgen import MapPool
from .persistence import EventStore, build_portal
from .protocol import WireMessage, decode, encode
from .scenario import Scenario, load_scenario, validate_edit

logger = logging.getLogger(__name__)

_INSTRUCTION_EVENTS = {
    EV_INSTRUCTION_SENT,
    EV_INSTRUCTION_ACTIVATED,
    EV_INSTRUCTION_DONE,
    EV_INSTRUCTION_CANCELLED,
}

_PLACEHOLDER_PAGE = """<!doctype html>
<html><head><meta charset="utf-8"><title>hexduet</title></head>
<body style="font-family: sans-serif">
<h1>hexduet server</h1>
<p>The browser client is not built. Build the frontend and point
<code>web_root</code> at its dist directory, or play headlessly.</p>
</body></html>"""


class JoinRejected(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class Connection:
    """One websocket: either a player (joins a lobby) or a scenario editor."""

    def __init__(self, ws, conn_id: str):
        self.ws = ws
        self.id = conn_id
        self.player_id = f"p-{uuid.uuid4().hex[:12]}"  # anonymized, per-connection
        self.display_name = ""
        self.is_bot = False
        self.leader_qualified = False
        self.recent_scores: list[float] = []
        self.record = True
        self.lobby: Optional[Lobby] = None
        self.room: Optional["Room"] = None
        self.role: Optional[str] = None
        self.joined_at = 0.0
        self.last_client_seq = 0
        self.missed_pongs = 0
        self.alive = True
        self._out_seq = 0
        self._send_lock = asyncio.Lock()

    async def send(self, kind: str, payload: dict) -> None:
        if not self.alive:
            return
        async with self._send_lock:
            self._out_seq += 1
            try:
                await self.ws.send_str(
                    encode(WireMessage(kind=kind, seq=self._out_seq, payload=payload)).decode("utf-8")
                )
            except Exception:
                self.alive = False

    def mean_recent_score(self) -> float:
        if not self.recent_scores:
            return 0.0
        return sum(self.recent_scores) / len(self.recent_scores)


class Lobby:
    """Pairing queues. A player sits in at most one queue; bots never enter
    the human queues."""

    def __init__(self, config: LobbyConfig, scenario: Optional[Scenario] = None):
        self.config = config
        self.id = config.id
        self.scenario = scenario
        self.leader_qualified: deque[Connection] = deque()
        self.follower_only: deque[Connection] = deque()
        self.bots: deque[Connection] = deque()

    def join(self, conn: Connection) -> int:
        if any(conn in q for q in (self.leader_qualified, self.follower_only, self.bots)):
            raise JoinRejected("already waiting in this lobby")
        policy = self.config.pairing_policy
        if conn.is_bot:
            if policy == "human_human":
                raise JoinRejected("bots are not allowed in this lobby")
            self.bots.append(conn)
            return len(self.bots) - 1
        if policy == "bot_bot":
            raise JoinRejected("this lobby is reserved for bots")
        if conn.record is False:
            raise JoinRejected("recording is mandatory in lobbies with humans")
        if conn.leader_qualified:
            self.leader_qualified.append(conn)
            return len(self.leader_qualified) - 1
        self.follower_only.append(conn)
        return len(self.follower_only) - 1

    def remove(self, conn: Connection) -> None:
        for q in (self.leader_qualified, self.follower_only, self.bots):
            try:
                q.remove(conn)
            except ValueError:
                pass

    def _pair_ordered(self, queue: deque) -> Optional[tuple[Connection, Connection]]:
        """Rules, in order: forced roles for qualified+unqualified; otherwise the
        two longest-waiting qualified players with the higher mean recent score
        leading (ties to the longer wait)."""
        qualified = [c for c in queue if c.leader_qualified]
        unqualified = [c for c in queue if not c.leader_qualified]
        if qualified and unqualified:
            leader, follower = qualified[0], unqualified[0]
        elif len(qualified) >= 2:
            a, b = qualified[0], qualified[1]
            if a.mean_recent_score() == b.mean_recent_score():
                leader, follower = (a, b) if a.joined_at <= b.joined_at else (b, a)
            else:
                leader, follower = (a, b) if a.mean_recent_score() > b.mean_recent_score() else (b, a)
        else:
            return None
        queue.remove(leader)
        queue.remove(follower)
        return leader, follower

    def try_pair(self) -> Optional[tuple[Connection, Connection]]:
        policy = self.config.pairing_policy
        if policy == "human_human":
            merged = deque(sorted(
                list(self.leader_qualified) + list(self.follower_only),
                key=lambda c: c.joined_at,
            ))
            pair = self._pair_ordered(merged)
            if pair:
                for conn in pair:
                    self.remove(conn)
            return pair
        if policy == "bot_bot":
            pair = self._pair_ordered(self.bots)
            return pair
        # human_bot: the human always leads, the bot follows
        humans = sorted(list(self.leader_qualified) + list(self.follower_only), key=lambda c: c.joined_at)
        if humans and self.bots:
            human = humans[0]
            bot = self.bots.popleft()
            self.remove(human)
            return human, bot
        return None


class Room:
    """Sequential owner of one game; the single writer of its state."""

    def __init__(self, server: "GameServer", room_id: str, lobby: Lobby,
                 leader: Connection, follower: Connection):
        self.server = server
        self.id = room_id
        self.game_id = room_id
        self.room_type = lobby.config.room_type
        self.lobby = lobby
        self.conns = {LEADER: leader, FOLLOWER: follower}
        self.editors: list[Connection] = []
        self.inputs: asyncio.Queue = asyncio.Queue()
        self.recorded = not (
            lobby.config.pairing_policy == "bot_bot"
            and leader.record is False
            and follower.record is False
        )
        self.state: Optional[GameState] = None
        self.all_events: list = []  # kept for editor backlog even when unrecorded
        self._seq = 0
        self._t0 = 0.0
        self._timer_task: Optional[asyncio.Task] = None
        self._timer_gen = 0
        self.task: Optional[asyncio.Task] = None
        self.created_at = time.time()

    def game_time(self) -> float:
        return asyncio.get_running_loop().time() - self._t0

    def _stamp(self, events) -> list:
        wall = time.time()
        for event in events:
            event.game_id = self.game_id
            event.seq = self._seq
            event.wall_time = wall
            self._seq += 1
        return events

    async def run(self) -> None:
        leader, follower = self.conns[LEADER], self.conns[FOLLOWER]
        self._t0 = asyncio.get_running_loop().time()
        lobby_cfg = self.lobby.config
        if self.lobby.scenario is not None:
            scn = self.lobby.scenario
            game_map, config, seed, overlay = scn.map, scn.config, scn.seed, (scn.overlay or None)
        else:
            game_map = await asyncio.to_thread(self.server.map_pool.acquire)
            config, seed, overlay = self.server.config.game, game_map.seed, None
        state, events = start_game(game_map, config, seed, scenario=overlay)
        self.state = state
        if self.recorded:
            self.server.store.create_game(
                self.game_id, self.lobby.id, leader.player_id, follower.player_id, time.time()
            )
        await self._commit(self._stamp(events))
        for role, conn in self.conns.items():
            await conn.send(protocol.PAIRED, {"game_id": self.game_id, "role": role})
        if self.room_type == "tutorial":
            for step, text in enumerate(self.server.config.tutorial_prompts):
                await leader.send(protocol.TUTORIAL_PROMPT, {"step": step, "text": text})
        await self._broadcast_sync(None, None)
        self._arm_timer()

        cancelled = False
        try:
            while not self.state.over:
                item = await self.inputs.get()
                kind = item[0]
                if kind == "action":
                    await self._on_action(item[1], item[2], item[3])
                elif kind == "timeout":
                    await self._on_timeout(item[1])
                elif kind == "disconnect":
                    await self._on_disconnect(item[1])
                elif kind == "attach":
                    await self._on_attach(item[1])
                elif kind == "push":
                    await self._on_push(item[1], item[2], item[3])
        except asyncio.CancelledError:
            cancelled = True
            raise
        finally:
            self._cancel_timer()
            if not cancelled:
                await self._finalize()

    # -- input handling ------------------------------------------------------

    async def _on_action(self, conn: Connection, action: Action, client_seq: int) -> None:
        now = self.game_time()
        state, events = handle_timeout(self.state, now)
        if events:
            self.state = state
            await self._commit(self._stamp(events))
            await self._broadcast_sync(None, None)
        if self.state.over:
            return
        try:
            state, events = apply_action(self.state, conn.role, action, now=now)
        except ActionRejected as exc:
            await conn.send(protocol.REJECTED, {"reason": exc.code, "ack": client_seq})
            return
        self.state = state
        await self._commit(self._stamp(events))
        await self._broadcast_sync(conn, client_seq)
        if any(e.kind == EV_TURN_TRANSITION for e in events):
            self._arm_timer()

    async def _on_timeout(self, gen: int) -> None:
        if gen != self._timer_gen:
            return
        state, events = handle_timeout(self.state, self.game_time())
        if not events:
            self._arm_timer()
            return
        self.state = state
        await self._commit(self._stamp(events))
        await self._broadcast_sync(None, None)
        self._arm_timer()

    async def _on_disconnect(self, conn: Connection) -> None:
        state, events = mark_abandoned(self.state, conn.role)
        if not events:
            return
        self.state = state
        await self._commit(self._stamp(events))
        peer = self.conns[LEADER if conn.role == FOLLOWER else FOLLOWER]
        await peer.send(
            protocol.GAME_OVER,
            {"game_id": self.game_id, "score": self.state.turn.score, "abandoned": True},
        )

    async def _on_attach(self, conn: Connection) -> None:
        self.editors.append(conn)
        for event in self.all_events:
            await conn.send(protocol.SCENARIO_EVENT, {"room_id": self.id, "event": event.to_dict()})

    async def _on_push(self, conn: Connection, edit: dict, client_seq: int) -> None:
        failures = validate_edit(self.state, edit)
        if failures:
            await conn.send(protocol.REJECTED, {"reason": "; ".join(failures), "ack": client_seq})
            return
        state, events = make_scenario_edit(self.state, edit)
        self.state = state
        await self._commit(self._stamp(events))
        await self._broadcast_sync(None, None)

    # -- output --------------------------------------------------------------

    async def _commit(self, events) -> None:
        """Write-ahead: events are durable before any client hears about them."""
        self.all_events.extend(events)
        if self.recorded and events:
            await asyncio.to_thread(self.server.store.append_events, events)
        for event in events:
            for editor in list(self.editors):
                await editor.send(protocol.SCENARIO_EVENT, {"room_id": self.id, "event": event.to_dict()})

    async def _broadcast_sync(self, cause: Optional[Connection], client_seq: Optional[int]) -> None:
        now = self.game_time()
        for role, conn in self.conns.items():
            obs = observe(self.state, role, now=now)
            ack = client_seq if conn is cause else None
            await conn.send(
                protocol.STATE_SYNC,
                {"game_id": self.game_id, "observation": obs.to_dict(), "ack": ack},
            )
        recent = self.all_events[-8:]
        if any(e.kind == EV_TURN_TRANSITION for e in recent):
            for conn in self.conns.values():
                await conn.send(protocol.TURN_UPDATE, {"game_id": self.game_id, "turn": self.state.turn.to_dict()})
        if any(e.kind in _INSTRUCTION_EVENTS for e in recent):
            for role, conn in self.conns.items():
                obs = observe(self.state, role)
                await conn.send(
                    protocol.INSTRUCTION_UPDATE,
                    {"game_id": self.game_id, "instructions": obs.instructions},
                )

    # -- timers ----------------------------------------------------------------

    def _arm_timer(self) -> None:
        self._cancel_timer()
        if self.state is None or self.state.over:
            return
        delay = max(0.0, self.state.turn.turn_deadline - self.game_time())
        self._timer_gen += 1
        self._timer_task = asyncio.create_task(self._fire_timer(delay, self._timer_gen))

    async def _fire_timer(self, delay: float, gen: int) -> None:
        try:
            await asyncio.sleep(delay)
            await self.inputs.put(("timeout", gen))
        except asyncio.CancelledError:
            pass

    def _cancel_timer(self) -> None:
        if self._timer_task is not None:
            self._timer_task.cancel()
            self._timer_task = None

    # -- end of game -----------------------------------------------------------

    async def _finalize(self) -> None:
        final_score = self.state.turn.score
        abandoned = any(e.kind == EV_ABANDONED for e in self.all_events)
        ended_normally = any(e.kind == EV_GAME_OVER for e in self.all_events)
        if self.recorded:
            await asyncio.to_thread(
                self.server.store.finish_game,
                self.game_id, final_score, state_hash(self.state), time.time(), abandoned,
            )
        if ended_normally:
            await self._broadcast_sync(None, None)
            for conn in self.conns.values():
                await conn.send(
                    protocol.GAME_OVER,
                    {"game_id": self.game_id, "score": final_score, "abandoned": False},
                )
        self.server.rooms.pop(self.id, None)
        for conn in self.conns.values():
            conn.room = None


class GameServer:
    def __init__(self, config: ServerConfig):
        config.validate()
        self.config = config
        os.makedirs(config.data_dir, exist_ok=True)
        self.store = EventStore(os.path.join(config.data_dir, "events.db"))
        self.map_pool = MapPool(config.mapgen, base_seed=config.map_pool_seed)
        self.lobbies: dict[str, Lobby] = {}
        for lobby_cfg in config.lobbies:
            scenario = load_scenario(lobby_cfg.scenario_file) if lobby_cfg.scenario_file else None
            self.lobbies[lobby_cfg.id] = Lobby(lobby_cfg, scenario)
        self.rooms: dict[str, Room] = {}
        self._room_counter = 0
        self._runner: Optional[web.AppRunner] = None
        self._refill_task: Optional[asyncio.Task] = None
        self.app = self._build_app()
        self.port = config.port  # actual bound port set on start

    # -- app -----------------------------------------------------------------

    def _build_app(self) -> web.Application:
        app = web.Application()
        app.router.add_get("/healthz", self._healthz)
        app.router.add_get("/ws/{lobby_id}", self._ws_handler)
        app.router.add_get("/play", self._play_page)
        app.router.add_get("/scenario/rooms", self._scenario_rooms)
        app.add_subapp("/data", build_portal(self.store))
        web_root = self.config.web_root
        if web_root and os.path.isdir(web_root):
            app.router.add_static("/assets", web_root)
        return app

    async def _healthz(self, request: web.Request) -> web.Response:
        return web.Response(text="ok")

    async def _play_page(self, request: web.Request) -> web.Response:
        web_root = self.config.web_root
        if web_root:
            index = os.path.join(web_root, "index.html")
            if os.path.exists(index):
                with open(index) as fh:
                    return web.Response(text=fh.read(), content_type="text/html")
        return web.Response(text=_PLACEHOLDER_PAGE, content_type="text/html")

    async def _scenario_rooms(self, request: web.Request) -> web.Response:
        rooms = [
            {"room_id": room.id, "lobby": room.lobby.id, "created_at": room.created_at}
            for room in self.rooms.values()
            if room.room_type == "scenario"
        ]
        return web.Response(
            text=ser.canonical_dumps({"rooms": rooms}), content_type="application/json"
        )

    # -- websocket -------------------------------------------------------------

    async def _ws_handler(self, request: web.Request) -> web.WebSocketResponse:
        lobby_id = request.match_info["lobby_id"]
        ws = web.WebSocketResponse()
        await ws.prepare(request)
        conn = Connection(ws, conn_id=uuid.uuid4().hex[:12])
        heartbeat = asyncio.create_task(self._heartbeat(conn))
        try:
            async for raw in ws:
                if raw.type != WSMsgType.TEXT:
                    break
                try:
                    msg = decode(raw.data)
                except protocol.ProtocolError as exc:
                    await conn.send(protocol.ERROR, {"code": exc.code, "message": str(exc)})
                    continue
                if msg.seq <= conn.last_client_seq:
                    await conn.send(protocol.ERROR, {"code": "bad-seq", "message": "seq must increase"})
                    continue
                conn.last_client_seq = msg.seq
                await self._dispatch(conn, lobby_id, msg)
        finally:
            heartbeat.cancel()
            conn.alive = False
            if conn.lobby is not None:
                conn.lobby.remove(conn)
            if conn.room is not None:
                await conn.room.inputs.put(("disconnect", conn))
        return ws

    async def _dispatch(self, conn: Connection, lobby_id: str, msg: WireMessage) -> None:
        kind, payload = msg.kind, msg.payload
        if kind == protocol.PONG:
            conn.missed_pongs = 0
            return
        if kind == protocol.JOIN_LOBBY:
            await self._on_join(conn, lobby_id, payload)
            return
        if kind == protocol.PLAYER_ACTION:
            if conn.room is None:
                await conn.send(protocol.REJECTED, {"reason": "not in a game", "ack": msg.seq})
                return
            try:
                action = Action.from_dict(payload["action"])
            except Exception:
                await conn.send(protocol.REJECTED, {"reason": "malformed action", "ack": msg.seq})
                return
            await conn.room.inputs.put(("action", conn, action, msg.seq))
            return
        if kind == protocol.LEAVE_GAME:
            if conn.room is not None:
                await conn.room.inputs.put(("disconnect", conn))
            return
        if kind == protocol.SCENARIO_ATTACH:
            room = self.rooms.get(payload["room_id"])
            if room is None or room.room_type != "scenario":
                await conn.send(protocol.REJECTED, {"reason": "no such scenario room", "ack": msg.seq})
                return
            await room.inputs.put(("attach", conn))
            return
        if kind == protocol.SCENARIO_PUSH:
            room = self.rooms.get(payload["room_id"])
            if room is None or room.room_type != "scenario":
                await conn.send(protocol.REJECTED, {"reason": "no such scenario room", "ack": msg.seq})
                return
            await room.inputs.put(("push", conn, payload["edit"], msg.seq))
            return
        await conn.send(protocol.ERROR, {"code": "unexpected-kind", "message": f"cannot handle {kind}"})

    async def _on_join(self, conn: Connection, lobby_id: str, payload: dict) -> None:
        lobby = self.lobbies.get(payload.get("lobby_id") or lobby_id)
        if lobby is None:
            await conn.send(protocol.REJECTED, {"reason": f"unknown lobby {lobby_id!r}", "ack": None})
            return
        if conn.lobby is not None or conn.room is not None:
            await conn.send(protocol.REJECTED, {"reason": "already joined", "ack": None})
            return
        quals = payload["role_qualifications"]
        conn.display_name = payload["display_name"]
        conn.is_bot = payload["is_bot"]
        conn.record = payload["record"]
        conn.leader_qualified = bool(quals.get("leader_qualified"))
        conn.recent_scores = [float(s) for s in quals.get("recent_scores", [])][-10:]
        conn.joined_at = time.monotonic()
        try:
            position = lobby.join(conn)
        except JoinRejected as exc:
            await conn.send(protocol.REJECTED, {"reason": exc.reason, "ack": None})
            return
        conn.lobby = lobby
        await conn.send(protocol.JOINED, {"queue_position": position})
        self._spawn_auto_bot_if_needed(lobby)
        pair = lobby.try_pair()
        if pair:
            leader, follower = pair
            leader.lobby = follower.lobby = None
            self._create_room(lobby, leader, follower)

    def _create_room(self, lobby: Lobby, leader: Connection, follower: Connection) -> None:
        self._room_counter += 1
        room_id = f"g-{self._room_counter:06d}-{uuid.uuid4().hex[:6]}"
        room = Room(self, room_id, lobby, leader, follower)
        leader.room = follower.room = room
        leader.role, follower.role = LEADER, FOLLOWER
        self.rooms[room_id] = room
        room.task = asyncio.create_task(room.run())

    def _spawn_auto_bot_if_needed(self, lobby: Lobby) -> None:
        if not lobby.config.auto_bot or lobby.bots:
            return
        humans_waiting = lobby.leader_qualified or lobby.follower_only
        if not humans_waiting:
            return
        endpoint = f"ws://{self.config.host}:{self.port}"
        thread = threading.Thread(
            target=_auto_bot_main, args=(endpoint, lobby.id), daemon=True
        )
        thread.start()

    async def _heartbeat(self, conn: Connection) -> None:
        interval = self.config.ping_interval
        try:
            while conn.alive:
                await asyncio.sleep(interval)
                if conn.missed_pongs >= self.config.max_missed_pongs:
                    await conn.ws.close()
                    return
                conn.missed_pongs += 1
                await conn.send(protocol.PING, {})
        except asyncio.CancelledError:
            pass

    # -- lifecycle ---------------------------------------------------------------

    async def start(self) -> None:
        self._runner = web.AppRunner(self.app)
        await self._runner.setup()
        site = web.TCPSite(self._runner, self.config.host, self.config.port)
        await site.start()
        self.port = self._runner.addresses[0][1]
        self._refill_task = asyncio.create_task(self._refill_loop())
        logger.info("serving on %s:%s", self.config.host, self.port)

    async def _refill_loop(self) -> None:
        target = self.config.map_pool_size
        try:
            while True:
                if self.map_pool.size() < target:
                    await asyncio.to_thread(self.map_pool.refill, target)
                await asyncio.sleep(1.0)
        except asyncio.CancelledError:
            pass

    async def stop(self) -> None:
        if self._refill_task:
            self._refill_task.cancel()
        pending = []
        for room in list(self.rooms.values()):
            room._cancel_timer()
            task = getattr(room, "task", None)
            if task is not None:
                task.cancel()
                pending.append(task)
        if pending:
            await asyncio.gather(*pending, return_exceptions=True)
        if self._runner:
            await self._runner.cleanup()
        self.store.close()


def _auto_bot_main(endpoint: str, lobby_id: str) -> None:
    """Server-side follower bot for human_bot lobbies; runs on its own thread."""
    from .agents import FollowerBot
    from .client import NetSession, drive_session

    try:
        session = NetSession.connect(
            endpoint, lobby_id, display_name="house-bot",
            leader_qualified=False, is_bot=True, record=True, timeout=30.0,
        )
        drive_session(session, FollowerBot(), strict=False)
        session.close()
    except Exception:
        logger.exception("auto bot failed")


def run_server(config: ServerConfig) -> None:
    """Blocking entry point used by the CLI."""

    async def main():
        server = GameServer(config)
        await server.start()
        print(f"listening on http://{config.host}:{server.port} (Ctrl-C to stop)")
        try:
            while True:
                await asyncio.sleep(3600)
        except asyncio.CancelledError:
            pass
        finally:
            await server.stop()

    try:
        asyncio.run(main())
    except KeyboardInterrupt:
        pass
