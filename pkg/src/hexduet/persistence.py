"""Append-only per-game event logs, replay, stats, and the HTTP data portal.

Each game is a dense, gap-free sequence of events in sqlite; the first event is
always game_start and a terminal event (game_over or abandoned) seals the log.
Folding a log through the gamecore effect functions reconstructs the state at
any moment. Wall-clock times are recorded for the record books but replay never
consumes them.
"""

from __future__ import annotations

import io
import os
import sqlite3
import statistics
import threading
import zipfile
from typing import Iterable, Optional

from aiohttp import web

from . import ser
from .gamecore import (
    EV_ABANDONED,
    EV_GAME_OVER,
    EV_GAME_START,
    EV_INSTRUCTION_SENT,
    GameEvent,
    GameState,
    replay_log,
)


class StoreError(Exception):
    pass


class EventStore:
    """Single-file store; appends are durable before they return."""

    def __init__(self, path: str = ":memory:"):
        self.path = path
        self._conn = sqlite3.connect(path, check_same_thread=False)
        self._conn.execute("PRAGMA journal_mode=WAL")
        self._conn.execute("PRAGMA synchronous=NORMAL")
        self._lock = threading.RLock()
        self._create_tables()

    def _create_tables(self) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                """CREATE TABLE IF NOT EXISTS games (
                    game_id TEXT PRIMARY KEY,
                    lobby TEXT NOT NULL,
                    started_at REAL NOT NULL,
                    ended_at REAL,
                    final_score INTEGER,
                    final_hash TEXT,
                    completed INTEGER NOT NULL DEFAULT 0,
                    abandoned INTEGER NOT NULL DEFAULT 0,
                    leader_id TEXT,
                    follower_id TEXT,
                    event_count INTEGER NOT NULL DEFAULT 0,
                    instruction_count INTEGER NOT NULL DEFAULT 0
                )"""
            )
            self._conn.execute(
                """CREATE TABLE IF NOT EXISTS events (
                    game_id TEXT NOT NULL,
                    seq INTEGER NOT NULL,
                    wall_time REAL NOT NULL,
                    actor TEXT NOT NULL,
                    kind TEXT NOT NULL,
                    payload TEXT NOT NULL,
                    PRIMARY KEY (game_id, seq)
                )"""
            )

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    # -- games -------------------------------------------------------------

    def create_game(self, game_id: str, lobby: str, leader_id: str, follower_id: str,
                    started_at: float) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                "INSERT INTO games (game_id, lobby, started_at, leader_id, follower_id) VALUES (?,?,?,?,?)",
                (game_id, lobby, started_at, leader_id, follower_id),
            )

    def finish_game(self, game_id: str, final_score: int, final_hash: str,
                    ended_at: float, abandoned: bool = False) -> None:
        with self._lock, self._conn:
            self._conn.execute(
                "UPDATE games SET final_score=?, final_hash=?, ended_at=?, completed=?, abandoned=? WHERE game_id=?",
                (final_score, final_hash, ended_at, 0 if abandoned else 1, 1 if abandoned else 0, game_id),
            )

    # -- events ------------------------------------------------------------

    def last_seq(self, game_id: str) -> int:
        with self._lock:
            row = self._conn.execute(
                "SELECT MAX(seq) FROM events WHERE game_id=?", (game_id,)
            ).fetchone()
        return -1 if row[0] is None else row[0]

    def _is_sealed(self, game_id: str) -> bool:
        with self._lock:
            row = self._conn.execute(
                "SELECT 1 FROM events WHERE game_id=? AND kind IN (?,?) LIMIT 1",
                (game_id, EV_GAME_OVER, EV_ABANDONED),
            ).fetchone()
        return row is not None

    def append_event(self, event: GameEvent) -> None:
        self.append_events([event])

    def append_events(self, events: Iterable[GameEvent]) -> None:
        """Append a batch atomically; all density/terminal checks apply per event."""
        events = list(events)
        if not events:
            return
        game_id = events[0].game_id
        with self._lock:
            if any(e.game_id != game_id for e in events):
                raise StoreError("one batch may only touch one game")
            if self._is_sealed(game_id):
                raise StoreError(f"game {game_id} already ended; log is immutable")
            expected = self.last_seq(game_id) + 1
            rows = []
            instructions = 0
            for event in events:
                if event.seq != expected:
                    raise StoreError(f"seq {event.seq} breaks density (expected {expected})")
                if expected == 0 and event.kind != EV_GAME_START:
                    raise StoreError(f"first event must be {EV_GAME_START}, got {event.kind}")
                if expected > 0 and event.kind == EV_GAME_START:
                    raise StoreError("game_start after the game began")
                rows.append(
                    (game_id, event.seq, event.wall_time or 0.0, event.actor, event.kind,
                     ser.canonical_dumps(event.payload))
                )
                if event.kind == EV_INSTRUCTION_SENT:
                    instructions += 1
                expected += 1
            with self._conn:
                self._conn.executemany(
                    "INSERT INTO events (game_id, seq, wall_time, actor, kind, payload) VALUES (?,?,?,?,?,?)",
                    rows,
                )
                self._conn.execute(
                    "UPDATE games SET event_count=event_count+?, instruction_count=instruction_count+? WHERE game_id=?",
                    (len(rows), instructions, game_id),
                )

    def events_for(self, game_id: str) -> list[GameEvent]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT seq, wall_time, actor, kind, payload FROM events WHERE game_id=? ORDER BY seq",
                (game_id,),
            ).fetchall()
        return [
            GameEvent(kind=kind, actor=actor, payload=ser.canonical_loads(payload),
                      game_id=game_id, seq=seq, wall_time=wall_time)
            for seq, wall_time, actor, kind, payload in rows
        ]

    def replay_game(self, game_id: str) -> GameState:
        events = self.events_for(game_id)
        if not events:
            raise StoreError(f"no events for game {game_id}")
        return replay_log(events)

    # -- records and stats ---------------------------------------------------

    _RECORD_COLS = (
        "game_id, lobby, started_at, ended_at, final_score, final_hash, completed, "
        "abandoned, leader_id, follower_id, event_count, instruction_count"
    )

    @staticmethod
    def _record_from_row(row) -> dict:
        (game_id, lobby, started_at, ended_at, final_score, final_hash, completed,
         abandoned, leader_id, follower_id, event_count, instruction_count) = row
        return {
            "game_id": game_id,
            "lobby": lobby,
            "started_at": started_at,
            "ended_at": ended_at,
            "final_score": final_score,
            "final_hash": final_hash,
            "completed": bool(completed),
            "abandoned": bool(abandoned),
            "players": {"leader": leader_id, "follower": follower_id},
            "event_count": event_count,
            "instruction_count": instruction_count,
        }

    def record(self, game_id: str) -> Optional[dict]:
        with self._lock:
            row = self._conn.execute(
                f"SELECT {self._RECORD_COLS} FROM games WHERE game_id=?", (game_id,)
            ).fetchone()
        return self._record_from_row(row) if row else None

    def records(self, limit: int = 50, offset: int = 0) -> tuple[list[dict], int]:
        with self._lock:
            rows = self._conn.execute(
                f"SELECT {self._RECORD_COLS} FROM games ORDER BY started_at, game_id LIMIT ? OFFSET ?",
                (limit, offset),
            ).fetchall()
            total = self._conn.execute("SELECT COUNT(*) FROM games").fetchone()[0]
        return [self._record_from_row(r) for r in rows], total

    def stats(self) -> dict:
        """Aggregate statistics over completed (not abandoned) games."""
        with self._lock:
            rows = self._conn.execute(
                "SELECT final_score, instruction_count FROM games WHERE completed=1"
            ).fetchall()
        scores = [r[0] for r in rows]
        histogram: dict[str, int] = {}
        for s in scores:
            histogram[str(s)] = histogram.get(str(s), 0) + 1
        return {
            "game_count": len(scores),
            "instruction_count": sum(r[1] for r in rows),
            "mean_score": (sum(scores) / len(scores)) if scores else None,
            "median_score": statistics.median(scores) if scores else None,
            "score_histogram": histogram,
        }

    # -- archive -------------------------------------------------------------

    def export_archive(self, directory: str) -> None:
        """records.index plus one game_<id>.events file, all in canonical form."""
        os.makedirs(directory, exist_ok=True)
        records, _ = self.records(limit=10**9)
        with open(os.path.join(directory, "records.index"), "w") as fh:
            for rec in records:
                fh.write(ser.canonical_dumps(rec) + "\n")
        for rec in records:
            game_id = rec["game_id"]
            with open(os.path.join(directory, f"game_{game_id}.events"), "w") as fh:
                for event in self.events_for(game_id):
                    fh.write(ser.canonical_dumps(event.to_dict()) + "\n")

    def import_archive(self, directory: str) -> int:
        """Load an exported archive into this (empty or disjoint) store."""
        count = 0
        with open(os.path.join(directory, "records.index")) as fh:
            records = [ser.canonical_loads(line) for line in fh if line.strip()]
        for rec in records:
            game_id = rec["game_id"]
            self.create_game(
                game_id, rec["lobby"], rec["players"]["leader"], rec["players"]["follower"],
                rec["started_at"],
            )
            with open(os.path.join(directory, f"game_{game_id}.events")) as fh:
                events = [GameEvent.from_dict(ser.canonical_loads(line)) for line in fh if line.strip()]
            self.append_events(events)
            if rec["ended_at"] is not None:
                self.finish_game(
                    game_id, rec["final_score"], rec["final_hash"], rec["ended_at"],
                    abandoned=rec["abandoned"],
                )
            count += 1
        return count

    def archive_zip_bytes(self) -> bytes:
        """The archive rendered as a zip, for the portal download endpoint."""
        records, _ = self.records(limit=10**9)
        buf = io.BytesIO()
        with zipfile.ZipFile(buf, "w", zipfile.ZIP_DEFLATED) as zf:
            index = "".join(ser.canonical_dumps(rec) + "\n" for rec in records)
            zf.writestr("records.index", index)
            for rec in records:
                game_id = rec["game_id"]
                body = "".join(
                    ser.canonical_dumps(e.to_dict()) + "\n" for e in self.events_for(game_id)
                )
                zf.writestr(f"game_{game_id}.events", body)
        return buf.getvalue()


# ---------------------------------------------------------------------------
# Data portal (mounted by the server under /data)
# ---------------------------------------------------------------------------


def _json(obj, status=200) -> web.Response:
    return web.Response(
        text=ser.canonical_dumps(obj), status=status, content_type="application/json"
    )


def replay_url(game_id: str) -> str:
    return f"/play?replay_game={game_id}"


def build_portal(store: EventStore) -> web.Application:
    app = web.Application()

    async def list_games(request: web.Request) -> web.Response:
        try:
            limit = int(request.query.get("limit", "50"))
            offset = int(request.query.get("offset", "0"))
            if limit < 0 or offset < 0:
                raise ValueError
        except ValueError:
            return _json({"error": "limit/offset must be non-negative integers"}, status=400)
        records, total = store.records(limit=limit, offset=offset)
        for rec in records:
            rec["replay_url"] = replay_url(rec["game_id"])
        return _json({"games": records, "total": total})

    async def one_game(request: web.Request) -> web.Response:
        game_id = request.match_info["game_id"]
        rec = store.record(game_id)
        if rec is None:
            return _json({"error": f"unknown game {game_id}"}, status=404)
        rec["replay_url"] = replay_url(game_id)
        return _json(rec)

    async def game_events(request: web.Request) -> web.Response:
        game_id = request.match_info["game_id"]
        if store.record(game_id) is None:
            return _json({"error": f"unknown game {game_id}"}, status=404)
        events = [e.to_dict() for e in store.events_for(game_id)]
        return _json({"game_id": game_id, "events": events})

    async def stats(request: web.Request) -> web.Response:
        return _json(store.stats())

    async def archive(request: web.Request) -> web.Response:
        blob = store.archive_zip_bytes()
        return web.Response(
            body=blob,
            content_type="application/zip",
            headers={"Content-Disposition": "attachment; filename=archive.zip"},
        )

    app.router.add_get("/games", list_games)
    app.router.add_get("/games/{game_id}", one_game)
    app.router.add_get("/games/{game_id}/events", game_events)
    app.router.add_get("/stats", stats)
    app.router.add_get("/archive", archive)
    return app
