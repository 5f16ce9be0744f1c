"""Versioned wire format for all client/server traffic.

Messages are canonical JSON envelopes {version, kind, seq, payload} carried over
websocket text frames. The decoder never raises anything but ProtocolError
subclasses, whatever the input. Full observations are synced after every state
change; there are no deltas.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import ser

PROTOCOL_VERSION = "1.0"

# client -> server
JOIN_LOBBY = "join_lobby"
PLAYER_ACTION = "player_action"
LEAVE_GAME = "leave_game"
PONG = "pong"
SCENARIO_ATTACH = "scenario_attach"
SCENARIO_PUSH = "scenario_push"

# server -> client
JOINED = "joined"
PAIRED = "paired"
STATE_SYNC = "state_sync"
TURN_UPDATE = "turn_update"
INSTRUCTION_UPDATE = "instruction_update"
GAME_OVER = "game_over"
REJECTED = "rejected"
PING = "ping"
ERROR = "error"
SCENARIO_EVENT = "scenario_event"
TUTORIAL_PROMPT = "tutorial_prompt"

CLIENT_KINDS = (JOIN_LOBBY, PLAYER_ACTION, LEAVE_GAME, PONG, SCENARIO_ATTACH, SCENARIO_PUSH)
SERVER_KINDS = (
    JOINED,
    PAIRED,
    STATE_SYNC,
    TURN_UPDATE,
    INSTRUCTION_UPDATE,
    GAME_OVER,
    REJECTED,
    PING,
    ERROR,
    SCENARIO_EVENT,
    TUTORIAL_PROMPT,
)
ALL_KINDS = CLIENT_KINDS + SERVER_KINDS

# Required payload fields and their types, checked shallowly on decode.
_SCHEMAS: dict[str, dict[str, type | tuple[type, ...]]] = {
    JOIN_LOBBY: {
        "lobby_id": str,
        "display_name": str,
        "role_qualifications": dict,
        "is_bot": bool,
        "record": bool,
    },
    PLAYER_ACTION: {"action": dict},
    LEAVE_GAME: {},
    PONG: {},
    SCENARIO_ATTACH: {"room_id": str},
    SCENARIO_PUSH: {"room_id": str, "edit": dict},
    JOINED: {"queue_position": int},
    PAIRED: {"game_id": str, "role": str},
    STATE_SYNC: {"game_id": str, "observation": dict, "ack": (int, type(None))},
    TURN_UPDATE: {"game_id": str, "turn": dict},
    INSTRUCTION_UPDATE: {"game_id": str, "instructions": list},
    GAME_OVER: {"game_id": str, "score": int, "abandoned": bool},
    REJECTED: {"reason": str, "ack": (int, type(None))},
    PING: {},
    ERROR: {"code": str, "message": str},
    SCENARIO_EVENT: {"room_id": str, "event": dict},
    TUTORIAL_PROMPT: {"step": int, "text": str},
}

# Heartbeat policy: a connection missing this many pings in a row is dropped.
PING_INTERVAL_SECONDS = 10.0
MAX_MISSED_PONGS = 3


class ProtocolError(Exception):
    code = "protocol-error"


class ParseError(ProtocolError):
    code = "parse-error"


class VersionMismatch(ProtocolError):
    code = "version-mismatch"


class UnknownKind(ProtocolError):
    code = "unknown-kind"


@dataclass
class WireMessage:
    kind: str
    seq: int
    payload: dict = field(default_factory=dict)
    version: str = PROTOCOL_VERSION

    def to_dict(self) -> dict:
        return {"version": self.version, "kind": self.kind, "seq": self.seq, "payload": self.payload}


def encode(msg: WireMessage) -> bytes:
    """Canonical bytes for a message; encoding a message twice is identical."""
    if msg.kind not in _SCHEMAS:
        raise UnknownKind(f"cannot encode unknown kind {msg.kind!r}")
    return ser.canonical_bytes(msg.to_dict())


def decode(data: bytes | str) -> WireMessage:
    """Parse and validate a wire message; raises only ProtocolError subclasses."""
    try:
        obj = ser.canonical_loads(data)
    except Exception as exc:
        raise ParseError(f"not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ParseError("message must be a JSON object")
    version = obj.get("version")
    if not isinstance(version, str):
        raise ParseError("missing version field")
    if version != PROTOCOL_VERSION:
        raise VersionMismatch(f"version {version!r}, expected {PROTOCOL_VERSION!r}")
    kind = obj.get("kind")
    if not isinstance(kind, str):
        raise ParseError("missing kind field")
    if kind not in _SCHEMAS:
        raise UnknownKind(f"unknown kind {kind!r}")
    seq = obj.get("seq")
    if not isinstance(seq, int) or isinstance(seq, bool) or seq < 0:
        raise ParseError("seq must be a non-negative integer")
    payload = obj.get("payload")
    if not isinstance(payload, dict):
        raise ParseError("payload must be an object")
    schema = _SCHEMAS[kind]
    for fname, ftype in schema.items():
        if fname not in payload:
            raise ParseError(f"{kind}: missing payload field {fname!r}")
        value = payload[fname]
        if isinstance(ftype, tuple):
            if not isinstance(value, ftype):
                raise ParseError(f"{kind}: field {fname!r} has wrong type")
        elif ftype is int:
            if not isinstance(value, int) or isinstance(value, bool):
                raise ParseError(f"{kind}: field {fname!r} must be an integer")
        elif not isinstance(value, ftype):
            raise ParseError(f"{kind}: field {fname!r} must be {ftype.__name__}")
    return WireMessage(kind=kind, seq=seq, payload=payload, version=version)
