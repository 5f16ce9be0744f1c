// Wire protocol: versioned JSON envelopes over a websocket. Mirrors the
// server's format; the decoder throws only ProtocolError whatever the input.

export const PROTOCOL_VERSION = "1.0";

export interface WireMessage {
  version: string;
  kind: string;
  seq: number;
  payload: Record<string, unknown>;
}

export const CLIENT_KINDS = [
  "join_lobby", "player_action", "leave_game", "pong", "scenario_attach", "scenario_push",
] as const;

export const SERVER_KINDS = [
  "joined", "paired", "state_sync", "turn_update", "instruction_update",
  "game_over", "rejected", "ping", "error", "scenario_event", "tutorial_prompt",
] as const;

const ALL_KINDS: ReadonlySet<string> = new Set([...CLIENT_KINDS, ...SERVER_KINDS]);

export class ProtocolError extends Error {
  code: string;
  constructor(code: string, message: string) {
    super(message);
    this.code = code;
  }
}

function sortedStringify(value: unknown): string {
  if (value === null || typeof value !== "object") {
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return "[" + value.map(sortedStringify).join(",") + "]";
  }
  const obj = value as Record<string, unknown>;
  const keys = Object.keys(obj).sort();
  const parts = keys.map((k) => JSON.stringify(k) + ":" + sortedStringify(obj[k]));
  return "{" + parts.join(",") + "}";
}

export function encode(kind: string, seq: number, payload: Record<string, unknown>): string {
  if (!ALL_KINDS.has(kind)) {
    throw new ProtocolError("unknown-kind", `cannot encode unknown kind ${kind}`);
  }
  return sortedStringify({ version: PROTOCOL_VERSION, kind, seq, payload });
}

export function decode(data: string): WireMessage {
  let obj: unknown;
  try {
    obj = JSON.parse(data);
  } catch (err) {
    throw new ProtocolError("parse-error", `not valid JSON: ${err}`);
  }
  if (typeof obj !== "object" || obj === null || Array.isArray(obj)) {
    throw new ProtocolError("parse-error", "message must be a JSON object");
  }
  const msg = obj as Record<string, unknown>;
  if (typeof msg.version !== "string") {
    throw new ProtocolError("parse-error", "missing version field");
  }
  if (msg.version !== PROTOCOL_VERSION) {
    throw new ProtocolError("version-mismatch", `version ${msg.version}, expected ${PROTOCOL_VERSION}`);
  }
  if (typeof msg.kind !== "string") {
    throw new ProtocolError("parse-error", "missing kind field");
  }
  if (!ALL_KINDS.has(msg.kind)) {
    throw new ProtocolError("unknown-kind", `unknown kind ${msg.kind}`);
  }
  if (typeof msg.seq !== "number" || !Number.isInteger(msg.seq) || msg.seq < 0) {
    throw new ProtocolError("parse-error", "seq must be a non-negative integer");
  }
  if (typeof msg.payload !== "object" || msg.payload === null || Array.isArray(msg.payload)) {
    throw new ProtocolError("parse-error", "payload must be an object");
  }
  return {
    version: msg.version,
    kind: msg.kind,
    seq: msg.seq,
    payload: msg.payload as Record<string, unknown>,
  };
}
