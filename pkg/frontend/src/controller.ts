// Connection-agnostic game session logic: joins a lobby, tracks the latest
// observation, turns key presses into wire messages, and gates input by turn.
// No DOM and no game rules, so it runs identically in the browser and in
// node-side tests over a real socket.

import { decode, encode } from "./protocol.js";
import type { Observation } from "./types.js";

export interface Transport {
  send(text: string): void;
  close(): void;
}

export type Phase = "connecting" | "waiting" | "playing" | "over";

export interface Toast {
  text: string;
  at: number;
}

export interface ControllerOptions {
  lobbyId: string;
  displayName: string;
  leaderQualified?: boolean;
  recentScores?: number[];
  isBot?: boolean;
}

const MOVEMENT_KEYS: Record<string, string> = {
  ArrowUp: "forward",
  ArrowDown: "backward",
  ArrowLeft: "turn_left",
  ArrowRight: "turn_right",
  w: "forward",
  s: "backward",
  a: "turn_left",
  d: "turn_right",
};

export class GameController {
  phase: Phase = "connecting";
  role: "leader" | "follower" | null = null;
  gameId: string | null = null;
  observation: Observation | null = null;
  queuePosition: number | null = null;
  finalScore: number | null = null;
  abandoned = false;
  toasts: Toast[] = [];
  tutorialPrompts: { step: number; text: string }[] = [];
  onChange: () => void = () => {};

  private transport: Transport;
  private seq = 0;
  private opts: ControllerOptions;

  constructor(transport: Transport, opts: ControllerOptions) {
    this.transport = transport;
    this.opts = opts;
  }

  /** Call once the transport is open. */
  join(): void {
    this.sendMessage("join_lobby", {
      lobby_id: this.opts.lobbyId,
      display_name: this.opts.displayName,
      role_qualifications: {
        leader_qualified: this.opts.leaderQualified ?? true,
        recent_scores: this.opts.recentScores ?? [],
      },
      is_bot: this.opts.isBot ?? false,
      record: true,
    });
  }

  private sendMessage(kind: string, payload: Record<string, unknown>): number {
    this.seq += 1;
    this.transport.send(encode(kind, this.seq, payload));
    return this.seq;
  }

  /** Feed every incoming websocket text frame here. */
  handleMessage(text: string): void {
    let msg;
    try {
      msg = decode(text);
    } catch (err) {
      this.toast(`protocol error: ${err}`);
      return;
    }
    switch (msg.kind) {
      case "ping":
        this.sendMessage("pong", {});
        return; // no re-render needed
      case "joined":
        this.phase = "waiting";
        this.queuePosition = msg.payload.queue_position as number;
        break;
      case "paired":
        this.phase = "playing";
        this.role = msg.payload.role as "leader" | "follower";
        this.gameId = msg.payload.game_id as string;
        break;
      case "state_sync":
        this.observation = msg.payload.observation as unknown as Observation;
        if (this.observation.over) this.phase = "over";
        break;
      case "turn_update":
      case "instruction_update":
        break; // the full sync already carried everything
      case "game_over":
        this.phase = "over";
        this.finalScore = msg.payload.score as number;
        this.abandoned = msg.payload.abandoned as boolean;
        break;
      case "rejected":
        this.toast(`rejected: ${msg.payload.reason}`);
        break;
      case "error":
        this.toast(`server error: ${msg.payload.code}`);
        break;
      case "tutorial_prompt":
        this.tutorialPrompts.push({ step: msg.payload.step as number, text: msg.payload.text as string });
        break;
    }
    this.onChange();
  }

  toast(text: string): void {
    this.toasts.push({ text, at: Date.now() });
    if (this.toasts.length > 5) this.toasts.shift();
    this.onChange();
  }

  get myTurn(): boolean {
    return (
      this.phase === "playing" &&
      this.observation !== null &&
      !this.observation.over &&
      this.observation.turn.active_role === this.role
    );
  }

  private hasCancellable(): boolean {
    const obs = this.observation;
    if (!obs) return false;
    return obs.instructions.some((i) => i.status === "active" || i.status === "queued");
  }

  sendAction(kind: string, text?: string): number | null {
    if (this.phase !== "playing") return null;
    const action: Record<string, unknown> = { kind };
    if (text !== undefined) action.text = text;
    return this.sendMessage("player_action", { action });
  }

  /**
   * Keyboard input. Returns the action kind that was sent, or null when the
   * key is locked (for example movement outside one's turn).
   */
  keyInput(key: string): string | null {
    if (this.phase !== "playing") return null;
    const movement = MOVEMENT_KEYS[key];
    if (movement) {
      if (!this.myTurn) return null; // locked: not your turn
      this.sendAction(movement);
      return movement;
    }
    if (key === "e") {
      if (!this.myTurn) return null;
      this.sendAction("end_turn");
      return "end_turn";
    }
    if (key === "f" && this.role === "follower") {
      if (!this.myTurn) return null;
      const active = this.observation?.instructions.some((i) => i.status === "active");
      if (!active) return null;
      this.sendAction("mark_instruction_done");
      return "mark_instruction_done";
    }
    if (key === "c" && this.role === "leader") {
      // cancelling is legal during the follower's turn as well
      if (!this.hasCancellable()) return null;
      this.sendAction("cancel_instructions");
      return "cancel_instructions";
    }
    return null;
  }

  /** The leader's instruction composer; returns false when not applicable. */
  sendInstruction(text: string): boolean {
    if (this.role !== "leader" || !this.myTurn || !text.trim()) return false;
    this.sendAction("send_instruction", text);
    return true;
  }

  leave(): void {
    if (this.phase === "playing") this.sendMessage("leave_game", {});
    this.transport.close();
  }
}
