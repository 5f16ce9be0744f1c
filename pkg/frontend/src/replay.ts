// Client-side fold over a recorded event log. Events carry their effects in
// the payload (the server recomputes and verifies them on its side), so the
// viewer only applies recorded facts: no game rules are re-implemented here.

import type { CardView, GameEventView, InstructionView, PoseView, PropView, TileView } from "./types.js";

export interface Frame {
  rows: number;
  cols: number;
  tiles: TileView[];
  props: PropView[];
  cards: CardView[];
  leader_pose: PoseView;
  follower_pose: PoseView;
  active_role: string;
  turns_remaining: number;
  steps_remaining: number;
  score: number;
  sets_collected: number;
  instructions: InstructionView[];
  over: boolean;
  abandoned: boolean;
  eventIndex: number; // how many events are folded into this frame
}

function terrainRows(map: any): TileView[] {
  const names: Record<string, string> = { g: "grass", p: "path", w: "water", m: "mountain", r: "ramp" };
  const tiles: TileView[] = [];
  const terrain: string[] = map.terrain;
  const elevation: string[] = map.elevation;
  for (let r = 0; r < map.rows; r++) {
    for (let q = 0; q < map.cols; q++) {
      tiles.push({ cell: [q, r], terrain: names[terrain[r][q]], elevation: Number(elevation[r][q]) });
    }
  }
  return tiles;
}

export class ReplayError extends Error {}

function applyEvent(frame: Frame, event: GameEventView): void {
  const p = event.payload;
  switch (event.kind) {
    case "move": {
      const pose = p.to as PoseView;
      if (event.actor === "leader") frame.leader_pose = pose;
      else frame.follower_pose = pose;
      frame.steps_remaining = p.steps_remaining;
      break;
    }
    case "card_toggle": {
      const card = frame.cards.find((c) => c.id === p.card_id);
      if (!card) throw new ReplayError(`toggle of unknown card ${p.card_id}`);
      card.selected = p.selected;
      break;
    }
    case "set_completed": {
      const removed = new Set<number>(p.card_ids);
      frame.cards = frame.cards.filter((c) => !removed.has(c.id));
      for (const card of p.new_cards) frame.cards.push({ ...card });
      frame.score = p.score;
      frame.sets_collected = p.sets_collected;
      frame.turns_remaining = p.turns_remaining;
      break;
    }
    case "turn_transition": {
      frame.active_role = p.active_role;
      frame.turns_remaining = p.turns_remaining;
      frame.steps_remaining = p.steps_remaining;
      break;
    }
    case "instruction_sent":
      frame.instructions.push({ id: p.id, text: p.text, status: "queued", issued_turn: p.issued_turn });
      break;
    case "instruction_activated": {
      const ins = frame.instructions.find((i) => i.id === p.id);
      if (ins) ins.status = "active";
      break;
    }
    case "instruction_done": {
      const ins = frame.instructions.find((i) => i.id === p.id);
      if (ins) ins.status = "done";
      break;
    }
    case "instruction_cancelled": {
      const ids = new Set<number>(p.ids);
      for (const ins of frame.instructions) {
        if (ids.has(ins.id)) ins.status = "cancelled";
      }
      break;
    }
    case "timer_expired":
      break;
    case "game_over":
      frame.over = true;
      frame.score = p.score;
      break;
    case "abandoned":
      frame.over = true;
      frame.abandoned = true;
      break;
    case "scenario_edit": {
      const edit = p.edit as Record<string, any>;
      if (edit.tiles) {
        for (const t of edit.tiles) {
          const tile = frame.tiles.find((x) => x.cell[0] === t.cell[0] && x.cell[1] === t.cell[1]);
          if (tile) {
            tile.terrain = t.terrain;
            tile.elevation = t.elevation;
          }
        }
      }
      if (edit.props) frame.props = edit.props.map((x: PropView) => ({ ...x }));
      if (edit.cards) frame.cards = edit.cards.map((x: CardView) => ({ ...x }));
      if (edit.leader_pose) frame.leader_pose = edit.leader_pose;
      if (edit.follower_pose) frame.follower_pose = edit.follower_pose;
      break;
    }
    default:
      throw new ReplayError(`unknown event kind ${event.kind} at seq ${event.seq}`);
  }
}

function initialFrame(start: GameEventView): Frame {
  if (start.kind !== "game_start") {
    throw new ReplayError(`log must begin with game_start, got ${start.kind}`);
  }
  const map = start.payload.map;
  const config = start.payload.config;
  const frame: Frame = {
    rows: map.rows,
    cols: map.cols,
    tiles: terrainRows(map),
    props: map.props.map((x: PropView) => ({ ...x })),
    cards: map.cards.map((x: CardView) => ({ ...x })),
    leader_pose: { cell: map.leader_spawn, heading: 0 },
    follower_pose: { cell: map.follower_spawn, heading: 0 },
    active_role: "leader",
    turns_remaining: config.initial_turns,
    steps_remaining: config.leader_steps_per_turn,
    score: 0,
    sets_collected: 0,
    instructions: [],
    over: false,
    abandoned: false,
    eventIndex: 1,
  };
  const scenario = start.payload.scenario;
  if (scenario) {
    if (scenario.leader_pose) frame.leader_pose = scenario.leader_pose;
    if (scenario.follower_pose) frame.follower_pose = scenario.follower_pose;
    if (scenario.cards) frame.cards = scenario.cards.map((x: CardView) => ({ ...x }));
    if (scenario.instructions) frame.instructions = scenario.instructions.map((x: InstructionView) => ({ ...x }));
    if (scenario.turn) {
      frame.active_role = scenario.turn.active_role;
      frame.turns_remaining = scenario.turn.turns_remaining;
      frame.steps_remaining = scenario.turn.steps_remaining;
      frame.score = scenario.turn.score;
      frame.sets_collected = scenario.turn.sets_collected;
    }
  }
  return frame;
}

/** Fold the first `count` events (the whole log when omitted) into a frame. */
export function foldTo(events: GameEventView[], count?: number): Frame {
  if (!events.length) throw new ReplayError("empty event log");
  const n = count === undefined ? events.length : count;
  if (n < 1 || n > events.length) throw new ReplayError(`prefix ${n} out of range`);
  const frame = initialFrame(events[0]);
  for (let i = 1; i < n; i++) {
    applyEvent(frame, events[i]);
    frame.eventIndex = i + 1;
  }
  return frame;
}

/** Indices worth jumping to on a timeline: turn starts and instruction sends. */
export function timelineMarks(events: GameEventView[]): { index: number; label: string }[] {
  const marks: { index: number; label: string }[] = [{ index: 1, label: "start" }];
  events.forEach((event, i) => {
    if (event.kind === "turn_transition") {
      marks.push({ index: i + 1, label: `turn ${event.payload.turn_number} (${event.payload.active_role})` });
    } else if (event.kind === "instruction_sent") {
      marks.push({ index: i + 1, label: `"${String(event.payload.text).slice(0, 24)}"` });
    } else if (event.kind === "set_completed") {
      marks.push({ index: i + 1, label: `set #${event.payload.sets_collected}` });
    }
  });
  return marks;
}
