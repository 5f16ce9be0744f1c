import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { describe, expect, it } from "vitest";

import { foldTo, ReplayError, timelineMarks } from "../src/replay.js";
import type { GameEventView, GameRecordView } from "../src/types.js";

const here = dirname(fileURLToPath(import.meta.url));
const events: GameEventView[] = JSON.parse(
  readFileSync(join(here, "fixtures", "game_events.json"), "utf-8"),
);
const record: GameRecordView = JSON.parse(
  readFileSync(join(here, "fixtures", "game_record.json"), "utf-8"),
);

describe("replay fold", () => {
  it("final frame score matches the recorded final score", () => {
    const frame = foldTo(events);
    expect(frame.score).toBe(record.final_score);
    expect(frame.over).toBe(true);
    expect(frame.eventIndex).toBe(events.length);
  });

  it("step forward then back lands on an identical frame", () => {
    for (const k of [1, 2, Math.floor(events.length / 2), events.length - 1]) {
      const before = foldTo(events, k);
      foldTo(events, k + 1); // step forward
      const after = foldTo(events, k); // and back
      expect(after).toEqual(before);
    }
  });

  it("card count stays constant across every frame", () => {
    const initial = foldTo(events, 1).cards.length;
    for (let k = 1; k <= events.length; k++) {
      expect(foldTo(events, k).cards.length).toBe(initial);
    }
  });

  it("set completions raise the score one at a time", () => {
    let last = 0;
    for (let k = 1; k <= events.length; k++) {
      const frame = foldTo(events, k);
      expect(frame.score === last || frame.score === last + 1).toBe(true);
      expect(frame.score).toBe(frame.sets_collected);
      last = frame.score;
    }
    expect(last).toBe(record.final_score);
  });

  it("instruction statuses follow the queued/active/terminal lifecycle", () => {
    const seen: Record<number, string[]> = {};
    for (let k = 1; k <= events.length; k++) {
      for (const ins of foldTo(events, k).instructions) {
        const history = (seen[ins.id] ??= []);
        if (history[history.length - 1] !== ins.status) history.push(ins.status);
      }
    }
    const allowed = new Set([
      "queued", "queued>active", "queued>active>done", "queued>active>cancelled", "queued>cancelled",
    ]);
    for (const history of Object.values(seen)) {
      expect(allowed.has(history.join(">"))).toBe(true);
    }
  });

  it("rejects malformed logs with a replay error", () => {
    expect(() => foldTo([])).toThrow(ReplayError);
    expect(() => foldTo(events.slice(1))).toThrow(ReplayError);
    const tampered = [...events.slice(0, 5), { kind: "warp", actor: "server", payload: {} }];
    expect(() => foldTo(tampered)).toThrow(ReplayError);
  });

  it("builds timeline marks for turns, instructions and sets", () => {
    const marks = timelineMarks(events);
    expect(marks[0].label).toBe("start");
    expect(marks.some((m) => m.label.startsWith("turn"))).toBe(true);
    expect(marks.some((m) => m.label.startsWith("set #"))).toBe(true);
    for (const mark of marks) {
      expect(mark.index).toBeGreaterThanOrEqual(1);
      expect(mark.index).toBeLessThanOrEqual(events.length);
    }
  });
});
