// Canvas drawing for both live observations and replay frames. Purely visual:
// anything not present in the observation simply is not drawn, which is what
// keeps the follower's fog honest.

import { axialToPixel, headingVector, hexCorners } from "./hex.js";
import type { CardView, Observation, PoseView, PropView, TileView } from "./types.js";
import type { Frame } from "./replay.js";

const TERRAIN_COLORS: Record<string, string> = {
  grass: "#7fae63",
  path: "#c9b27c",
  water: "#4f81c7",
  mountain: "#9b8f84",
  ramp: "#b8a28e",
};

const PROP_GLYPHS: Record<string, string> = {
  house: "⌂",
  tree: "♣",
  streetlight: "†",
  rock: "●",
};

const SHAPE_GLYPHS: Record<string, string> = {
  plus: "✚",
  torch: "⚑",
  diamond: "◆",
  heart: "♥",
  star: "★",
  triangle: "▲",
};

export interface Scene {
  rows: number;
  cols: number;
  tiles: TileView[];
  props: PropView[];
  cards: CardView[];
  ownPose: PoseView | null;
  otherPose: PoseView | null;
  ownRole: string | null; // null draws both avatars neutrally (replay)
  selectedInvalid: boolean;
  fogged: boolean; // shade unlisted cells (follower view)
  coneDegrees: number | null;
}

export function sceneFromObservation(obs: Observation): Scene {
  return {
    rows: obs.rows,
    cols: obs.cols,
    tiles: obs.tiles,
    props: obs.props,
    cards: obs.cards,
    ownPose: obs.own_pose,
    otherPose: obs.other_pose,
    ownRole: obs.role,
    selectedInvalid: obs.selected_invalid,
    fogged: obs.role === "follower",
    coneDegrees: obs.role === "follower" ? Number(obs.config?.fov_degrees ?? 210) : null,
  };
}

export function sceneFromFrame(frame: Frame): Scene {
  return {
    rows: frame.rows,
    cols: frame.cols,
    tiles: frame.tiles,
    props: frame.props,
    cards: frame.cards,
    ownPose: frame.leader_pose,
    otherPose: frame.follower_pose,
    ownRole: null,
    selectedInvalid: false,
    fogged: false,
    coneDegrees: null,
  };
}

export class HexRenderer {
  private ctx: CanvasRenderingContext2D;
  private canvas: HTMLCanvasElement;

  constructor(canvas: HTMLCanvasElement) {
    const ctx = canvas.getContext("2d");
    if (!ctx) throw new Error("no 2d context");
    this.canvas = canvas;
    this.ctx = ctx;
  }

  draw(scene: Scene): void {
    const ctx = this.ctx;
    const spacing = Math.min(
      this.canvas.width / (scene.cols + scene.rows / 2 + 1),
      this.canvas.height / ((scene.rows + 1) * 0.87),
    );
    const offsetX = spacing * 0.8;
    const offsetY = spacing * 0.8;
    ctx.fillStyle = "#22262b";
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);

    const center = (q: number, r: number) => {
      const p = axialToPixel(q, r, spacing);
      return { x: p.x + offsetX, y: p.y + offsetY };
    };

    for (const tile of scene.tiles) {
      const c = center(tile.cell[0], tile.cell[1]);
      const corners = hexCorners(c, spacing);
      ctx.beginPath();
      corners.forEach((p, i) => (i ? ctx.lineTo(p.x, p.y) : ctx.moveTo(p.x, p.y)));
      ctx.closePath();
      ctx.fillStyle = TERRAIN_COLORS[tile.terrain] ?? "#888";
      ctx.fill();
      if (tile.elevation > 0) {
        ctx.fillStyle = "rgba(255,255,255,0.18)";
        ctx.fill();
      }
      ctx.strokeStyle = scene.fogged ? "#3a3f45" : "#5d6862";
      ctx.lineWidth = 1;
      ctx.stroke();
    }

    for (const prop of scene.props) {
      const c = center(prop.cell[0], prop.cell[1]);
      ctx.fillStyle = prop.kind === "house" ? String(prop.variant?.roof_color ?? "brown") : "#2e4428";
      ctx.font = `${spacing * 0.62}px sans-serif`;
      ctx.textAlign = "center";
      ctx.textBaseline = "middle";
      ctx.fillText(PROP_GLYPHS[prop.kind] ?? "?", c.x, c.y);
    }

    for (const card of scene.cards) {
      this.drawCard(card, center(card.cell[0], card.cell[1]), spacing, scene.selectedInvalid);
    }

    if (scene.coneDegrees !== null && scene.ownPose) {
      this.drawCone(center(scene.ownPose.cell[0], scene.ownPose.cell[1]), scene.ownPose.heading,
        scene.coneDegrees, spacing * 3.2);
    }

    if (scene.otherPose) {
      const otherRole = scene.ownRole === "leader" ? "F" : "L";
      this.drawAvatar(center(scene.otherPose.cell[0], scene.otherPose.cell[1]), scene.otherPose.heading,
        spacing, scene.ownRole === null ? "F" : otherRole, "#cf5b8e");
    }
    if (scene.ownPose) {
      const ownLabel = scene.ownRole === null ? "L" : scene.ownRole === "leader" ? "L" : "F";
      this.drawAvatar(center(scene.ownPose.cell[0], scene.ownPose.cell[1]), scene.ownPose.heading,
        spacing, ownLabel, "#3fa7d6");
    }
  }

  private drawCard(card: CardView, c: { x: number; y: number }, spacing: number, invalid: boolean): void {
    const ctx = this.ctx;
    const w = spacing * 0.58;
    const h = spacing * 0.72;
    ctx.fillStyle = "#f4efdf";
    ctx.fillRect(c.x - w / 2, c.y - h / 2, w, h);
    if (card.selected) {
      ctx.lineWidth = 3;
      ctx.strokeStyle = invalid ? "#e03131" : "#f5c518";
    } else {
      ctx.lineWidth = 1;
      ctx.strokeStyle = "#6b6455";
    }
    ctx.strokeRect(c.x - w / 2, c.y - h / 2, w, h);
    ctx.textAlign = "center";
    ctx.textBaseline = "middle";
    if (card.shape === undefined || card.color === undefined || card.count === undefined) {
      ctx.fillStyle = "#444";
      ctx.font = `bold ${spacing * 0.45}px sans-serif`;
      ctx.fillText("?", c.x, c.y);
      return;
    }
    const glyph = SHAPE_GLYPHS[card.shape] ?? "■";
    ctx.fillStyle = card.color;
    ctx.font = `${spacing * 0.3}px sans-serif`;
    const step = h / 4;
    for (let i = 0; i < card.count; i++) {
      const y = c.y + (i - (card.count - 1) / 2) * step;
      ctx.fillText(glyph, c.x, y);
    }
  }

  private drawCone(c: { x: number; y: number }, heading: number, degrees: number, radius: number): void {
    const ctx = this.ctx;
    const facing = -(Math.PI / 180) * 60 * heading; // screen y is flipped
    const half = (Math.PI / 180) * (degrees / 2);
    ctx.beginPath();
    ctx.moveTo(c.x, c.y);
    ctx.arc(c.x, c.y, radius, facing - half, facing + half);
    ctx.closePath();
    ctx.fillStyle = "rgba(255, 244, 180, 0.13)";
    ctx.fill();
  }

  private drawAvatar(c: { x: number; y: number }, heading: number, spacing: number,
                     label: string, color: string): void {
    const ctx = this.ctx;
    ctx.beginPath();
    ctx.arc(c.x, c.y, spacing * 0.3, 0, Math.PI * 2);
    ctx.fillStyle = color;
    ctx.fill();
    ctx.strokeStyle = "#10232c";
    ctx.lineWidth = 2;
    ctx.stroke();
    const dir = headingVector(heading);
    ctx.beginPath();
    ctx.moveTo(c.x + dir.x * spacing * 0.3, c.y + dir.y * spacing * 0.3);
    ctx.lineTo(c.x + dir.x * spacing * 0.55, c.y + dir.y * spacing * 0.55);
    ctx.stroke();
    ctx.fillStyle = "#fff";
    ctx.font = `bold ${spacing * 0.32}px sans-serif`;
    ctx.textAlign = "center";
    ctx.textBaseline = "middle";
    ctx.fillText(label, c.x, c.y);
  }
}
