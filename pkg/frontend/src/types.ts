// Views received from the server. The client holds no game rules: everything
// here is displayed as-is from a state sync or rebuilt from recorded events.

export interface PoseView {
  cell: [number, number];
  heading: number; // 0..5, 60-degree steps counterclockwise from +q
}

export interface TileView {
  cell: [number, number];
  terrain: string;
  elevation: number;
}

export interface PropView {
  kind: string;
  cell: [number, number];
  variant: Record<string, unknown>;
}

export interface CardView {
  id: number;
  cell: [number, number];
  selected: boolean;
  color?: string; // absent when the pattern is hidden
  shape?: string;
  count?: number;
}

export interface InstructionView {
  id: number;
  text: string;
  status: "queued" | "active" | "done" | "cancelled";
  issued_turn: number;
}

export interface TurnView {
  active_role: "leader" | "follower";
  turns_remaining: number;
  steps_remaining: number;
  score: number;
  sets_collected: number;
  time_remaining?: number | null;
}

export interface Observation {
  role: "leader" | "follower";
  rows: number;
  cols: number;
  cells: [number, number][];
  tiles: TileView[];
  props: PropView[];
  cards: CardView[];
  own_pose: PoseView;
  other_pose: PoseView | null;
  turn: TurnView;
  instructions: InstructionView[];
  selected_invalid: boolean;
  over: boolean;
  config: Record<string, unknown>;
}

export interface GameEventView {
  kind: string;
  actor: string;
  payload: Record<string, any>;
  game_id?: string | null;
  seq?: number | null;
  wall_time?: number | null;
}

export interface GameRecordView {
  game_id: string;
  final_score: number | null;
  completed: boolean;
  abandoned: boolean;
  event_count: number;
  instruction_count: number;
  replay_url?: string;
}
