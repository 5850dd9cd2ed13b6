/** Wire types for the playforge HTTP API plus the editor's own state. */

export type RoleName = "QB" | "RB" | "FB" | "WR" | "TE" | "C" | "G" | "T";

export const ROLE_NAMES: RoleName[] = ["QB", "RB", "FB", "WR", "TE", "C", "G", "T"];

/** [x, y] in yards, origin at the ball spot, offense facing +x. */
export type Point = [number, number];

export interface Player {
  position: Point;
  role: RoleName;
}

export interface ModelInfo {
  config: Record<string, unknown>;
  param_count: number;
  M: number;
  num_agents: number | null;
}

export interface GenerateRequest {
  formation: Point[];
  roles: RoleName[];
  temperature: number;
  num_samples: number;
  seed?: number;
  component?: number;
}

export interface GeneratedSample {
  trajectory: Point[][]; // [frame][agent] -> [x, y] yards
  component: number;
  seed: number;
}

export interface GenerateResponse {
  samples: GeneratedSample[];
  pi_bar: number[];
  seed: number;
}

export interface ConceptTrajectory {
  component: number;
  trajectory: Point[][];
}

export interface ConceptsResponse {
  concepts: ConceptTrajectory[];
  pi_bar: number[];
}

export interface ApiError {
  error: string;
  detail: string;
}

/** One displayed trajectory set (a sample or a concept mean). */
export interface DisplayedPlay {
  trajectory: Point[][];
  component: number;
  label: string;
}

export type ComponentFilter = "ALL" | number;

export interface EditorState {
  players: Player[];
  samples: DisplayedPlay[];
  piBar: number[];
  temperature: number;
  numSamples: number;
  componentFilter: ComponentFilter;
  serverUrl: string;
  seed: number | null;
  mixtureSize: number;
  error: string | null;
}
