/** Editor state: defaults, drag updates, and formation import/export. */

import { snapToGrid } from "./geometry.js";
import type { EditorState, Player, Point, RoleName } from "./types.js";
import { ROLE_NAMES } from "./types.js";

/** Role order used when building a default team of a given size. */
const ROLE_SEQUENCE: RoleName[] = ["C", "QB", "WR", "WR", "RB", "TE", "G", "G", "T", "T", "WR"];

export function defaultFormation(numAgents: number): Player[] {
  const players: Player[] = [];
  const seen: Record<string, number> = {};
  for (let i = 0; i < numAgents; i++) {
    const role = ROLE_SEQUENCE[i % ROLE_SEQUENCE.length];
    const k = seen[role] ?? 0;
    seen[role] = k + 1;
    const side = k % 2 === 0 ? 1 : -1;
    let position: Point;
    switch (role) {
      case "C": position = [0, 0]; break;
      case "G": position = [0, side * 1.5]; break;
      case "T": position = [0, side * 3]; break;
      case "QB": position = [-5, 0]; break;
      case "RB": position = [-7, side * 2]; break;
      case "FB": position = [-6, side * 1]; break;
      case "TE": position = [-0.5, side * 4.5]; break;
      default: position = [-1, side * (11 + 4 * Math.floor(k / 2))];
    }
    players.push({ role, position });
  }
  return players;
}

export function initialState(serverUrl: string): EditorState {
  return {
    players: defaultFormation(11),
    samples: [],
    piBar: [],
    temperature: 0.8,
    numSamples: 3,
    componentFilter: "ALL",
    serverUrl,
    seed: null,
    mixtureSize: 0,
    error: null,
  };
}

/** Move one player, snapping to the half-yard grid. */
export function movePlayer(state: EditorState, index: number, position: Point): EditorState {
  const players = state.players.map((p, i) =>
    i === index ? { ...p, position: snapToGrid(position) } : p
  );
  return { ...state, players };
}

/** Cycle a player's role through the eight roles. */
export function cycleRole(state: EditorState, index: number): EditorState {
  const players = state.players.map((p, i) => {
    if (i !== index) return p;
    const next = ROLE_NAMES[(ROLE_NAMES.indexOf(p.role) + 1) % ROLE_NAMES.length];
    return { ...p, role: next };
  });
  return { ...state, players };
}

export function visibleSamples(state: EditorState) {
  if (state.componentFilter === "ALL") return state.samples;
  return state.samples.filter((s) => s.component === state.componentFilter);
}

// ---------------------------------------------------------------------------
// Import/export: the same JSON document the CLI's generate command accepts.
// ---------------------------------------------------------------------------

export interface FormationDocument {
  formation: Point[];
  roles: RoleName[];
}

export function exportFormation(state: EditorState): string {
  const doc: FormationDocument = {
    formation: state.players.map((p) => [p.position[0], p.position[1]]),
    roles: state.players.map((p) => p.role),
  };
  return JSON.stringify(doc, null, 2);
}

export class FormationImportError extends Error {
  readonly problems: string[];

  constructor(problems: string[]) {
    super(`invalid formation document: ${problems.join("; ")}`);
    this.problems = problems;
  }
}

/**
 * Parse a formation document, normalizing role-name casing.  Collects every
 * problem (wrong player count, unknown roles, bad coordinates) instead of
 * stopping at the first.
 */
export function parseFormationDocument(text: string, expectedPlayers: number): Player[] {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch {
    throw new FormationImportError(["not valid JSON"]);
  }
  const problems: string[] = [];
  const record = doc as Partial<FormationDocument>;
  const formation = Array.isArray(record.formation) ? record.formation : null;
  const roles = Array.isArray(record.roles) ? record.roles : null;
  if (!formation) problems.push("formation: missing or not an array");
  if (!roles) problems.push("roles: missing or not an array");
  if (formation && roles && formation.length !== roles.length) {
    problems.push(`formation has ${formation.length} entries but roles has ${roles.length}`);
  }
  if (formation && formation.length !== expectedPlayers) {
    problems.push(`expected ${expectedPlayers} players, got ${formation.length}`);
  }
  const players: Player[] = [];
  if (formation && roles) {
    formation.forEach((pos, i) => {
      const xy = pos as unknown as number[];
      if (!Array.isArray(xy) || xy.length !== 2 || !xy.every((v) => Number.isFinite(v))) {
        problems.push(`formation[${i}]: must be a finite [x, y] pair`);
        return;
      }
      const roleRaw = String(roles[i] ?? "").trim().toUpperCase();
      if (!ROLE_NAMES.includes(roleRaw as RoleName)) {
        problems.push(`roles[${i}]: unknown role ${JSON.stringify(roles[i])}`);
        return;
      }
      players.push({ position: [xy[0], xy[1]], role: roleRaw as RoleName });
    });
  }
  if (problems.length) throw new FormationImportError(problems);
  return players;
}

export function importFormation(state: EditorState, text: string): EditorState {
  const players = parseFormationDocument(text, state.players.length);
  return { ...state, players, samples: [], piBar: [] };
}
