/** JSON websocket protocol, version 1 (mirrors the server's schema). */

export const PROTOCOL_VERSION = 1;

export type RoleName = "agent" | "sheep" | "wolf" | "landmark" | "grass" | "obstacle";

export interface EntityMeta {
  id: number;
  role: RoleName;
  radius: number;
}

export interface JoinedMsg {
  type: "joined";
  protocol: number;
  scenario: string;
  role: RoleName;
  human_entity: number;
  episodes: number;
  steps: number;
  entities: EntityMeta[];
}

export interface EntityState {
  id: number;
  role: RoleName;
  x: number;
  y: number;
  vx: number;
  vy: number;
}

export interface StateMsg {
  type: "state";
  tick: number;
  step: number;
  episode: number;
  entities: EntityState[];
  scores: Record<string, number>;
}

export interface EpisodeEndMsg {
  type: "episode_end";
  episode: number;
  rewards: Record<string, number>;
}

export interface SessionEndMsg {
  type: "session_end";
  summary: { episodes: number; rewards: Record<string, number>[] };
}

export interface ErrorMsg {
  type: "error";
  reason: string;
}

export type ServerMsg = JoinedMsg | StateMsg | EpisodeEndMsg | SessionEndMsg | ErrorMsg;

export type ActionKey = "up" | "down" | "left" | "right" | "none";

export interface ActionMsg {
  type: "action";
  key: ActionKey;
}

export interface JoinMsg {
  type: "join";
  role: string;
  protocol: number;
}

export function parseServerMsg(raw: string): ServerMsg | null {
  let obj: unknown;
  try {
    obj = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof obj !== "object" || obj === null || !("type" in obj)) return null;
  const type = (obj as { type: unknown }).type;
  if (
    type === "joined" ||
    type === "state" ||
    type === "episode_end" ||
    type === "session_end" ||
    type === "error"
  ) {
    return obj as ServerMsg;
  }
  return null;
}
