/** Client session state: connection status, latest world snapshot, and the
 * per-episode score history for the five-episode protocol flow. */

import type { EpisodeEndMsg, JoinedMsg, ServerMsg, StateMsg } from "./protocol.js";

export type ConnectionStatus = "connecting" | "joined" | "playing" | "finished" | "error";

export interface ClientState {
  status: ConnectionStatus;
  session: JoinedMsg | null;
  lastState: StateMsg | null;
  episodeScores: number[]; // human's reward per finished episode
  errorReason: string | null;
}

export function initialState(): ClientState {
  return {
    status: "connecting",
    session: null,
    lastState: null,
    episodeScores: [],
    errorReason: null,
  };
}

/** Pure reducer: the render loop only ever sees the latest state message. */
export function applyMessage(state: ClientState, msg: ServerMsg): ClientState {
  switch (msg.type) {
    case "joined":
      return { ...state, status: "joined", session: msg };
    case "state":
      return { ...state, status: "playing", lastState: msg };
    case "episode_end": {
      const human = state.session ? String(state.session.human_entity) : "";
      const score = (msg as EpisodeEndMsg).rewards[human] ?? 0;
      const episodeScores = [...state.episodeScores, score];
      return episodeScores.length <= (state.session?.episodes ?? Infinity)
        ? { ...state, episodeScores }
        : state;
    }
    case "session_end":
      return { ...state, status: "finished" };
    case "error":
      return { ...state, status: "error", errorReason: msg.reason };
  }
}

export interface ProtocolView {
  episodeCounter: string; // e.g. "episode 3 / 5"
  runningScore: number;
  scoreHistory: number[];
  summary: string | null; // set once the session is over
}

/** The HUD contents for the five-episode protocol flow. */
export function protocolView(state: ClientState): ProtocolView {
  const episodes = state.session?.episodes ?? 0;
  const current = Math.min(
    (state.lastState?.episode ?? 0) + 1,
    Math.max(episodes, 1),
  );
  const human = state.session ? String(state.session.human_entity) : "";
  const running = state.lastState?.scores[human] ?? 0;
  let summary: string | null = null;
  if (state.status === "finished") {
    const total = state.episodeScores.reduce((a, b) => a + b, 0);
    summary = `session over: total ${total.toFixed(1)} across ${state.episodeScores.length} episodes`;
  }
  return {
    episodeCounter: `episode ${current} / ${episodes}`,
    runningScore: running,
    scoreHistory: [...state.episodeScores],
    summary,
  };
}
