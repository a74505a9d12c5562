/** Scripted headless session driver (node): plays a full session against a
 * live server, sending one scripted key per received state message. Used
 * by the protocol-conformance test and handy for soak-testing a server. */

import {
  PROTOCOL_VERSION,
  parseServerMsg,
  type ActionKey,
  type EpisodeEndMsg,
  type JoinedMsg,
  type SessionEndMsg,
  type StateMsg,
} from "./protocol.js";

export interface HeadlessResult {
  joined: JoinedMsg;
  states: number;
  episodeEnds: EpisodeEndMsg[];
  sessionEnd: SessionEndMsg;
}

interface NodeWs {
  on(event: "open", fn: () => void): void;
  on(event: "message", fn: (data: { toString(): string }) => void): void;
  on(event: "error", fn: (err: Error) => void): void;
  on(event: "close", fn: () => void): void;
  send(data: string): void;
  close(): void;
}

/** `keyScript(episode, step)` picks the key sent after each state. */
export function runHeadlessSession(
  ws: NodeWs,
  role: string,
  keyScript: (episode: number, step: number) => ActionKey,
  timeoutMs = 120_000,
): Promise<HeadlessResult> {
  return new Promise((resolve, reject) => {
    let joined: JoinedMsg | null = null;
    let states = 0;
    const episodeEnds: EpisodeEndMsg[] = [];
    const timer = setTimeout(() => {
      ws.close();
      reject(new Error(`session timed out after ${timeoutMs} ms`));
    }, timeoutMs);

    ws.on("open", () => {
      ws.send(JSON.stringify({ type: "join", role, protocol: PROTOCOL_VERSION }));
    });
    ws.on("error", (err) => {
      clearTimeout(timer);
      reject(err);
    });
    ws.on("message", (data) => {
      const msg = parseServerMsg(data.toString());
      if (msg === null) return;
      switch (msg.type) {
        case "joined":
          joined = msg;
          break;
        case "state": {
          states += 1;
          const s = msg as StateMsg;
          ws.send(
            JSON.stringify({ type: "action", key: keyScript(s.episode, s.step) }),
          );
          break;
        }
        case "episode_end":
          episodeEnds.push(msg as EpisodeEndMsg);
          break;
        case "session_end":
          clearTimeout(timer);
          ws.close();
          if (joined === null) {
            reject(new Error("session ended before the join handshake completed"));
            return;
          }
          resolve({ joined, states, episodeEnds, sessionEnd: msg as SessionEndMsg });
          break;
        case "error":
          clearTimeout(timer);
          ws.close();
          reject(new Error(`server error: ${msg.reason}`));
          break;
      }
    });
  });
}
