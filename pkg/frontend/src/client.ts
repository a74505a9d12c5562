/** Websocket session client: join handshake, message dispatch into the
 * client state, per-frame key re-send. Works against any WebSocket-shaped
 * transport so the headless test driver can reuse it under node. */

import { HeldKey, type KeyEventLike } from "./keys.js";
import {
  PROTOCOL_VERSION,
  parseServerMsg,
  type ServerMsg,
} from "./protocol.js";
import { applyMessage, initialState, type ClientState } from "./state.js";

export interface WebSocketLike {
  send(data: string): void;
  close(): void;
  onmessage: ((event: { data: string }) => void) | null;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
}

export class SessionClient {
  state: ClientState = initialState();
  private held = new HeldKey();
  private listeners: ((state: ClientState, msg: ServerMsg | null) => void)[] = [];

  constructor(
    private ws: WebSocketLike,
    private role: string,
  ) {
    ws.onopen = () => {
      ws.send(
        JSON.stringify({ type: "join", role: this.role, protocol: PROTOCOL_VERSION }),
      );
    };
    ws.onmessage = (event) => {
      const msg = parseServerMsg(event.data);
      if (msg === null) return;
      this.state = applyMessage(this.state, msg);
      for (const fn of this.listeners) fn(this.state, msg);
    };
    ws.onclose = () => {
      if (this.state.status !== "finished" && this.state.status !== "error") {
        this.state = { ...this.state, status: "error", errorReason: "connection closed" };
        for (const fn of this.listeners) fn(this.state, null);
      }
    };
  }

  onUpdate(fn: (state: ClientState, msg: ServerMsg | null) => void): void {
    this.listeners.push(fn);
  }

  /** Key events forward immediately (latency under one tick locally). */
  handleKey(event: KeyEventLike): void {
    const msg = this.held.handle(event);
    if (msg !== null && this.state.status === "playing") {
      this.ws.send(JSON.stringify(msg));
    }
  }

  /** Called once per animation frame: re-sends the held key so the
   * server-side mailbox never reverts to "none" while a key is down. */
  heartbeat(): void {
    if (this.state.status === "playing" && this.held.message().key !== "none") {
      this.ws.send(JSON.stringify(this.held.message()));
    }
  }

  close(): void {
    this.ws.close();
  }
}
