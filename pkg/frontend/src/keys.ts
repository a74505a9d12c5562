/** Arrow-key capture: keydown maps to an action message, keyup to "none",
 * anything else is ignored. The client re-sends the held key every
 * animation frame because the server's mailbox reverts to "none" after
 * each tick without a message. */

import type { ActionKey, ActionMsg } from "./protocol.js";

const KEY_MAP: Record<string, ActionKey> = {
  ArrowUp: "up",
  ArrowDown: "down",
  ArrowLeft: "left",
  ArrowRight: "right",
};

export interface KeyEventLike {
  type: "keydown" | "keyup";
  key: string;
}

export function mapKey(event: KeyEventLike): ActionMsg | null {
  const action = KEY_MAP[event.key];
  if (action === undefined) return null;
  if (event.type === "keyup") return { type: "action", key: "none" };
  return { type: "action", key: action };
}

/** Tracks the currently held arrow key so it can be re-sent per frame. */
export class HeldKey {
  private current: ActionKey = "none";

  handle(event: KeyEventLike): ActionMsg | null {
    const msg = mapKey(event);
    if (msg === null) return null;
    if (event.type === "keyup" && KEY_MAP[event.key] !== this.current) {
      return null; // releasing a key that is no longer active
    }
    this.current = msg.key;
    return msg;
  }

  message(): ActionMsg {
    return { type: "action", key: this.current };
  }
}
