/** Page wiring: connect, render at animation-frame cadence, forward keys. */

import { SessionClient, type WebSocketLike } from "./client.js";
import { render, renderHud, type Viewport } from "./render.js";

function param(name: string, fallback: string): string {
  return new URLSearchParams(window.location.search).get(name) ?? fallback;
}

export function start(): void {
  const canvas = document.getElementById("arena") as HTMLCanvasElement;
  const statusLine = document.getElementById("status") as HTMLElement;
  const url = param("server", "ws://127.0.0.1:8765/session");
  const role = param("role", "agent");
  const view: Viewport = { width: canvas.width, height: canvas.height, margin: 24 };

  const ws = new WebSocket(url) as unknown as WebSocketLike;
  const client = new SessionClient(ws, role);

  client.onUpdate((state) => {
    if (state.status === "error") {
      statusLine.textContent = `error: ${state.errorReason}`;
    } else if (state.status === "joined") {
      statusLine.textContent =
        `joined as ${role}; use the arrow keys to move (you are the white ball)`;
    } else if (state.status === "finished") {
      statusLine.textContent = "session finished";
    }
  });

  window.addEventListener("keydown", (e) => {
    if (e.key.startsWith("Arrow")) e.preventDefault();
    client.handleKey({ type: "keydown", key: e.key });
  });
  window.addEventListener("keyup", (e) => {
    client.handleKey({ type: "keyup", key: e.key });
  });

  const ctx = canvas.getContext("2d")!;
  function frame(): void {
    client.heartbeat();
    const { lastState, session } = client.state;
    if (lastState !== null && session !== null) {
      render(ctx, view, lastState, session);
      renderHud(ctx, view, client.state);
    }
    requestAnimationFrame(frame);
  }
  requestAnimationFrame(frame);
}

start();
