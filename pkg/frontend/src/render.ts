/** Canvas rendering: a pure function of the latest state message.
 *
 * Color scheme: the human-controlled ball is always white; other agents
 * are red for wolves and blue for sheep or cooperative teammates;
 * landmarks and grass are black; obstacles gray. No text or styling ever
 * reveals which method an agent was trained with (the server does not
 * send it, and nothing here invents one).
 */

import type { EntityState, JoinedMsg, StateMsg } from "./protocol.js";
import { protocolView, type ClientState } from "./state.js";

/** The subset of CanvasRenderingContext2D the renderer uses; tests pass a
 * recording stub. */
export interface Canvas2DLike {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fill(): void;
  fillText(text: string, x: number, y: number): void;
}

export interface Viewport {
  width: number;
  height: number;
  margin: number;
}

export const COLORS = {
  background: "#1c1f26",
  arena: "#2a2e38",
  border: "#555c6e",
  human: "#ffffff",
  wolf: "#e0433f",
  sheep: "#4a90d9",
  teammate: "#4a90d9",
  landmark: "#000000",
  grass: "#000000",
  obstacle: "#8a8a8a",
  text: "#e8e8e8",
} as const;

/** Arena [-1,1]^2 to canvas pixels (y up in world, down on canvas). */
export function worldToCanvas(
  x: number,
  y: number,
  view: Viewport,
): [number, number] {
  const side = Math.min(view.width, view.height) - 2 * view.margin;
  const cx = view.width / 2 + (x / 2) * side;
  const cy = view.height / 2 - (y / 2) * side;
  return [cx, cy];
}

export function entityColor(entity: EntityState, humanId: number): string {
  if (entity.id === humanId) return COLORS.human;
  switch (entity.role) {
    case "wolf":
      return COLORS.wolf;
    case "sheep":
      return COLORS.sheep;
    case "agent":
      return COLORS.teammate;
    case "landmark":
      return COLORS.landmark;
    case "grass":
      return COLORS.grass;
    case "obstacle":
      return COLORS.obstacle;
  }
}

export function render(
  ctx: Canvas2DLike,
  view: Viewport,
  state: StateMsg,
  session: JoinedMsg,
): void {
  const side = Math.min(view.width, view.height) - 2 * view.margin;
  ctx.fillStyle = COLORS.background;
  ctx.fillRect(0, 0, view.width, view.height);
  const [left, top] = worldToCanvas(-1, 1, view);
  ctx.fillStyle = COLORS.arena;
  ctx.fillRect(left, top, side, side);
  ctx.strokeStyle = COLORS.border;
  ctx.lineWidth = 2;
  ctx.strokeRect(left, top, side, side);

  const radiusOf = new Map(session.entities.map((e) => [e.id, e.radius]));
  // landmarks and grass first so agents draw on top of them
  const order = [...state.entities].sort((a, b) => {
    const statics = (e: EntityState) =>
      e.role === "landmark" || e.role === "grass" || e.role === "obstacle" ? 0 : 1;
    return statics(a) - statics(b) || a.id - b.id;
  });
  for (const entity of order) {
    const [cx, cy] = worldToCanvas(entity.x, entity.y, view);
    const r = (radiusOf.get(entity.id) ?? 0.05) * (side / 2);
    ctx.fillStyle = entityColor(entity, session.human_entity);
    ctx.beginPath();
    ctx.arc(cx, cy, Math.max(r, 2), 0, 2 * Math.PI);
    ctx.fill();
  }
}

export function renderHud(
  ctx: Canvas2DLike,
  view: Viewport,
  client: ClientState,
): void {
  const hud = protocolView(client);
  ctx.fillStyle = COLORS.text;
  ctx.font = "14px monospace";
  ctx.fillText(hud.episodeCounter, 12, 20);
  ctx.fillText(`score ${hud.runningScore.toFixed(1)}`, 12, 40);
  hud.scoreHistory.forEach((s, i) => {
    ctx.fillText(`episode ${i + 1}: ${s.toFixed(1)}`, 12, 64 + 18 * i);
  });
  if (hud.summary !== null) {
    ctx.fillText(hud.summary, 12, view.height - 16);
  }
}
