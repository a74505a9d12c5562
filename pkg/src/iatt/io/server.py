"""Human-play session server: a versioned JSON-over-websocket protocol on
/session, a fixed-cadence simulation tick decoupled from client messages,
and replayable session logs.

Protocol (version 1):
  client -> server:  {"type": "join", "role": "...", "protocol": 1}
                     {"type": "action", "key": "up|down|left|right|none"}
  server -> client:  {"type": "joined", ...static session info...}
                     {"type": "state", "tick", "step", "episode",
                      "entities": [{"id","role","x","y","vx","vy"}], "scores": {...}}
                     {"type": "episode_end", "episode", "rewards": {...}}
                     {"type": "session_end", "summary": {...}}
                     {"type": "error", "reason": "..."}

Method tags are never sent: players are not told which kind of agent they
play with. The human force comes from the latest key received since the
previous tick; with no message the key reverts to "none", so clients
re-send the held key at least once per tick window.
"""

from __future__ import annotations

import asyncio
import json
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from ..agents import PolicyBundle, ScenarioCodec, make_bundle
from ..engine import Role, ScenarioSpec, make_world
from ..errors import ConfigurationError
from ..training import StepDriver

PROTOCOL_VERSION = 1

KEY_FORCES = {
    "up": (0.0, 1.0),
    "down": (0.0, -1.0),
    "left": (-1.0, 0.0),
    "right": (1.0, 0.0),
    "none": (0.0, 0.0),
}

ROLE_NAMES = {int(r): r.name.lower() for r in Role}
ROLE_BY_NAME = {r.name.lower(): int(r) for r in Role}


@dataclass
class SessionResult:
    episodes: list[dict] = field(default_factory=list)
    completed: bool = False


class PlaySession:
    """One world, one human slot, bundle-driven remaining slots.

    The session owns the deterministic seed chain, so a log of
    (seed, key sequence) per episode replays to identical rewards.
    """

    def __init__(
        self,
        spec: ScenarioSpec,
        human_role: str,
        bundles: list[PolicyBundle],
        seed: int = 0,
        episodes: int = 5,
        steps: int = 100,
        bundle_refs: list[str] | None = None,
    ):
        if human_role not in ROLE_BY_NAME:
            raise ConfigurationError(f"unknown role {human_role!r}")
        self.spec = ScenarioSpec(**{**spec.to_dict(), "horizon": steps})
        self.codec = ScenarioCodec(self.spec)
        self.human_role = ROLE_BY_NAME[human_role]
        slots = self.codec.agent_ids
        human_slots = [
            i for i, sid in enumerate(slots) if self.codec.roles[sid] == self.human_role
        ]
        if not human_slots:
            raise ConfigurationError(
                f"scenario {self.spec.kind} has no {human_role} slot"
            )
        self.human_slot = human_slots[0]
        if len(bundles) == len(slots) - 1:
            # synthesize an encoding-only placeholder for the human slot
            nets = bundles[0].nets if bundles else None
            if nets is None:
                raise ConfigurationError("need at least one agent checkpoint")
            placeholder = make_bundle(
                "self_att", self.spec, slots[self.human_slot], nets, seed=0
            )
            bundles = (
                bundles[: self.human_slot]
                + [placeholder]
                + bundles[self.human_slot :]
            )
        if len(bundles) != len(slots):
            raise ConfigurationError(
                f"need {len(slots) - 1} agent checkpoints for {self.spec.kind}"
                f" (got {len(bundles)})"
            )
        self.bundles = bundles
        self.seed = seed
        self.episodes = episodes
        self.steps = steps
        self.bundle_refs = bundle_refs or ["<memory>"] * len(bundles)
        self._episode_seeds = [seed + 1000 * (e + 1) for e in range(episodes)]
        self.result = SessionResult()
        self.episode = 0
        self.step_in_episode = 0
        self.tick = 0
        self._driver: StepDriver | None = None
        self._scores: np.ndarray | None = None
        self._keys: list[str] = []

    # -- episode lifecycle ----------------------------------------------------
    def start_episode(self):
        world = make_world(self.spec, self._episode_seeds[self.episode])
        self._driver = StepDriver(
            [world], self.bundles, stochastic=False, auto_reset=False
        )
        self._scores = np.zeros(len(self.bundles))
        self._keys = []
        self.step_in_episode = 0

    def tick_once(self, key: str) -> dict:
        """Apply the human key, advance one step, return the state message."""
        if key not in KEY_FORCES:
            key = "none"
        self._keys.append(key)
        force = np.array(KEY_FORCES[key])
        rec = self._driver.step(action_overrides={self.human_slot: force})
        self._scores += rec["scoring"][0]
        self.step_in_episode += 1
        self.tick += 1
        return self.state_message()

    def episode_done(self) -> bool:
        return self.step_in_episode >= self.steps

    def finish_episode(self) -> dict:
        rewards = {
            str(sid): float(self._scores[i])
            for i, sid in enumerate(self.codec.agent_ids)
        }
        self.result.episodes.append(
            {
                "seed": self._episode_seeds[self.episode],
                "keys": list(self._keys),
                "rewards": rewards,
            }
        )
        self.episode += 1
        return {"type": "episode_end", "episode": self.episode - 1, "rewards": rewards}

    def session_done(self) -> bool:
        return self.episode >= self.episodes

    # -- messages ---------------------------------------------------------------
    def joined_message(self) -> dict:
        world = make_world(self.spec, self._episode_seeds[0])
        return {
            "type": "joined",
            "protocol": PROTOCOL_VERSION,
            "scenario": self.spec.kind,
            "role": ROLE_NAMES[self.human_role],
            "human_entity": int(self.codec.agent_ids[self.human_slot]),
            "episodes": self.episodes,
            "steps": self.steps,
            "entities": [
                {
                    "id": int(i),
                    "role": ROLE_NAMES[int(world.role[i])],
                    "radius": float(world.radius[i]),
                }
                for i in range(world.n_entities)
            ],
        }

    def state_message(self) -> dict:
        world = self._driver.worlds[0]
        return {
            "type": "state",
            "tick": self.tick,
            "step": self.step_in_episode,
            "episode": self.episode,
            "entities": [
                {
                    "id": int(i),
                    "role": ROLE_NAMES[int(world.role[i])],
                    "x": float(world.pos[i, 0]),
                    "y": float(world.pos[i, 1]),
                    "vx": float(world.vel[i, 0]),
                    "vy": float(world.vel[i, 1]),
                }
                for i in range(world.n_entities)
            ],
            "scores": {
                str(sid): float(self._scores[i])
                for i, sid in enumerate(self.codec.agent_ids)
            },
        }

    def session_log(self) -> dict:
        return {
            "protocol": PROTOCOL_VERSION,
            "scenario": self.spec.to_dict(),
            "human_role": ROLE_NAMES[self.human_role],
            "human_slot": self.human_slot,
            "seed": self.seed,
            "episodes_planned": self.episodes,
            "steps": self.steps,
            "bundle_refs": self.bundle_refs,
            "completed": self.result.completed,
            "episodes": self.result.episodes,
        }


def serve_play_session(
    spec: ScenarioSpec,
    human_role: str,
    bundles: list[PolicyBundle],
    keys_by_episode: list[list[str]],
    seed: int = 0,
    episodes: int = 5,
    steps: int = 100,
) -> dict:
    """Run a full session headlessly from scripted keys; returns the log.

    The websocket endpoint drives the same PlaySession; this entry point is
    the network-free equivalent (and what replay verification uses).
    """
    session = PlaySession(
        spec, human_role, bundles, seed=seed, episodes=episodes, steps=steps
    )
    for ep in range(episodes):
        session.start_episode()
        keys = keys_by_episode[ep] if ep < len(keys_by_episode) else []
        while not session.episode_done():
            key = keys[session.step_in_episode] if session.step_in_episode < len(keys) else "none"
            session.tick_once(key)
        session.finish_episode()
    session.result.completed = True
    return session.session_log()


class _Mailbox:
    """Single-slot latest-key mailbox; reading consumes the value."""

    def __init__(self):
        self._key: str | None = None

    def put(self, key: str):
        self._key = key

    def take(self) -> str:
        key, self._key = self._key, None
        return key if key is not None else "none"


def create_app(session_factory, tick_hz: float = 10.0, log_path=None) -> FastAPI:
    """ASGI app exposing /session; `session_factory(role) -> PlaySession`."""
    app = FastAPI()
    interval = 1.0 / tick_hz

    async def _reader(ws: WebSocket, mailbox: _Mailbox):
        while True:
            try:
                raw = await ws.receive_text()
            except Exception:
                return
            try:
                msg = json.loads(raw)
                if not isinstance(msg, dict) or "type" not in msg:
                    raise ValueError("message must be an object with a type")
            except (json.JSONDecodeError, ValueError) as e:
                await ws.send_json({"type": "error", "reason": f"malformed message: {e}"})
                continue
            if msg["type"] == "action":
                key = msg.get("key", "none")
                mailbox.put(key if key in KEY_FORCES else "none")
            else:
                await ws.send_json(
                    {"type": "error", "reason": f"unknown message type {msg['type']!r}"}
                )

    @app.websocket("/session")
    async def session_endpoint(ws: WebSocket):
        await ws.accept()
        session = None
        try:
            join = await ws.receive_json()
        except Exception:
            await ws.close()
            return
        if (
            not isinstance(join, dict)
            or join.get("type") != "join"
            or join.get("protocol") != PROTOCOL_VERSION
        ):
            await ws.send_json(
                {
                    "type": "error",
                    "reason": "expected a join message with protocol "
                    f"{PROTOCOL_VERSION}",
                }
            )
            await ws.close()
            return
        try:
            session = session_factory(join.get("role"))
        except ConfigurationError as e:
            await ws.send_json({"type": "error", "reason": str(e)})
            await ws.close()
            return
        await ws.send_json(session.joined_message())
        mailbox = _Mailbox()
        reader = asyncio.create_task(_reader(ws, mailbox))
        loop = asyncio.get_event_loop()
        aborted = False
        try:
            while not session.session_done():
                session.start_episode()
                next_tick = loop.time() + interval
                while not session.episode_done():
                    delay = next_tick - loop.time()
                    if delay > 0:
                        await asyncio.sleep(delay)
                    next_tick += interval
                    state = session.tick_once(mailbox.take())
                    await ws.send_json(state)
                await ws.send_json(session.finish_episode())
            session.result.completed = True
            await ws.send_json(
                {
                    "type": "session_end",
                    "summary": {
                        "episodes": len(session.result.episodes),
                        "rewards": [e["rewards"] for e in session.result.episodes],
                    },
                }
            )
        except (WebSocketDisconnect, RuntimeError):
            aborted = True  # client went away; episode logged as incomplete
        finally:
            reader.cancel()
            if session is not None and log_path is not None:
                log = session.session_log()
                if aborted:
                    log["completed"] = False
                    log["aborted_in_episode"] = session.episode
                with open(log_path, "w") as f:
                    json.dump(log, f, indent=2)
            if not aborted:
                try:
                    await ws.close()
                except RuntimeError:
                    pass

    return app
