"""Deterministic, seedable 2-D multi-agent particle world.

Five scenarios (spread, adversary, grassland, navigation, tag) on a
[-1, 1] x [-1, 1] arena with semi-implicit Euler physics, soft-collision
repulsion, capture/occupancy/consumption events, and two reward constant
sets: shaped "training" rewards and plain "scoring" point values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import ConfigurationError, ContractViolation

# A Vec2 is a float64 ndarray of shape (2,); both components finite.
Vec2 = np.ndarray

ARENA_MIN, ARENA_MAX = -1.0, 1.0
ARENA_DIAGONAL = 2.0 * np.sqrt(2.0)

SCENARIOS = ("spread", "adversary", "grassland", "navigation", "tag")


class Role(IntEnum):
    AGENT = 0
    SHEEP = 1
    WOLF = 2
    LANDMARK = 3
    GRASS = 4
    OBSTACLE = 5


MOVABLE_ROLES = (Role.AGENT, Role.SHEEP, Role.WOLF)
# Landmarks and grass are walk-over markers; only bodies repel.
COLLIDABLE_ROLES = (Role.AGENT, Role.SHEEP, Role.WOLF, Role.OBSTACLE)


DEFAULT_CONSTANTS: dict[str, float] = {
    # physics
    "dt": 0.1,
    "damping": 0.25,
    "contact_force": 100.0,
    "contact_margin": 1e-3,
    "agent_accel": 3.0,
    "agent_max_speed": 1.0,
    "agent_radius": 0.05,
    "fast_agent_accel": 4.0,
    "fast_agent_max_speed": 1.3,
    "sheep_accel": 4.0,
    "sheep_max_speed": 1.3,
    "sheep_radius": 0.05,
    "wolf_accel": 3.0,
    "wolf_max_speed": 1.0,
    "wolf_radius": 0.075,
    "landmark_radius": 0.05,
    "grass_radius": 0.04,
    "obstacle_radius": 0.2,
    # shaped training rewards (distance shaping subtracted from these)
    "shaping_coef": 0.2,
    "spread_train_occupy": 100.0,
    "adversary_train_catch": 100.0,
    "grassland_train_catch": 5.0,
    "grassland_train_grass": 2.0,
    "navigation_train_landmark": 5.0,
    "tag_train_catch": 5.0,
    # evaluation point values
    "spread_score_occupy": 5.0,
    "adversary_score_catch": 5.0,
    "grassland_score_catch": 5.0,
    "grassland_score_grass": 3.0,
    "navigation_score_landmark": 5.0,
    "tag_score_catch": 5.0,
}


@dataclass
class ScenarioSpec:
    """What to simulate: scenario kind, scale, horizon, and constants."""

    kind: str = "spread"
    n_per_side: int = 3
    horizon: int = 200
    visibility_radius: float | None = None
    reward_mode: str = "training"
    constants: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario kind {self.kind!r}")
        if self.n_per_side < 1:
            raise ConfigurationError("n_per_side must be >= 1")
        if self.horizon < 1:
            raise ConfigurationError("horizon must be >= 1")
        if self.visibility_radius is not None and self.visibility_radius <= 0:
            raise ConfigurationError("visibility_radius must be > 0")
        if self.reward_mode not in ("training", "scoring"):
            raise ConfigurationError(f"unknown reward_mode {self.reward_mode!r}")
        if self.kind in ("navigation", "tag") and self.n_per_side != 3:
            raise ConfigurationError(f"{self.kind} is fixed at n_per_side=3")
        unknown = set(self.constants) - set(DEFAULT_CONSTANTS)
        if unknown:
            raise ConfigurationError(f"unknown constants: {sorted(unknown)}")
        merged = dict(DEFAULT_CONSTANTS)
        merged.update(self.constants)
        self.constants = merged

    def to_dict(self) -> dict:
        overrides = {
            k: v for k, v in self.constants.items() if DEFAULT_CONSTANTS[k] != v
        }
        return {
            "kind": self.kind,
            "n_per_side": self.n_per_side,
            "horizon": self.horizon,
            "visibility_radius": self.visibility_radius,
            "reward_mode": self.reward_mode,
            "constants": overrides,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        return cls(**d)


@dataclass
class EntityState:
    """Read-only snapshot of one entity (the world stores arrays internally)."""

    id: int
    role: Role
    pos: Vec2
    vel: Vec2
    radius: float
    max_speed: float
    accel: float
    prev_action: Vec2


def _scenario_roles(spec: ScenarioSpec) -> list[Role]:
    n = spec.n_per_side
    if spec.kind == "spread":
        return [Role.AGENT] * n + [Role.LANDMARK] * n
    if spec.kind == "adversary":
        return [Role.SHEEP] * n + [Role.WOLF] * n
    if spec.kind == "grassland":
        return [Role.SHEEP] * n + [Role.WOLF] * n + [Role.GRASS] * 4
    if spec.kind == "navigation":
        return [Role.AGENT] * 3 + [Role.LANDMARK] * 3
    if spec.kind == "tag":
        return [Role.SHEEP] * 3 + [Role.WOLF] * 3 + [Role.OBSTACLE] * 3
    raise ConfigurationError(f"unknown scenario kind {spec.kind!r}")


class WorldState:
    """Mutable world; one actor mutates it at a time, instances are independent."""

    def __init__(self, spec: ScenarioSpec, seed: int):
        self.spec = spec
        self.rng = np.random.default_rng(seed)
        self.seed = seed
        roles = _scenario_roles(spec)
        n = len(roles)
        c = spec.constants
        self.role = np.array([int(r) for r in roles], dtype=np.int64)
        self.radius = np.zeros(n)
        self.max_speed = np.zeros(n)
        self.accel = np.zeros(n)
        for i, r in enumerate(roles):
            if r == Role.AGENT:
                # navigation has two fast agents (ids 0, 1) and one slow one
                fast = spec.kind == "navigation" and i < 2
                self.radius[i] = c["agent_radius"]
                self.max_speed[i] = c["fast_agent_max_speed"] if fast else c["agent_max_speed"]
                self.accel[i] = c["fast_agent_accel"] if fast else c["agent_accel"]
            elif r == Role.SHEEP:
                self.radius[i] = c["sheep_radius"]
                self.max_speed[i] = c["sheep_max_speed"]
                self.accel[i] = c["sheep_accel"]
            elif r == Role.WOLF:
                self.radius[i] = c["wolf_radius"]
                self.max_speed[i] = c["wolf_max_speed"]
                self.accel[i] = c["wolf_accel"]
            elif r == Role.LANDMARK:
                self.radius[i] = c["landmark_radius"]
            elif r == Role.GRASS:
                self.radius[i] = c["grass_radius"]
            elif r == Role.OBSTACLE:
                self.radius[i] = c["obstacle_radius"]
        self.movable = self.max_speed > 0.0
        self.pos = np.zeros((n, 2))
        self.vel = np.zeros((n, 2))
        self.prev_action = np.zeros((n, 2))
        self.step_index = 0
        self.last_rewards: dict[str, np.ndarray] | None = None
        self.prev_state: dict | None = None
        self._place_entities()

    # -- construction helpers ------------------------------------------------
    def _place_entities(self):
        n = len(self.role)
        self.pos[...] = self.rng.uniform(ARENA_MIN, ARENA_MAX, size=(n, 2))
        self.vel[...] = 0.0
        self.prev_action[...] = 0.0
        self.step_index = 0
        self.last_rewards = None
        self.prev_state = None

    @property
    def n_entities(self) -> int:
        return len(self.role)

    def agent_ids(self) -> np.ndarray:
        """Ids of controllable (non-static) entities, in id order."""
        return np.flatnonzero(self.movable)

    def ids_with_role(self, role: Role) -> np.ndarray:
        return np.flatnonzero(self.role == int(role))

    @property
    def entities(self) -> list[EntityState]:
        return [
            EntityState(
                id=i,
                role=Role(self.role[i]),
                pos=self.pos[i].copy(),
                vel=self.vel[i].copy(),
                radius=float(self.radius[i]),
                max_speed=float(self.max_speed[i]),
                accel=float(self.accel[i]),
                prev_action=self.prev_action[i].copy(),
            )
            for i in range(self.n_entities)
        ]


@dataclass
class RawObservation:
    """One agent's view of the world at the current step."""

    agent_id: int
    self_vel: Vec2
    self_pos: Vec2
    self_prev_action: Vec2
    entity_rel_pos: list[tuple[int, Vec2]]
    teammate_prev_actions: list[tuple[int, Vec2]]
    teammate_prev_observations: list[tuple[int, "RawObservation"]] | None = None


def make_world(spec: ScenarioSpec, seed: int) -> WorldState:
    """Fresh world with entities placed uniformly at random; deterministic in seed."""
    return WorldState(spec, seed)


def reset_world(world: WorldState) -> WorldState:
    """Start a new episode reusing the world's generator (deterministic chain)."""
    world._place_entities()
    return world


def visible_set(world: WorldState, agent_id: int, radius: float) -> list[int]:
    """Ids of entities whose center lies within `radius` of the agent, self excluded."""
    if radius <= 0:
        raise ContractViolation("visibility radius must be > 0")
    d = np.linalg.norm(world.pos - world.pos[agent_id], axis=1)
    ids = np.flatnonzero(d <= radius)
    return [int(i) for i in ids if i != agent_id]


def _visible_ids(world: WorldState, agent_id: int) -> list[int]:
    r = world.spec.visibility_radius
    if r is None:
        return [i for i in range(world.n_entities) if i != agent_id]
    return visible_set(world, agent_id, r)


def observe(
    world: WorldState, agent_id: int, include_teammate_obs: bool = False
) -> RawObservation:
    """Relative-position observation with teammate previous actions.

    With `include_teammate_obs`, same-type teammates' previous-step
    observations are reconstructed from the pre-step snapshot (one level
    deep; enough for attention inference on others).
    """
    if agent_id < 0 or agent_id >= world.n_entities or not world.movable[agent_id]:
        raise ContractViolation(f"entity {agent_id} is not an observable agent")
    vis = _visible_ids(world, agent_id)
    rel = [(j, (world.pos[j] - world.pos[agent_id]).copy()) for j in vis]
    teammates = [
        j for j in vis if world.role[j] == world.role[agent_id]
    ]
    prev_acts = [(j, world.prev_action[j].copy()) for j in teammates]
    obs = RawObservation(
        agent_id=agent_id,
        self_vel=world.vel[agent_id].copy(),
        self_pos=world.pos[agent_id].copy(),
        self_prev_action=world.prev_action[agent_id].copy(),
        entity_rel_pos=rel,
        teammate_prev_actions=prev_acts,
    )
    if include_teammate_obs and world.prev_state is not None:
        snap = world.prev_state
        obs.teammate_prev_observations = [
            (j, _observe_snapshot(world, snap, j)) for j in teammates
        ]
    return obs


def _observe_snapshot(world: WorldState, snap: dict, agent_id: int) -> RawObservation:
    """Observation as of the stored pre-step snapshot (no further nesting)."""
    pos, vel, prev_action = snap["pos"], snap["vel"], snap["prev_action"]
    r = world.spec.visibility_radius
    if r is None:
        vis = [i for i in range(world.n_entities) if i != agent_id]
    else:
        d = np.linalg.norm(pos - pos[agent_id], axis=1)
        vis = [int(i) for i in np.flatnonzero(d <= r) if i != agent_id]
    teammates = [j for j in vis if world.role[j] == world.role[agent_id]]
    return RawObservation(
        agent_id=agent_id,
        self_vel=vel[agent_id].copy(),
        self_pos=pos[agent_id].copy(),
        self_prev_action=prev_action[agent_id].copy(),
        entity_rel_pos=[(j, (pos[j] - pos[agent_id]).copy()) for j in vis],
        teammate_prev_actions=[(j, prev_action[j].copy()) for j in teammates],
    )


def _collision_forces(world: WorldState) -> np.ndarray:
    """Soft spring repulsion between overlapping collidable bodies."""
    c = world.spec.constants
    n = world.n_entities
    forces = np.zeros((n, 2))
    collidable = np.isin(world.role, [int(r) for r in COLLIDABLE_ROLES])
    ids = np.flatnonzero(collidable)
    if len(ids) < 2:
        return forces
    p = world.pos[ids]
    delta = p[:, None, :] - p[None, :, :]
    dist = np.linalg.norm(delta, axis=-1)
    np.fill_diagonal(dist, np.inf)
    min_dist = world.radius[ids][:, None] + world.radius[ids][None, :]
    margin = c["contact_margin"]
    # softened penetration; effectively zero outside contact
    penetration = np.logaddexp(0.0, -(dist - min_dist) / margin) * margin
    near = dist < min_dist + 10.0 * margin
    if not near.any():
        return forces
    direction = delta / np.maximum(dist[..., None], 1e-12)
    pair_force = c["contact_force"] * penetration[..., None] * direction * near[..., None]
    total = pair_force.sum(axis=1)
    movable = world.movable[ids]
    forces[ids[movable]] = total[movable]
    return forces


def _min_dist(world: WorldState, src_ids: np.ndarray, dst_ids: np.ndarray) -> np.ndarray:
    d = np.linalg.norm(
        world.pos[src_ids][:, None, :] - world.pos[dst_ids][None, :, :], axis=-1
    )
    return d.min(axis=1)


def _overlap_matrix(world: WorldState, a_ids: np.ndarray, b_ids: np.ndarray) -> np.ndarray:
    """Boolean (len a, len b): center distance below the sum of radii."""
    d = np.linalg.norm(
        world.pos[a_ids][:, None, :] - world.pos[b_ids][None, :, :], axis=-1
    )
    return d < (world.radius[a_ids][:, None] + world.radius[b_ids][None, :])


def reward(world: WorldState, mode: str) -> np.ndarray:
    """Per-agent instantaneous reward of the current state.

    Capture/occupancy/consumption count overlaps in the current positions,
    so this must be read before consumed grass respawns; `step` does that
    and caches both modes in `world.last_rewards`.
    """
    if mode not in ("training", "scoring"):
        raise ContractViolation(f"unknown reward mode {mode!r}")
    c = world.spec.constants
    kind = world.spec.kind
    agent_ids = world.agent_ids()
    rewards = np.zeros(len(agent_ids))
    idx = {int(a): k for k, a in enumerate(agent_ids)}
    training = mode == "training"
    coef = c["shaping_coef"]

    if kind == "spread":
        agents = world.ids_with_role(Role.AGENT)
        landmarks = world.ids_with_role(Role.LANDMARK)
        occupied = _overlap_matrix(world, agents, landmarks).any(axis=1)
        bonus = c["spread_train_occupy"] if training else c["spread_score_occupy"]
        for k, a in enumerate(agents):
            rewards[idx[int(a)]] += bonus * occupied[k]
        if training:
            md = _min_dist(world, agents, landmarks)
            for k, a in enumerate(agents):
                rewards[idx[int(a)]] -= coef * md[k]

    elif kind == "adversary" or kind == "grassland":
        sheep = world.ids_with_role(Role.SHEEP)
        wolves = world.ids_with_role(Role.WOLF)
        catches = _overlap_matrix(world, wolves, sheep)
        key = "adversary" if kind == "adversary" else "grassland"
        catch_val = c[f"{key}_train_catch"] if training else c[f"{key}_score_catch"]
        for k, w in enumerate(wolves):
            rewards[idx[int(w)]] += catch_val * catches[k].sum()
        for k, s in enumerate(sheep):
            rewards[idx[int(s)]] -= catch_val * catches[:, k].sum()
        if training:
            md = _min_dist(world, wolves, sheep)
            for k, w in enumerate(wolves):
                rewards[idx[int(w)]] -= coef * md[k]
        if kind == "grassland":
            grass = world.ids_with_role(Role.GRASS)
            eaten_by = _consumption_events(world)
            grass_val = (
                c["grassland_train_grass"] if training else c["grassland_score_grass"]
            )
            for s in eaten_by.values():
                rewards[idx[int(s)]] += grass_val
            if training:
                md = _min_dist(world, sheep, grass)
                for k, s in enumerate(sheep):
                    rewards[idx[int(s)]] -= coef * md[k]

    elif kind == "navigation":
        agents = world.ids_with_role(Role.AGENT)
        landmarks = world.ids_with_role(Role.LANDMARK)
        occupied = _overlap_matrix(world, agents, landmarks).any(axis=0)
        per = c["navigation_train_landmark"] if training else c["navigation_score_landmark"]
        share = per * occupied.sum() / len(agents)
        for a in agents:
            rewards[idx[int(a)]] += share

    elif kind == "tag":
        sheep = world.ids_with_role(Role.SHEEP)
        wolves = world.ids_with_role(Role.WOLF)
        events = int(_overlap_matrix(world, wolves, sheep).sum())
        catch_val = c["tag_train_catch"] if training else c["tag_score_catch"]
        for w in wolves:
            rewards[idx[int(w)]] += catch_val * events
        for s in sheep:
            rewards[idx[int(s)]] -= catch_val * events

    return rewards


def _consumption_events(world: WorldState) -> dict[int, int]:
    """grass id -> consuming sheep id; nearest overlapping sheep, low id wins ties."""
    sheep = world.ids_with_role(Role.SHEEP)
    grass = world.ids_with_role(Role.GRASS)
    if len(sheep) == 0 or len(grass) == 0:
        return {}
    d = np.linalg.norm(
        world.pos[grass][:, None, :] - world.pos[sheep][None, :, :], axis=-1
    )
    overlap = d < (world.radius[grass][:, None] + world.radius[sheep][None, :])
    events: dict[int, int] = {}
    for gi, g in enumerate(grass):
        hits = np.flatnonzero(overlap[gi])
        if len(hits):
            events[int(g)] = int(sheep[hits[np.argmin(d[gi][hits])]])
    return events


def step(
    world: WorldState, actions: np.ndarray
) -> tuple[WorldState, np.ndarray, bool]:
    """Advance one tick: integrate, resolve events, respawn grass.

    `actions` is (n_agents, 2) in id order of `world.agent_ids()`; forces are
    clamped to [-1, 1] per component. Returns rewards in the spec's
    reward_mode; both modes are cached in `world.last_rewards`.
    """
    agent_ids = world.agent_ids()
    actions = np.asarray(actions, dtype=np.float64)
    if actions.shape != (len(agent_ids), 2):
        raise ContractViolation(
            f"expected actions of shape {(len(agent_ids), 2)}, got {actions.shape}"
        )
    c = world.spec.constants
    world.prev_state = {
        "pos": world.pos.copy(),
        "vel": world.vel.copy(),
        "prev_action": world.prev_action.copy(),
    }
    clamped = np.clip(actions, -1.0, 1.0)
    forces = _collision_forces(world)
    forces[agent_ids] += clamped * world.accel[agent_ids, None]

    world.vel *= 1.0 - c["damping"]
    world.vel[world.movable] += forces[world.movable] * c["dt"]
    speed = np.linalg.norm(world.vel, axis=1)
    over = speed > world.max_speed
    if over.any():
        world.vel[over] *= (world.max_speed[over] / speed[over])[:, None]
    world.pos[world.movable] += world.vel[world.movable] * c["dt"]
    np.clip(world.pos, ARENA_MIN, ARENA_MAX, out=world.pos)
    world.prev_action[agent_ids] = clamped

    world.last_rewards = {
        "training": reward(world, "training"),
        "scoring": reward(world, "scoring"),
    }
    if world.spec.kind == "grassland":
        for g in _consumption_events(world):
            world.pos[g] = world.rng.uniform(ARENA_MIN, ARENA_MAX, size=2)
    world.step_index += 1
    done = world.step_index >= world.spec.horizon
    return world, world.last_rewards[world.spec.reward_mode], done
