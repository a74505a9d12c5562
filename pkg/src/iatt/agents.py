"""Policy networks: self-attention policy over gradient-field goals, the
inverse attention network that infers teammates' attention weights, the
identity-initialized weight-update head that fuses them, and a plain MLP
policy for the PPO baselines.

All forwards take batched arrays and return graph tensors; `*_np` wrappers
run the same code under `no_grad` for rollouts and evaluation. Goal sets
are packed into fixed per-scenario slots (role, id)-ordered with the wall
last, a presence mask for partial observability, and a small role one-hot
appended to each gradient-field vector so heterogeneous goals stay
distinguishable under permutation-invariant pooling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .engine import Role, ScenarioSpec, WorldState, _scenario_roles
from .errors import ContractViolation
from .gradfield import GoalSet, ScoreNet, WALL_ID

GOAL_FEAT = 4  # entity gradient-field width; boundary output zero-padded to it
# channels: self, same-type agent, other-type agent, landmark, grass, obstacle, wall
ROLE_CHANNELS = 7
GOAL_DIM = GOAL_FEAT + ROLE_CHANNELS
QUERY_DIM = 6  # vel, pos, previous action
CH_SELF, CH_SAME, CH_OTHER, CH_LANDMARK, CH_GRASS, CH_OBSTACLE, CH_WALL = range(7)

LOG2PI = math.log(2.0 * math.pi)
LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
_MASK_OFF = 1e30


def _role_channel(role: int, observer_role: int) -> int:
    if role == -1:
        return CH_WALL
    role = Role(role)
    if role in (Role.AGENT, Role.SHEEP, Role.WOLF):
        return CH_SAME if int(role) == observer_role else CH_OTHER
    if role == Role.LANDMARK:
        return CH_LANDMARK
    if role == Role.GRASS:
        return CH_GRASS
    return CH_OBSTACLE


class ObsLayout:
    """Fixed goal-slot layout for one observer: (role, id)-sorted, wall last."""

    def __init__(self, spec: ScenarioSpec, agent_id: int):
        roles = [int(r) for r in _scenario_roles(spec)]
        self.observer_role = roles[agent_id]
        others = sorted(
            (i for i in range(len(roles)) if i != agent_id),
            key=lambda i: (roles[i], i),
        )
        self.slot_ids = others + [WALL_ID]
        self.slot_roles = [roles[i] for i in others] + [-1]
        self.slot_of = {eid: k for k, eid in enumerate(self.slot_ids)}
        self.n_slots = len(self.slot_ids)

    @property
    def flat_dim(self) -> int:
        return GOAL_DIM * (self.n_slots + 1)


@dataclass
class EncodedObs:
    """One observation packed into fixed slots for batched network input."""

    goals: np.ndarray  # (K, GOAL_DIM)
    mask: np.ndarray  # (K,) 1.0 where the slot's entity is visible
    selfg: np.ndarray  # (GOAL_DIM,) self features in goal layout
    query: np.ndarray  # (QUERY_DIM,) vel, pos, prev action
    present_slots: list[int]  # slot index of each GoalSet entry, in order


def encode_goalset(gs: GoalSet, layout: ObsLayout) -> EncodedObs:
    goals = np.zeros((layout.n_slots, GOAL_DIM))
    mask = np.zeros(layout.n_slots)
    present = []
    for vec, eid, role in zip(gs.goals, gs.entity_ids, gs.roles):
        slot = layout.slot_of[eid]
        goals[slot, : len(vec)] = vec
        goals[slot, GOAL_FEAT + _role_channel(role, layout.observer_role)] = 1.0
        mask[slot] = 1.0
        present.append(slot)
    selfg = np.zeros(GOAL_DIM)
    selfg[:GOAL_FEAT] = gs.self_feat
    selfg[GOAL_FEAT + CH_SELF] = 1.0
    return EncodedObs(goals, mask, selfg, gs.self_query.copy(), present)


def flat_obs(enc: EncodedObs) -> np.ndarray:
    return np.concatenate([enc.selfg, (enc.goals * enc.mask[:, None]).ravel()])


def stack_encoded(encs: list[EncodedObs]) -> dict[str, np.ndarray]:
    return {
        "goals": np.stack([e.goals for e in encs]),
        "mask": np.stack([e.mask for e in encs]),
        "selfg": np.stack([e.selfg for e in encs]),
        "query": np.stack([e.query for e in encs]),
        "flat": np.stack([flat_obs(e) for e in encs]),
    }


class ScenarioCodec:
    """Vectorized observation encoding across a batch of worlds.

    Produces the same arrays as build_goalset + encode_goalset, computed
    directly from world arrays with one score-net call per agent per step.
    """

    def __init__(self, spec: ScenarioSpec):
        self.spec = spec
        self.roles = [int(r) for r in _scenario_roles(spec)]
        self.roles_by_id = dict(enumerate(self.roles))
        self.agent_ids = [
            i
            for i, r in enumerate(self.roles)
            if Role(r) in (Role.AGENT, Role.SHEEP, Role.WOLF)
        ]
        self.layouts = {i: ObsLayout(spec, i) for i in self.agent_ids}
        self.onehots: dict[int, np.ndarray] = {}
        for i, layout in self.layouts.items():
            oh = np.zeros((layout.n_slots, ROLE_CHANNELS))
            for slot, role in enumerate(layout.slot_roles):
                oh[slot, _role_channel(role, layout.observer_role)] = 1.0
            self.onehots[i] = oh

    def encode_agent(
        self,
        worlds: list[WorldState],
        bundle: PolicyBundle,
        agent_id: int | None = None,
    ) -> dict:
        a = bundle.agent_id if agent_id is None else agent_id
        layout = self.layouts[a]
        k = layout.n_slots
        other = layout.slot_ids[:-1]
        e = len(worlds)
        pos = np.stack([w.pos for w in worlds])
        vel = np.stack([w.vel for w in worlds])
        prev = np.stack([w.prev_action for w in worlds])
        own = pos[:, a, :]
        rel = pos[:, other, :] - own[:, None, :]
        t_eval = bundle.meta.t_eval
        ent_in = np.concatenate(
            [np.broadcast_to(own[:, None, :], rel.shape), rel], axis=-1
        ).reshape(e * (k - 1), GOAL_FEAT)
        ent_out = bundle.nets["entity"].score(ent_in, t_eval).reshape(e, k - 1, GOAL_FEAT)
        wall_out = bundle.nets["boundary"].score(own, t_eval)
        goals = np.zeros((e, k, GOAL_DIM))
        goals[:, :-1, :GOAL_FEAT] = ent_out
        goals[:, -1, : wall_out.shape[1]] = wall_out
        goals[:, :, GOAL_FEAT:] = self.onehots[a][None, :, :]
        mask = np.ones((e, k))
        r = self.spec.visibility_radius
        if r is not None:
            dist = np.linalg.norm(rel, axis=-1)
            mask[:, :-1] = dist <= r
            goals *= mask[:, :, None]
        selfg = np.zeros((e, GOAL_DIM))
        selfg[:, :2] = vel[:, a, :]
        selfg[:, 2:4] = own
        selfg[:, GOAL_FEAT + CH_SELF] = 1.0
        query = np.concatenate([vel[:, a, :], own, prev[:, a, :]], axis=1)
        flat = np.concatenate([selfg, goals.reshape(e, k * GOAL_DIM)], axis=1)
        return {
            "goals": goals,
            "mask": mask,
            "selfg": selfg,
            "query": query,
            "flat": flat,
        }


class IWNet:
    """Inverse attention: raw self-info query against embedded goals."""

    VARIANT = "iw"

    def __init__(self, hidden: int = 64, seed: int = 0):
        self.hidden = hidden
        self.store = T.ParamStore()
        rng = np.random.default_rng(seed)
        self.f = T.TwoLayerMLP(self.store, "f", GOAL_DIM, hidden, hidden, rng)
        self.q = T.Dense(self.store, "q", QUERY_DIM, hidden, rng)
        self.k = T.Dense(self.store, "k", hidden, hidden, rng)

    def forward(self, query, goals, mask) -> T.Tensor:
        e = self.f(T.as_tensor(goals))
        q = self.q(T.as_tensor(query))
        k = self.k(e)
        return _masked_attention(q, k, mask)

    def meta(self) -> dict:
        return {"hidden": self.hidden}


def _masked_attention(q: T.Tensor, k: T.Tensor, mask: np.ndarray) -> T.Tensor:
    """Scaled dot-product weights over key slots; masked slots get weight 0.

    The additive penalty is exactly 0.0 wherever mask == 1, so a fully
    visible world follows the identical code path bit for bit.
    """
    d = q.data.shape[-1]
    b = q.data.shape[0]
    qr = T.reshape(q, (b, 1, d))
    logits = T.tsum(T.mul(k, qr), axis=-1) * (1.0 / math.sqrt(d))
    logits = logits + T.Tensor((np.asarray(mask) - 1.0) * _MASK_OFF)
    return T.softmax(logits, axis=-1)


@dataclass
class BundleMeta:
    variant: str  # mlp_baseline | self_att | inverse_att
    spec: dict
    agent_id: int
    hidden: int = 64
    centralized: bool = True
    n_agents: int = 1
    teammate_slots: int = 0
    gain: float = 0.01
    log_std_init: float = -0.5
    t_eval: float = 1e-2


class PolicyBundle:
    """Parameters and heads for one agent, plus its gradient-field nets.

    inverse_att requires both an IWNet and the UW head; self_att has
    neither; mlp_baseline only uses the flat-observation policy.
    """

    def __init__(
        self,
        meta: BundleMeta,
        nets: dict[str, ScoreNet],
        seed: int = 0,
        iw: IWNet | None = None,
    ):
        self.meta = meta
        self.variant = meta.variant
        self.nets = nets
        self.spec = ScenarioSpec.from_dict(meta.spec)
        self.agent_id = meta.agent_id
        self.layout = ObsLayout(self.spec, meta.agent_id)
        self.role = self.layout.observer_role
        self.iw = iw
        rng = np.random.default_rng(seed)
        store = T.ParamStore()
        self.store = store
        hidden = meta.hidden
        k = self.layout.n_slots
        critic_in = self.layout.flat_dim * (meta.n_agents if meta.centralized else 1)
        if meta.variant == "mlp_baseline":
            self.p1 = T.Dense(store, "p1", self.layout.flat_dim, hidden, rng)
            self.p2 = T.Dense(store, "p2", hidden, hidden, rng)
            self.p3 = T.Dense(store, "p3", hidden, 2, rng, gain=meta.gain)
        else:
            self.f = T.TwoLayerMLP(store, "f", GOAL_DIM, hidden, hidden, rng)
            self.wq = T.Dense(store, "wq", hidden, hidden, rng)
            self.wk = T.Dense(store, "wk", hidden, hidden, rng)
            self.v = T.TwoLayerMLP(store, "v", hidden, hidden, hidden, rng)
            self.h = T.TwoLayerMLP(
                store, "h", hidden, hidden, 2, rng, out_gain=meta.gain
            )
        if meta.variant == "inverse_att":
            if iw is None:
                raise ContractViolation("inverse_att bundle requires an IWNet")
            uw_w = np.zeros((k * (1 + meta.teammate_slots), k))
            uw_w[:k, :k] = np.eye(k)  # identity on own weights, zero on inferred
            self.uw_w = store.add("uw.w", uw_w)
            self.uw_b = store.add("uw.b", np.zeros(k))
        self.log_std = store.add("log_std", np.full(2, meta.log_std_init))
        self.c1 = T.Dense(store, "c1", critic_in, hidden, rng)
        self.c2 = T.Dense(store, "c2", hidden, hidden, rng)
        self.c3 = T.Dense(store, "c3", hidden, 1, rng)

    @property
    def teammate_ids(self) -> list[int]:
        roles = [int(r) for r in _scenario_roles(self.spec)]
        return [
            i
            for i, r in enumerate(roles)
            if r == self.role and i != self.agent_id
        ]


def make_bundle(
    variant: str,
    spec: ScenarioSpec,
    agent_id: int,
    nets: dict[str, ScoreNet],
    seed: int = 0,
    hidden: int = 64,
    centralized: bool = True,
    iw: IWNet | None = None,
    gain: float = 0.01,
    log_std_init: float = -0.5,
    t_eval: float | None = None,
) -> PolicyBundle:
    if variant not in ("mlp_baseline", "self_att", "inverse_att"):
        raise ContractViolation(f"unknown policy variant {variant!r}")
    roles = [int(r) for r in _scenario_roles(spec)]
    movable = [i for i, r in enumerate(roles) if Role(r) in (Role.AGENT, Role.SHEEP, Role.WOLF)]
    same_type = sum(1 for i in movable if roles[i] == roles[agent_id])
    meta = BundleMeta(
        variant=variant,
        spec=spec.to_dict(),
        agent_id=agent_id,
        hidden=hidden,
        centralized=centralized,
        n_agents=len(movable),
        teammate_slots=same_type - 1,
        gain=gain,
        log_std_init=log_std_init,
        t_eval=1e-2 if t_eval is None else t_eval,
    )
    return PolicyBundle(meta, nets, seed=seed, iw=iw)


# -- batched forwards ---------------------------------------------------------


def selfatt_forward_batch(bundle: PolicyBundle, goals, mask, selfg):
    """Attention weights, action mean, and the weighted goal embedding."""
    if np.asarray(mask).sum() == 0:
        raise ContractViolation("empty goal set")
    b, k = np.asarray(mask).shape
    e = bundle.f(T.as_tensor(goals))
    es = bundle.f(T.as_tensor(selfg))
    w = _masked_attention(bundle.wq(es), bundle.wk(e), mask)
    values = bundle.v(e)
    weighted = T.tsum(T.mul(values, T.reshape(w, (b, k, 1))), axis=1)
    mean = bundle.h(weighted)
    return w, mean, weighted


def uw_update_batch(bundle: PolicyBundle, own_w: T.Tensor, inferred, mask) -> T.Tensor:
    """Fuse own and inferred weights through the UW layer and renormalize.

    Inferred weights arrive as a (B, S, K) array, zero-filled for missing
    teammates. The output is clamped at zero, zeroed on masked slots, and
    renormalized; an all-zero row falls back to uniform over visible slots.
    """
    b, k = own_w.data.shape
    s = bundle.meta.teammate_slots
    inferred = np.asarray(inferred, dtype=np.float64)
    if inferred.shape != (b, s, k):
        raise ContractViolation(
            f"expected inferred weights of shape {(b, s, k)}, got {inferred.shape}"
        )
    if s > 0:
        uw_in = T.concat([own_w, T.Tensor(inferred.reshape(b, s * k))], axis=1)
    else:
        uw_in = own_w
    raw = T.relu(T.matmul(uw_in, bundle.uw_w) + bundle.uw_b)
    raw = T.mul(raw, T.Tensor(mask))
    sums = T.tsum(raw, axis=1, keepdims=True)
    dead = (sums.data <= 1e-12).astype(np.float64)  # fallback rows, treated as const
    mask = np.asarray(mask)
    uniform = mask / np.maximum(mask.sum(axis=1, keepdims=True), 1.0)
    out = T.div(raw, sums + T.Tensor(dead))
    return out + T.Tensor(dead * uniform)


def inverse_forward_batch(bundle: PolicyBundle, goals, mask, selfg, inferred):
    """Full composition: self-attention weights, UW fusion, action head."""
    if bundle.variant != "inverse_att" or bundle.iw is None:
        raise ContractViolation("bundle is not a composed inverse_att policy")
    b, k = np.asarray(mask).shape
    e = bundle.f(T.as_tensor(goals))
    es = bundle.f(T.as_tensor(selfg))
    w = _masked_attention(bundle.wq(es), bundle.wk(e), mask)
    w_tilde = uw_update_batch(bundle, w, inferred, mask)
    values = bundle.v(e)
    weighted = T.tsum(T.mul(values, T.reshape(w_tilde, (b, k, 1))), axis=1)
    mean = bundle.h(weighted)
    return w_tilde, mean, weighted


def mlp_forward_batch(bundle: PolicyBundle, flat):
    h1 = T.tanh(bundle.p1(T.as_tensor(flat)))
    h2 = T.tanh(bundle.p2(h1))
    return bundle.p3(h2)


def policy_mean_batch(bundle: PolicyBundle, batch: dict) -> tuple[T.Tensor, T.Tensor | None]:
    """Dispatch on variant; returns (action mean, attention weights or None)."""
    if bundle.variant == "mlp_baseline":
        return mlp_forward_batch(bundle, batch["flat"]), None
    if bundle.variant == "self_att":
        w, mean, _ = selfatt_forward_batch(
            bundle, batch["goals"], batch["mask"], batch["selfg"]
        )
        return mean, w
    w, mean, _ = inverse_forward_batch(
        bundle, batch["goals"], batch["mask"], batch["selfg"], batch["inferred"]
    )
    return mean, w


def critic_forward_batch(bundle: PolicyBundle, critic_obs) -> T.Tensor:
    h1 = T.tanh(bundle.c1(T.as_tensor(critic_obs)))
    h2 = T.tanh(bundle.c2(h1))
    v = bundle.c3(h2)
    return T.reshape(v, (v.data.shape[0],))


def clipped_log_std(bundle: PolicyBundle) -> T.Tensor:
    return T.clip(bundle.log_std, LOG_STD_MIN, LOG_STD_MAX)


def gaussian_log_prob(mean: T.Tensor, log_std: T.Tensor, actions: np.ndarray) -> T.Tensor:
    """Diagonal Gaussian log density of `actions` (constants) under the policy."""
    b = mean.data.shape[0]
    ls = T.reshape(log_std, (1, 2))
    inv_var = T.exp(ls * -2.0)
    diff = T.Tensor(actions) - mean
    quad = T.mul(T.square(diff), inv_var)
    per = quad + (ls * 2.0 + LOG2PI)
    return T.tsum(per, axis=1) * -0.5


def gaussian_entropy(log_std: T.Tensor) -> T.Tensor:
    return T.tsum(log_std + 0.5 * (LOG2PI + 1.0))


# -- rollout-facing numpy helpers --------------------------------------------


def act_batch_np(
    bundle: PolicyBundle,
    batch: dict,
    rng: np.random.Generator,
    stochastic: bool = True,
):
    """Sample actions for a batch of encoded observations (no graph).

    Returns (env_action, raw_action, log_prob, attention_weights). The raw
    pre-clamp sample is what PPO ratios are evaluated against; the env
    action is clamped to the unit force box.
    """
    with T.no_grad():
        mean_t, w_t = policy_mean_batch(bundle, batch)
        mean = mean_t.data
        w = None if w_t is None else w_t.data
        log_std = np.clip(bundle.log_std.data, LOG_STD_MIN, LOG_STD_MAX)
    std = np.exp(log_std)
    if stochastic:
        raw = mean + std * rng.standard_normal(mean.shape)
    else:
        raw = mean.copy()
    z = (raw - mean) / std
    log_prob = -0.5 * ((z**2).sum(axis=1) + (2.0 * log_std + LOG2PI).sum())
    return np.clip(raw, -1.0, 1.0), raw, log_prob, w


def iw_forward_np(iw: IWNet, batch: dict) -> np.ndarray:
    with T.no_grad():
        return iw.forward(batch["query"], batch["goals"], batch["mask"]).data


# -- single-observation wrappers (GoalSet in, numpy out) ----------------------


def _single(batch_of_one: np.ndarray) -> np.ndarray:
    return batch_of_one[0]


def selfatt_forward(bundle: PolicyBundle, gs: GoalSet):
    """Spec-level forward on one GoalSet; weights returned per present goal."""
    enc = encode_goalset(gs, bundle.layout)
    with T.no_grad():
        w, mean, weighted = selfatt_forward_batch(
            bundle, enc.goals[None], enc.mask[None], enc.selfg[None]
        )
    return (
        _single(w.data)[enc.present_slots],
        _single(mean.data),
        _single(weighted.data),
    )


def act(
    bundle: PolicyBundle,
    gs: GoalSet,
    rng: np.random.Generator,
    stochastic: bool = True,
    inferred: np.ndarray | None = None,
):
    enc = encode_goalset(gs, bundle.layout)
    batch = {
        "goals": enc.goals[None],
        "mask": enc.mask[None],
        "selfg": enc.selfg[None],
        "flat": flat_obs(enc)[None],
    }
    if bundle.variant == "inverse_att":
        s, k = bundle.meta.teammate_slots, bundle.layout.n_slots
        batch["inferred"] = (
            np.zeros((1, s, k)) if inferred is None else inferred[None]
        )
    env_action, _, log_prob, _ = act_batch_np(bundle, batch, rng, stochastic)
    return env_action[0], float(log_prob[0])


def iw_forward(iw: IWNet, bundle: PolicyBundle, other_gs: GoalSet) -> np.ndarray:
    """Infer another same-type agent's attention weights from its observation."""
    if other_gs.observer_role != bundle.role:
        raise ContractViolation(
            "attention inference is limited to same-type agents"
        )
    layout = ObsLayout(bundle.spec, other_gs.observer_id)
    enc = encode_goalset(other_gs, layout)
    with T.no_grad():
        w = iw.forward(enc.query[None], enc.goals[None], enc.mask[None]).data
    return _single(w)[enc.present_slots]


def iw_loss(iw: IWNet, queries, goals, masks, targets) -> T.Tensor:
    """Mean squared error between predicted and logged attention weights."""
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape[0] == 0:
        raise ContractViolation("empty batch")
    pred = iw.forward(queries, goals, masks)
    return T.tmean(T.square(pred - T.Tensor(targets)))


def uw_update(
    bundle: PolicyBundle, own_w: np.ndarray, inferred: list[np.ndarray]
) -> np.ndarray:
    """Spec-level UW application on full slot vectors; zero-fills missing slots."""
    s, k = bundle.meta.teammate_slots, bundle.layout.n_slots
    if len(inferred) > s:
        raise ContractViolation(f"{len(inferred)} inferred vectors exceed {s} slots")
    inf = np.zeros((1, s, k))
    for j, v in enumerate(inferred):
        inf[0, j] = v
    mask = np.ones((1, k))
    with T.no_grad():
        out = uw_update_batch(bundle, T.Tensor(own_w[None]), inf, mask)
    return _single(out.data)


def inverse_forward(
    bundle: PolicyBundle, own_gs: GoalSet, teammate_gs: list[GoalSet]
):
    """Full composition from raw GoalSets (previous-step teammate views)."""
    enc = encode_goalset(own_gs, bundle.layout)
    s, k = bundle.meta.teammate_slots, bundle.layout.n_slots
    inferred = np.zeros((1, s, k))
    for j, gs in enumerate(teammate_gs[:s]):
        layout = ObsLayout(bundle.spec, gs.observer_id)
        o = encode_goalset(gs, layout)
        with T.no_grad():
            inferred[0, j] = bundle.iw.forward(
                o.query[None], o.goals[None], o.mask[None]
            ).data[0]
    with T.no_grad():
        w_tilde, mean, _ = inverse_forward_batch(
            bundle, enc.goals[None], enc.mask[None], enc.selfg[None], inferred
        )
    return _single(w_tilde.data)[enc.present_slots], _single(mean.data)
