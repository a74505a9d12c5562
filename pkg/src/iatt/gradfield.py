"""Gradient-field goal representations trained by denoising score matching.

Two synthetic datasets (near-coincident entity pairs and in-bounds
positions), a geometric noise schedule sigma(t) = sigma0**t, a small
time-conditioned score MLP, and assembly of per-entity gradient-field
goals plus a boundary goal into the GoalSet consumed by policies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .engine import RawObservation
from .errors import ConfigurationError, ContractViolation, TrainingError

ENTITY_DIM = 4  # own position (2) concatenated with relative position (2)
BOUNDARY_DIM = 2
BOUNDARY_HALF_WIDTH = 0.8
PAIR_L1_LIMIT = 1e-5


@dataclass
class GFDataset:
    samples: np.ndarray
    kind: str  # "entity" | "boundary" | free-form for custom data

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise ConfigurationError("samples must be (n, dim)")

    @property
    def dim(self) -> int:
        return self.samples.shape[1]


def gen_entity_dataset(n: int, seed: int) -> GFDataset:
    """Own positions uniform in the 2x2 grid, paired offsets with L1 norm < 1e-5."""
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    rng = np.random.default_rng(seed)
    own = rng.uniform(-1.0, 1.0, size=(n, 2))
    # componentwise bound just under half the L1 budget keeps |dx|+|dy| < 1e-5
    half = 0.499 * PAIR_L1_LIMIT
    rel = rng.uniform(-half, half, size=(n, 2))
    return GFDataset(np.concatenate([own, rel], axis=1), kind="entity")


def gen_boundary_dataset(n: int, seed: int) -> GFDataset:
    """Positions uniform in [-0.8, 0.8]^2."""
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    rng = np.random.default_rng(seed)
    w = BOUNDARY_HALF_WIDTH
    return GFDataset(rng.uniform(-w, w, size=(n, 2)), kind="boundary")


@dataclass
class NoiseSchedule:
    """sigma(t) = sigma0**t on t in [epsilon, t_max]; loss weight sigma^2(t)."""

    sigma0: float = 25.0
    t_max: float = 1.0
    epsilon: float = 1e-2

    def __post_init__(self):
        if self.sigma0 <= 1.0:
            raise ConfigurationError("sigma0 must be > 1")
        if not (0.0 < self.epsilon < self.t_max):
            raise ConfigurationError("need 0 < epsilon < t_max")

    def sigma(self, t):
        return self.sigma0 ** np.asarray(t, dtype=np.float64)

    def weight(self, t):
        return self.sigma(t) ** 2


class ScoreNet:
    """Time-conditioned score network s(x, t); output dim equals data dim.

    Inputs and outputs are sigma-normalized internally (the MLP sees x /
    sigma(t) and its output is divided by sigma(t)), which keeps both ends
    O(1) across the whole noise range; the estimated function is unchanged.
    """

    def __init__(
        self,
        dim: int,
        kind: str,
        hidden: int = 64,
        seed: int = 0,
        schedule: "NoiseSchedule | None" = None,
    ):
        self.dim = dim
        self.kind = kind
        self.hidden = hidden
        self.schedule = schedule or NoiseSchedule()
        self.store = T.ParamStore()
        rng = np.random.default_rng(seed)
        self.l1 = T.Dense(self.store, "l1", dim + 1, hidden, rng)
        self.l2 = T.Dense(self.store, "l2", hidden, hidden, rng)
        self.l3 = T.Dense(self.store, "l3", hidden, dim, rng)
        self.train_history: list[float] = []

    def forward(self, x: T.Tensor, t: T.Tensor) -> T.Tensor:
        inv_sigma = T.Tensor(1.0 / self.schedule.sigma(t.data))
        inp = T.concat([T.mul(x, inv_sigma), t], axis=1)
        h = T.tanh(self.l1(inp))
        h = T.tanh(self.l2(h))
        return T.mul(self.l3(h), inv_sigma)

    def score(self, x: np.ndarray, t) -> np.ndarray:
        """Numpy evaluation path; accepts (dim,) or (n, dim) and scalar or (n,) t."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xb = x[None, :] if single else x
        tb = np.broadcast_to(np.asarray(t, dtype=np.float64), (xb.shape[0],))
        with T.no_grad():
            out = self.forward(T.Tensor(xb), T.Tensor(tb[:, None])).data
        return out[0] if single else out


def perturb(
    x: np.ndarray, t, schedule: NoiseSchedule, rng: np.random.Generator
) -> np.ndarray:
    """x + sigma(t) * z with z standard normal; t must lie in [epsilon, t_max]."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < schedule.epsilon) or np.any(t > schedule.t_max):
        raise ContractViolation("t outside [epsilon, t_max]")
    x = np.asarray(x, dtype=np.float64)
    sigma = schedule.sigma(t)
    if x.ndim == 2:
        sigma = np.broadcast_to(sigma, (x.shape[0],))[:, None]
    return x + sigma * rng.standard_normal(x.shape)


def dsm_loss(
    net: ScoreNet,
    batch: np.ndarray,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
) -> T.Tensor:
    """Denoising score-matching loss, weighted by sigma^2(t), t ~ U(epsilon, t_max).

    Target for a Gaussian perturbation kernel is (x - x_tilde) / sigma^2(t).
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[0] == 0:
        raise ContractViolation("batch must be nonempty (n, dim)")
    n = batch.shape[0]
    t = rng.uniform(schedule.epsilon, schedule.t_max, size=n)
    sigma = schedule.sigma(t)[:, None]
    noisy = batch + sigma * rng.standard_normal(batch.shape)
    target = (batch - noisy) / sigma**2
    pred = net.forward(T.Tensor(noisy), T.Tensor(t[:, None]))
    sq = T.tsum(T.square(pred - T.Tensor(target)), axis=1)
    return T.tmean(sq * T.Tensor(schedule.weight(t)))


@dataclass
class GFTrainConfig:
    lr: float = 2e-4
    betas: tuple[float, float] = (0.5, 0.999)
    batch_size: int = 128
    epochs: int = 60
    hidden: int = 64
    lr_decay: float = 0.9  # linear decay fraction over the epoch budget


def train_score_net(
    dataset: GFDataset,
    schedule: NoiseSchedule,
    config: GFTrainConfig | None = None,
    seed: int = 0,
) -> ScoreNet:
    """Adam training loop over minibatches; per-epoch mean loss in train_history."""
    config = config or GFTrainConfig()
    rng = np.random.default_rng(seed)
    net = ScoreNet(
        dataset.dim, dataset.kind, hidden=config.hidden, seed=seed, schedule=schedule
    )
    n = len(dataset.samples)
    bs = min(config.batch_size, n)
    for epoch in range(config.epochs):
        lr = config.lr * (1.0 - config.lr_decay * epoch / max(config.epochs - 1, 1))
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, bs):
            idx = order[start : start + bs]
            net.store.zero_grad()
            loss = dsm_loss(net, dataset.samples[idx], schedule, rng)
            if not np.isfinite(loss.data):
                raise TrainingError(
                    f"non-finite DSM loss at epoch {epoch} (lr={config.lr}, "
                    f"sigma0={schedule.sigma0}); history={net.train_history[-5:]}"
                )
            loss.backward()
            T.adam_step(net.store, lr, config.betas)
            losses.append(loss.item())
        net.train_history.append(float(np.mean(losses)))
    return net


@dataclass
class GoalSet:
    """Ordered gradient-field goals: one per visible entity, boundary last.

    Ordering is (entity role, entity id) with the wall appended, so it is a
    stable pure function of entity identity. `self_feat` carries the
    observer's own velocity and position (the attention query source) and
    `self_query` additionally carries the previous action (the inverse
    network's query).
    """

    goals: list[np.ndarray]
    entity_ids: list[int]  # parallel to goals; -1 marks the wall entry
    roles: list[int]  # engine Role values; -1 marks the wall entry
    self_feat: np.ndarray
    self_query: np.ndarray
    observer_id: int = -1
    observer_role: int = -1

    def __len__(self) -> int:
        return len(self.goals)


WALL_ID = -1


def build_goalset(
    obs: RawObservation,
    nets: dict[str, ScoreNet],
    t_eval: float | None = None,
    schedule: NoiseSchedule | None = None,
    roles_by_id: dict[int, int] | None = None,
) -> GoalSet:
    """Evaluate gf_entity on every visible entity and gf_wall on the observer.

    `roles_by_id` maps entity id to its role for ordering/encoding; without
    it entities keep id order (role -1).
    """
    entity_net = nets["entity"]
    boundary_net = nets["boundary"]
    if t_eval is None:
        t_eval = (schedule or NoiseSchedule()).epsilon
    entries = list(obs.entity_rel_pos)
    if roles_by_id is not None:
        entries.sort(key=lambda e: (roles_by_id[e[0]], e[0]))
    goals: list[np.ndarray] = []
    ids: list[int] = []
    roles: list[int] = []
    if entries:
        inputs = np.stack([np.concatenate([obs.self_pos, rel]) for _, rel in entries])
        outs = entity_net.score(inputs, t_eval)
        for (eid, _), vec in zip(entries, outs):
            goals.append(vec)
            ids.append(eid)
            roles.append(-1 if roles_by_id is None else roles_by_id[eid])
    goals.append(boundary_net.score(obs.self_pos, t_eval))
    ids.append(WALL_ID)
    roles.append(-1)
    return GoalSet(
        goals=goals,
        entity_ids=ids,
        roles=roles,
        self_feat=np.concatenate([obs.self_vel, obs.self_pos]),
        self_query=np.concatenate(
            [obs.self_vel, obs.self_pos, obs.self_prev_action]
        ),
        observer_id=obs.agent_id,
        observer_role=(
            -1 if roles_by_id is None else roles_by_id.get(obs.agent_id, -1)
        ),
    )
