"""MAPPO/IPPO optimization and the three-phase inverse-attention pipeline.

Phase 1 trains self-attention agents with PPO while logging
(attention-weights, observation) pairs; the pair dataset is then trimmed
to its newest tenth. Phase 2 fits the inverse attention network offline
on the trimmed pairs with early stopping. Phase 3 swaps in the composed
policy (identity-initialized weight-update head, frozen inverse network)
and continues PPO.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from . import tensor as T
from .agents import (
    IWNet,
    PolicyBundle,
    ScenarioCodec,
    act_batch_np,
    clipped_log_std,
    critic_forward_batch,
    gaussian_entropy,
    gaussian_log_prob,
    iw_loss,
    make_bundle,
    policy_mean_batch,
)
from .engine import ScenarioSpec, make_world, reset_world, step
from .errors import ConfigurationError, ContractViolation, TrainingError
from .gradfield import ScoreNet


@dataclass
class TrainConfig:
    """PPO and pipeline settings."""

    lr: float = 7e-4
    critic_lr: float = 7e-4
    gain: float = 0.01
    ppo_epochs: int = 10
    share_policy: bool = False
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    rollout_steps: int = 256
    n_envs: int = 8
    minibatches: int = 4
    phase1_steps: int = 300_000
    phase3_steps: int = 300_000
    conv_window: int = 15
    conv_threshold: float = 0.25
    hidden: int = 64
    log_std_init: float = -0.5
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0):
            raise ConfigurationError("gamma must be in (0, 1]")
        if self.clip_eps <= 0:
            raise ConfigurationError("clip_eps must be > 0")
        if min(self.phase1_steps, self.phase3_steps, self.rollout_steps) <= 0:
            raise ConfigurationError("step budgets must be > 0")
        if self.share_policy:
            raise ConfigurationError("share_policy=True is not supported")


@dataclass
class IWTrainConfig:
    """Inverse-network training settings."""

    lr: float = 1e-3
    batch_size: int = 64
    hidden: int = 64
    patience: int = 100
    max_epochs: int = 3000
    train_frac: float = 0.7
    val_frac: float = 0.1

    def __post_init__(self):
        if not (0 < self.train_frac < 1 and 0 < self.val_frac < 1):
            raise ConfigurationError("split fractions must lie in (0, 1)")
        if self.train_frac + self.val_frac >= 1.0:
            raise ConfigurationError("train+val fractions must leave a test split")


class PairDataset:
    """Ring of (attention weights, observation record) pairs, newest kept.

    `capacity` bounds memory; it must be at least one tenth of the total
    the run will collect so trimming can always keep floor(total/10).
    """

    def __init__(self, capacity: int | None = None):
        self.entries: deque = deque(maxlen=capacity)
        self.total_collected = 0

    def append(self, w, query, goals, mask):
        self.entries.append(
            (self.total_collected, np.array(w), np.array(query), np.array(goals), np.array(mask))
        )
        self.total_collected += 1

    def __len__(self) -> int:
        return len(self.entries)

    def order_ids(self) -> np.ndarray:
        return np.array([e[0] for e in self.entries], dtype=np.int64)

    def to_arrays(self) -> dict[str, np.ndarray]:
        if not self.entries:
            raise ContractViolation("empty pair dataset")
        _, w, q, g, m = zip(*self.entries)
        return {
            "w": np.stack(w),
            "query": np.stack(q),
            "goals": np.stack(g),
            "mask": np.stack(m),
        }


def trim_dataset(d: PairDataset) -> PairDataset:
    """Keep the newest floor(total_collected / 10) entries, order preserved."""
    keep = d.total_collected // 10
    if keep > len(d.entries):
        raise ContractViolation(
            f"ring capacity too small: need {keep} newest entries, have {len(d.entries)}"
        )
    out = PairDataset()
    entries = list(d.entries)[len(d.entries) - keep :] if keep else []
    out.entries.extend(entries)
    out.total_collected = d.total_collected
    return out


def gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    gamma: float,
    lam: float,
    bootstrap: np.ndarray | float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over (envs, T) or (T,) sequences."""
    rewards = np.asarray(rewards, dtype=np.float64)
    squeeze = rewards.ndim == 1
    if squeeze:
        rewards, values, dones = (
            rewards[None],
            np.asarray(values, dtype=np.float64)[None],
            np.asarray(dones, dtype=np.float64)[None],
        )
    else:
        values = np.asarray(values, dtype=np.float64)
        dones = np.asarray(dones, dtype=np.float64)
    e, n = rewards.shape
    adv = np.zeros((e, n))
    next_value = np.broadcast_to(np.asarray(bootstrap, dtype=np.float64), (e,)).copy()
    carry = np.zeros(e)
    for t in range(n - 1, -1, -1):
        live = 1.0 - dones[:, t]
        delta = rewards[:, t] + gamma * next_value * live - values[:, t]
        carry = delta + gamma * lam * live * carry
        adv[:, t] = carry
        next_value = values[:, t]
    returns = adv + values
    if squeeze:
        return adv[0], returns[0]
    return adv, returns


@dataclass
class RolloutBuffer:
    """Per-agent trajectories from a batch of worlds, shaped (envs, T, ...)."""

    batches: dict[str, np.ndarray]  # goals/mask/selfg/flat/critic_obs[/inferred]
    actions_raw: np.ndarray
    log_probs: np.ndarray
    values: np.ndarray
    rewards: np.ndarray  # training-mode (what PPO optimizes)
    scoring_rewards: np.ndarray
    dones: np.ndarray
    attention: np.ndarray | None  # logged weights, None for the MLP baseline
    bootstrap: np.ndarray  # value of the state after the final step, (envs,)

    @property
    def n_samples(self) -> int:
        return self.rewards.size


class StepDriver:
    """Steps a batch of worlds under per-agent bundles.

    Handles goal encoding, centralized-critic inputs, the previous-step
    caches that feed inverse attention, and (optionally) episode resets.
    """

    def __init__(
        self,
        worlds: list,
        bundles: list[PolicyBundle],
        seed: int = 0,
        stochastic: bool = True,
        auto_reset: bool = True,
    ):
        self.worlds = worlds
        self.bundles = bundles
        self.spec = worlds[0].spec
        self.codec = ScenarioCodec(self.spec)
        if len(bundles) != len(self.codec.agent_ids):
            raise ContractViolation(
                f"need one bundle per agent: {len(self.codec.agent_ids)} agents, "
                f"{len(bundles)} bundles"
            )
        # bundles occupy slots positionally; same-role checkpoints are
        # interchangeable across slots (mix-and-match), so encoding uses the
        # slot's entity id, not the id the bundle was trained as
        for sid, b in zip(self.codec.agent_ids, bundles):
            if self.codec.roles[sid] != b.role:
                raise ConfigurationError(
                    f"bundle trained for role {b.role} cannot fill a role-"
                    f"{self.codec.roles[sid]} slot (entity {sid})"
                )
        self.slot_agent_ids = list(self.codec.agent_ids)
        self.slot_of_agent = {sid: i for i, sid in enumerate(self.slot_agent_ids)}
        self.rng = np.random.default_rng(seed)
        self.stochastic = stochastic
        self.auto_reset = auto_reset
        self._prev_encs: list[dict | None] = [None] * len(bundles)
        self._prev_valid = np.zeros((len(worlds), len(bundles)))

    def reset_caches(self, env_idx: int | None = None):
        if env_idx is None:
            self._prev_valid[...] = 0.0
        else:
            self._prev_valid[env_idx, :] = 0.0

    def _teammates_of(self, ai: int) -> list[int]:
        sid = self.slot_agent_ids[ai]
        return [
            j
            for j in self.slot_agent_ids
            if j != sid and self.codec.roles[j] == self.codec.roles[sid]
        ]

    def _inferred_for(self, ai: int, encs: list[dict]) -> np.ndarray:
        """(envs, S, K) inferred teammate weights from previous-step caches."""
        bundle = self.bundles[ai]
        e = len(self.worlds)
        s = bundle.meta.teammate_slots
        k = bundle.layout.n_slots
        out = np.zeros((e, s, k))
        if bundle.variant != "inverse_att" or s == 0:
            return out
        layout = self.codec.layouts[self.slot_agent_ids[ai]]
        for j, tid in enumerate(self._teammates_of(ai)):
            tj = self.slot_of_agent[tid]
            prev = self._prev_encs[tj]
            if prev is None:
                continue
            valid = self._prev_valid[:, tj].copy()
            # under partial observability, only currently visible teammates count
            tslot = layout.slot_of[tid]
            valid *= encs[ai]["mask"][:, tslot]
            if not valid.any():
                continue
            with T.no_grad():
                w = bundle.iw.forward(prev["query"], prev["goals"], prev["mask"]).data
            out[:, j, :] = w * valid[:, None]
        return out

    def step(self, action_overrides: dict[int, np.ndarray] | None = None) -> dict:
        """Advance all worlds one tick. `action_overrides` maps a bundle slot
        to an externally supplied force (the human slot in play sessions)."""
        worlds = self.worlds
        encs = [
            self.codec.encode_agent(worlds, b, agent_id=sid)
            for sid, b in zip(self.slot_agent_ids, self.bundles)
        ]
        flats = [enc["flat"] for enc in encs]
        all_flat = np.concatenate(flats, axis=1)
        record: dict = {"encs": encs}
        actions = np.zeros((len(worlds), len(self.bundles), 2))
        record["actions_raw"] = np.zeros_like(actions)
        record["log_probs"] = np.zeros((len(worlds), len(self.bundles)))
        record["attention"] = []
        record["critic_obs"] = []
        record["inferred"] = []
        for ai, bundle in enumerate(self.bundles):
            batch = dict(encs[ai])
            if bundle.variant == "inverse_att":
                batch["inferred"] = self._inferred_for(ai, encs)
                record["inferred"].append(batch["inferred"])
            else:
                record["inferred"].append(None)
            if action_overrides is not None and ai in action_overrides:
                env_a = np.broadcast_to(
                    np.asarray(action_overrides[ai], dtype=np.float64),
                    (len(worlds), 2),
                ).copy()
                raw_a, logp, w = env_a.copy(), np.zeros(len(worlds)), None
            else:
                env_a, raw_a, logp, w = act_batch_np(
                    bundle, batch, self.rng, self.stochastic
                )
            actions[:, ai, :] = env_a
            record["actions_raw"][:, ai, :] = raw_a
            record["log_probs"][:, ai] = logp
            record["attention"].append(w)
            record["critic_obs"].append(
                all_flat if bundle.meta.centralized else encs[ai]["flat"]
            )
        rewards = np.zeros((len(worlds), len(self.bundles)))
        scoring = np.zeros_like(rewards)
        dones = np.zeros(len(worlds))
        for ei, world in enumerate(worlds):
            _, _, done = step(world, actions[ei])
            rewards[ei] = world.last_rewards["training"]
            scoring[ei] = world.last_rewards["scoring"]
            dones[ei] = float(done)
        self._prev_encs = encs
        self._prev_valid[...] = 1.0
        for ei, world in enumerate(worlds):
            if dones[ei]:
                if self.auto_reset:
                    reset_world(world)
                self.reset_caches(ei)
        record["rewards"] = rewards
        record["scoring"] = scoring
        record["dones"] = dones
        record["actions_env"] = actions
        return record

    def values(self, record_or_encs) -> np.ndarray:
        """(envs, n_agents) critic values for the given encodings."""
        encs = (
            record_or_encs["encs"]
            if isinstance(record_or_encs, dict) and "encs" in record_or_encs
            else record_or_encs
        )
        flats = [enc["flat"] for enc in encs]
        all_flat = np.concatenate(flats, axis=1)
        out = np.zeros((flats[0].shape[0], len(self.bundles)))
        with T.no_grad():
            for ai, bundle in enumerate(self.bundles):
                obs = all_flat if bundle.meta.centralized else flats[ai]
                out[:, ai] = critic_forward_batch(bundle, obs).data
        return out


def collect_rollout(
    driver: StepDriver,
    steps: int,
    pair_datasets: list[PairDataset] | None = None,
) -> list[RolloutBuffer]:
    """Collect `steps` transitions per world from the driver's policies.

    When `pair_datasets` is given, every attention-policy step appends one
    (weights, observation) pair per world to that agent's dataset.
    """
    n_envs = len(driver.worlds)
    n_agents = len(driver.bundles)
    recs = []
    for _ in range(steps):
        rec = driver.step()
        recs.append(rec)
        if pair_datasets is not None:
            for ai, bundle in enumerate(driver.bundles):
                w = rec["attention"][ai]
                if w is None:
                    continue
                enc = rec["encs"][ai]
                for ei in range(n_envs):
                    pair_datasets[ai].append(
                        w[ei], enc["query"][ei], enc["goals"][ei], enc["mask"][ei]
                    )
    # values are computed in one pass per rollout: cheaper and identical
    buffers = []
    final_encs = [
        driver.codec.encode_agent(driver.worlds, b, agent_id=sid)
        for sid, b in zip(driver.slot_agent_ids, driver.bundles)
    ]
    bootstrap_all = driver.values(final_encs)
    for ai, bundle in enumerate(driver.bundles):
        batches = {
            key: np.stack([r["encs"][ai][key] for r in recs], axis=1)
            for key in ("goals", "mask", "selfg", "flat")
        }
        batches["critic_obs"] = np.stack([r["critic_obs"][ai] for r in recs], axis=1)
        if bundle.variant == "inverse_att":
            batches["inferred"] = np.stack([r["inferred"][ai] for r in recs], axis=1)
        values = np.zeros((n_envs, steps))
        with T.no_grad():
            flat_crit = batches["critic_obs"].reshape(n_envs * steps, -1)
            values = critic_forward_batch(bundle, flat_crit).data.reshape(n_envs, steps)
        att = None
        if recs[0]["attention"][ai] is not None:
            att = np.stack([r["attention"][ai] for r in recs], axis=1)
        buffers.append(
            RolloutBuffer(
                batches=batches,
                actions_raw=np.stack([r["actions_raw"][:, ai] for r in recs], axis=1),
                log_probs=np.stack([r["log_probs"][:, ai] for r in recs], axis=1),
                values=values,
                rewards=np.stack([r["rewards"][:, ai] for r in recs], axis=1),
                scoring_rewards=np.stack([r["scoring"][:, ai] for r in recs], axis=1),
                dones=np.stack([r["dones"] for r in recs], axis=1),
                attention=att,
                bootstrap=bootstrap_all[:, ai],
            )
        )
    return buffers


def ppo_update(
    bundle: PolicyBundle,
    buffer: RolloutBuffer,
    config: TrainConfig,
    rng: np.random.Generator,
) -> dict[str, float]:
    """Clipped-surrogate PPO epochs over the rollout; returns loss statistics."""
    adv, returns = gae(
        buffer.rewards,
        buffer.values,
        buffer.dones,
        config.gamma,
        config.gae_lambda,
        buffer.bootstrap,
    )
    n = buffer.n_samples
    flat = {k: v.reshape((n,) + v.shape[2:]) for k, v in buffer.batches.items()}
    actions = buffer.actions_raw.reshape(n, 2)
    old_logp = buffer.log_probs.reshape(n)
    adv = adv.reshape(n)
    returns = returns.reshape(n)
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    critic_names = {
        name: config.critic_lr
        for name in bundle.store.names()
        if name.startswith(("c1.", "c2.", "c3."))
    }
    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "clip_frac": 0.0}
    count = 0
    for _ in range(config.ppo_epochs):
        order = rng.permutation(n)
        for chunk in np.array_split(order, config.minibatches):
            mb = {k: v[chunk] for k, v in flat.items()}
            bundle.store.zero_grad()
            mean, _ = policy_mean_batch(bundle, mb)
            log_std = clipped_log_std(bundle)
            logp = gaussian_log_prob(mean, log_std, actions[chunk])
            ratio = T.exp(T.clip(logp - T.Tensor(old_logp[chunk]), -20.0, 20.0))
            adv_t = T.Tensor(adv[chunk])
            surr = T.minimum(
                ratio * adv_t,
                T.clip(ratio, 1.0 - config.clip_eps, 1.0 + config.clip_eps) * adv_t,
            )
            policy_loss = -T.tmean(surr)
            v = critic_forward_batch(bundle, mb["critic_obs"])
            value_loss = T.tmean(T.square(v - T.Tensor(returns[chunk]))) * 0.5
            entropy = gaussian_entropy(log_std)
            loss = (
                policy_loss
                + value_loss * config.value_coef
                - entropy * config.entropy_coef
            )
            if not np.isfinite(loss.data):
                raise TrainingError(
                    f"non-finite PPO loss (policy={policy_loss.data}, "
                    f"value={value_loss.data}); aborting update"
                )
            loss.backward()
            bundle.store.clip_grad_norm(config.max_grad_norm)
            T.adam_step(bundle.store, config.lr, lr_overrides=critic_names)
            stats["policy_loss"] += policy_loss.item()
            stats["value_loss"] += value_loss.item()
            stats["entropy"] += entropy.item()
            stats["clip_frac"] += float(
                (np.abs(ratio.data - 1.0) > config.clip_eps).mean()
            )
            count += 1
    return {k: v / max(count, 1) for k, v in stats.items()}


def convergence_check(history: list[float], window: int, threshold: float) -> bool:
    """Plateau detection: the last window improved on the previous one by
    less than `threshold` (absolute improvement in mean scoring reward)."""
    if len(history) < 2 * window:
        return False
    last = float(np.mean(history[-window:]))
    prev = float(np.mean(history[-2 * window : -window]))
    return (last - prev) < threshold


@dataclass
class MarlResult:
    bundles: list[PolicyBundle]
    pair_datasets: list[PairDataset] | None
    reward_history: dict[int, list[float]]  # per agent id, per-iteration means
    steps_collected: int
    converged: bool
    warning: str | None = None


def train_marl(
    spec: ScenarioSpec,
    config: TrainConfig,
    bundles: list[PolicyBundle],
    budget_steps: int,
    seed: int,
    record_pairs: bool = False,
    log_fn=None,
    stop_on_convergence: bool = True,
    checkpoint_fn=None,
    checkpoint_every: int = 20,
) -> MarlResult:
    """PPO training loop shared by phase 1, phase 3, and the baselines.

    `checkpoint_fn(bundle, steps_done)` fires every `checkpoint_every`
    iterations and once more at the end.
    """
    env_rng = np.random.default_rng(seed)
    worlds = [
        make_world(spec, int(s))
        for s in env_rng.integers(0, 2**62, size=config.n_envs)
    ]
    driver = StepDriver(worlds, bundles, seed=seed + 1, stochastic=True)
    update_rng = np.random.default_rng(seed + 2)
    pair_datasets = None
    if record_pairs:
        capacity = max(budget_steps // 10 + config.rollout_steps * config.n_envs, 10)
        pair_datasets = [PairDataset(capacity=capacity) for _ in bundles]
    history: dict[int, list[float]] = {b.agent_id: [] for b in bundles}
    steps_done = 0
    converged = False
    iteration = 0
    while steps_done < budget_steps:
        buffers = collect_rollout(driver, config.rollout_steps, pair_datasets)
        steps_done += config.rollout_steps * config.n_envs
        iteration += 1
        all_stats = {}
        for bundle, buf in zip(bundles, buffers):
            stats = ppo_update(bundle, buf, config, update_rng)
            history[bundle.agent_id].append(float(buf.scoring_rewards.mean()))
            all_stats[bundle.agent_id] = stats
        if log_fn is not None:
            log_fn(
                {
                    "event": "iteration",
                    "iteration": iteration,
                    "steps": steps_done,
                    "mean_scoring_reward": {
                        str(a): h[-1] for a, h in history.items()
                    },
                    "losses": {str(a): s for a, s in all_stats.items()},
                }
            )
        if checkpoint_fn is not None and iteration % checkpoint_every == 0:
            for bundle in bundles:
                checkpoint_fn(bundle, steps_done)
        if stop_on_convergence and all(
            convergence_check(h, config.conv_window, config.conv_threshold)
            for h in history.values()
        ):
            converged = True
            break
    if checkpoint_fn is not None:
        for bundle in bundles:
            checkpoint_fn(bundle, steps_done)
    warning = None
    if not converged and stop_on_convergence:
        warning = "budget exhausted before the reward history plateaued"
    return MarlResult(
        bundles=bundles,
        pair_datasets=pair_datasets,
        reward_history=history,
        steps_collected=steps_done,
        converged=converged,
        warning=warning,
    )


def phase1(
    spec: ScenarioSpec,
    config: TrainConfig,
    nets: dict[str, ScoreNet],
    seed: int | None = None,
    log_fn=None,
    checkpoint_fn=None,
) -> tuple[MarlResult, list[PairDataset]]:
    """Train Self-Att agents with MAPPO, logging pairs; returns trimmed datasets."""
    seed = config.seed if seed is None else seed
    codec = ScenarioCodec(spec)
    bundles = [
        make_bundle(
            "self_att",
            spec,
            agent_id,
            nets,
            seed=seed + 100 + agent_id,
            hidden=config.hidden,
            centralized=True,
            gain=config.gain,
            log_std_init=config.log_std_init,
        )
        for agent_id in codec.agent_ids
    ]
    result = train_marl(
        spec,
        config,
        bundles,
        config.phase1_steps,
        seed,
        record_pairs=True,
        log_fn=log_fn,
        checkpoint_fn=checkpoint_fn,
    )
    trimmed = [trim_dataset(d) for d in result.pair_datasets]
    return result, trimmed


@dataclass
class Phase2Report:
    epochs_run: int
    best_val_loss: float
    final_val_loss: float
    test_loss: float
    uniform_baseline_loss: float
    rank_accuracy: np.ndarray


def phase2(
    dataset: PairDataset,
    config: IWTrainConfig | None = None,
    seed: int = 0,
    log_fn=None,
) -> tuple[IWNet, Phase2Report]:
    """Offline inverse-network training with early stopping on validation loss."""
    config = config or IWTrainConfig()
    if len(dataset) < 10:
        raise ConfigurationError(
            f"pair dataset too small for a 70/10/20 split: {len(dataset)} entries"
        )
    arrays = dataset.to_arrays()
    n = arrays["w"].shape[0]
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_train = int(config.train_frac * n)
    n_val = int(config.val_frac * n)
    tr = order[:n_train]
    va = order[n_train : n_train + n_val]
    te = order[n_train + n_val :]
    iw = IWNet(hidden=config.hidden, seed=seed)

    def split_loss(idx) -> float:
        with T.no_grad():
            return iw_loss(
                iw,
                arrays["query"][idx],
                arrays["goals"][idx],
                arrays["mask"][idx],
                arrays["w"][idx],
            ).item()

    best_val = math.inf
    best_state = iw.store.state_arrays()
    best_epoch = 0
    epochs_run = 0
    bs = config.batch_size
    for epoch in range(config.max_epochs):
        perm = rng.permutation(len(tr))
        for start in range(0, len(tr), bs):
            idx = tr[perm[start : start + bs]]
            iw.store.zero_grad()
            loss = iw_loss(
                iw,
                arrays["query"][idx],
                arrays["goals"][idx],
                arrays["mask"][idx],
                arrays["w"][idx],
            )
            if not np.isfinite(loss.data):
                raise TrainingError(f"non-finite IW loss at epoch {epoch}")
            loss.backward()
            T.adam_step(iw.store, config.lr)
        val = split_loss(va)
        epochs_run = epoch + 1
        if val < best_val:
            best_val = val
            best_state = iw.store.state_arrays()
            best_epoch = epoch
        if log_fn is not None and epoch % 25 == 0:
            log_fn({"event": "iw_epoch", "epoch": epoch, "val_loss": val})
        if epoch - best_epoch >= config.patience:
            break
    final_val = split_loss(va)
    iw.store.load_state(best_state)
    test_loss = split_loss(te)
    with T.no_grad():
        pred = iw.forward(
            arrays["query"][te], arrays["goals"][te], arrays["mask"][te]
        ).data
    m = arrays["mask"][te]
    uniform = m / np.maximum(m.sum(axis=1, keepdims=True), 1.0)
    uniform_loss = float(((uniform - arrays["w"][te]) ** 2).mean())
    from .evaluation import rank_accuracy  # local import; evaluation imports us

    acc = rank_accuracy(pred, arrays["w"][te])
    return iw, Phase2Report(
        epochs_run=epochs_run,
        best_val_loss=best_val,
        final_val_loss=final_val,
        test_loss=test_loss,
        uniform_baseline_loss=uniform_loss,
        rank_accuracy=acc,
    )


def upgrade_to_inverse(bundle: PolicyBundle, iw: IWNet, seed: int = 0) -> PolicyBundle:
    """Compose the inverse-attention policy: shared heads copied over,
    identity-initialized weight-update layer, frozen inverse network."""
    if bundle.variant != "self_att":
        raise ContractViolation("phase 3 starts from a self_att bundle")
    meta = replace(bundle.meta, variant="inverse_att")
    out = PolicyBundle(meta, bundle.nets, seed=seed, iw=iw)
    shared = bundle.store.state_arrays()
    state = out.store.state_arrays()
    state.update(shared)
    out.store.load_state(state)
    return out


def phase3(
    bundles: list[PolicyBundle],
    iw_by_agent: dict[int, IWNet],
    spec: ScenarioSpec,
    config: TrainConfig,
    seed: int | None = None,
    log_fn=None,
    checkpoint_fn=None,
) -> MarlResult:
    """Continue MAPPO training of the composed policy; IW stays frozen."""
    seed = config.seed if seed is None else seed
    inverse = [
        upgrade_to_inverse(b, iw_by_agent[b.agent_id], seed=seed + 300 + b.agent_id)
        for b in bundles
    ]
    return train_marl(
        spec,
        config,
        inverse,
        config.phase3_steps,
        seed + 1,
        record_pairs=False,
        log_fn=log_fn,
        checkpoint_fn=checkpoint_fn,
    )


def run_algorithm1(
    spec: ScenarioSpec,
    config: TrainConfig,
    nets: dict[str, ScoreNet],
    iw_config: IWTrainConfig | None = None,
    seed: int | None = None,
    log_fn=None,
) -> dict:
    """The full three-phase pipeline; returns bundles and reports per phase."""
    seed = config.seed if seed is None else seed
    p1, trimmed = phase1(spec, config, nets, seed=seed, log_fn=log_fn)
    iw_by_agent: dict[int, IWNet] = {}
    reports: dict[int, Phase2Report] = {}
    for bundle, data in zip(p1.bundles, trimmed):
        iw, report = phase2(data, iw_config, seed=seed + bundle.agent_id, log_fn=log_fn)
        iw_by_agent[bundle.agent_id] = iw
        reports[bundle.agent_id] = report
    p3 = phase3(p1.bundles, iw_by_agent, spec, config, seed=seed, log_fn=log_fn)
    return {
        "phase1": p1,
        "pair_datasets": trimmed,
        "iw_by_agent": iw_by_agent,
        "phase2_reports": reports,
        "phase3": p3,
    }
