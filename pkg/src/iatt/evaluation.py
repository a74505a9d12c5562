"""Mix-and-match tournaments, inverse-network rank accuracy, marginal-return
sweeps over the number of inverse-attention agents, and partial-observation
evaluations.

Episodes always run deterministic (mean) actions; every report carries its
master seed and a per-episode composition log from which all aggregates can
be recomputed exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .agents import PolicyBundle, ScenarioCodec
from .engine import Role, ScenarioSpec, make_world, step
from .errors import ConfigurationError, ContractViolation
from .training import StepDriver


@dataclass
class PoolEntry:
    method: str
    role: int  # engine Role value this checkpoint can play
    seed_id: int
    bundle: PolicyBundle
    ref: str = "<memory>"


class AgentPool:
    """Checkpoint pool for mix-and-match sampling."""

    def __init__(self, entries: list[PoolEntry]):
        if not entries:
            raise ConfigurationError("empty agent pool")
        self.entries = entries

    def indices_for_role(self, role: int) -> list[int]:
        return [i for i, e in enumerate(self.entries) if e.role == role]

    @property
    def methods(self) -> list[str]:
        seen: dict[str, None] = {}
        for e in self.entries:
            seen.setdefault(e.method, None)
        return list(seen)


def sample_composition(
    pool: AgentPool, spec: ScenarioSpec, rng: np.random.Generator
) -> list[int]:
    """Uniform independent pool draw per agent slot; returns entry indices."""
    codec = ScenarioCodec(spec)
    comp = []
    for sid in codec.agent_ids:
        candidates = pool.indices_for_role(codec.roles[sid])
        if not candidates:
            raise ConfigurationError(
                f"pool has no entry for role {Role(codec.roles[sid]).name}"
            )
        comp.append(int(candidates[rng.integers(len(candidates))]))
    return comp


@dataclass
class MatchReport:
    scenario: dict
    episodes: int
    steps: int
    master_seed: int
    methods: list[str]
    slot_roles: list[int]
    composition_log: list[dict]
    per_method: dict[str, dict] = field(default_factory=dict)
    per_method_role: dict[str, dict] = field(default_factory=dict)
    team_total: dict = field(default_factory=dict)
    mean_visible_entities: float = 0.0

    def table(self) -> str:
        lines = [f"{'method/role':<28}{'mean':>12}{'stderr':>10}{'n':>8}"]
        for key in sorted(self.per_method_role):
            row = self.per_method_role[key]
            lines.append(
                f"{key:<28}{row['mean']:>12.3f}{row['stderr']:>10.3f}{row['count']:>8d}"
            )
        lines.append(
            f"{'team total':<28}{self.team_total['mean']:>12.3f}"
            f"{self.team_total['stderr']:>10.3f}{self.episodes:>8d}"
        )
        return "\n".join(lines)


def _mean_stderr(samples: np.ndarray) -> dict:
    n = len(samples)
    mean = float(np.mean(samples)) if n else 0.0
    stderr = float(np.std(samples, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return {"mean": mean, "stderr": stderr, "count": n}


def run_episode(
    spec: ScenarioSpec,
    bundles: list[PolicyBundle],
    seed: int,
    steps: int,
) -> tuple[np.ndarray, float]:
    """One deterministic episode; per-slot scoring totals and mean visible count."""
    espec = replace(spec, horizon=steps)
    world = make_world(espec, seed)
    driver = StepDriver([world], bundles, stochastic=False, auto_reset=False)
    totals = np.zeros(len(bundles))
    visible = 0.0
    for _ in range(steps):
        rec = driver.step()
        totals += rec["scoring"][0]
        visible += float(
            np.mean([enc["mask"][0, :-1].sum() for enc in rec["encs"]])
        )
    return totals, visible / steps


def _check_pool_against_spec(pool: AgentPool, spec: ScenarioSpec):
    for e in pool.entries:
        b = e.bundle
        if b.spec.kind != spec.kind or b.spec.n_per_side != spec.n_per_side:
            raise ConfigurationError(
                f"checkpoint {e.method}/{e.seed_id} was trained on "
                f"{b.spec.kind} N={b.spec.n_per_side}, tournament is "
                f"{spec.kind} N={spec.n_per_side}"
            )


def run_tournament(
    pool: AgentPool,
    spec: ScenarioSpec,
    episodes: int = 1000,
    steps: int = 200,
    seed: int = 0,
) -> MatchReport:
    """Mix-and-match: sample a composition per episode, attribute scoring
    rewards to each slot's method, aggregate mean and standard error."""
    _check_pool_against_spec(pool, spec)
    master = np.random.default_rng(seed)
    codec = ScenarioCodec(spec)
    log: list[dict] = []
    visible_acc = 0.0
    for _ in range(episodes):
        comp = sample_composition(pool, spec, master)
        ep_seed = int(master.integers(0, 2**62))
        bundles = [pool.entries[i].bundle for i in comp]
        totals, vis = run_episode(spec, bundles, ep_seed, steps)
        visible_acc += vis
        log.append({"entries": comp, "seed": ep_seed, "rewards": totals.tolist()})
    report = MatchReport(
        scenario=spec.to_dict(),
        episodes=episodes,
        steps=steps,
        master_seed=seed,
        methods=pool.methods,
        slot_roles=[codec.roles[sid] for sid in codec.agent_ids],
        composition_log=log,
        mean_visible_entities=visible_acc / max(episodes, 1),
    )
    _aggregate(report, pool)
    return report


def _aggregate(report: MatchReport, pool: AgentPool):
    by_method: dict[str, list[float]] = {m: [] for m in report.methods}
    by_method_role: dict[str, list[float]] = {}
    team: list[float] = []
    for ep in report.composition_log:
        team.append(float(np.sum(ep["rewards"])))
        for slot, (idx, r) in enumerate(zip(ep["entries"], ep["rewards"])):
            entry = pool.entries[idx]
            by_method[entry.method].append(r)
            key = f"{entry.method}/{Role(report.slot_roles[slot]).name.lower()}"
            by_method_role.setdefault(key, []).append(r)
    report.per_method = {m: _mean_stderr(np.array(v)) for m, v in by_method.items()}
    report.per_method_role = {
        k: _mean_stderr(np.array(v)) for k, v in by_method_role.items()
    }
    report.team_total = _mean_stderr(np.array(team))


def recount(report: MatchReport, pool: AgentPool) -> MatchReport:
    """Recompute aggregates from the composition log (bookkeeping identity)."""
    fresh = MatchReport(
        scenario=report.scenario,
        episodes=report.episodes,
        steps=report.steps,
        master_seed=report.master_seed,
        methods=report.methods,
        slot_roles=report.slot_roles,
        composition_log=report.composition_log,
        mean_visible_entities=report.mean_visible_entities,
    )
    _aggregate(fresh, pool)
    return fresh


def rank_accuracy(pred, true) -> np.ndarray:
    """Per-rank agreement of the descending weight ordering.

    accuracy[r] is the fraction of samples whose rank-r goal index matches
    between prediction and ground truth. Ties break toward the lower goal
    index (stable sort), so the metric is invariant to strictly monotone
    transforms of the weight vectors.
    """
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    true = np.atleast_2d(np.asarray(true, dtype=np.float64))
    if pred.shape != true.shape:
        raise ContractViolation(f"shape mismatch: {pred.shape} vs {true.shape}")
    pr = np.argsort(-pred, axis=1, kind="stable")
    tr = np.argsort(-true, axis=1, kind="stable")
    return (pr == tr).mean(axis=0)


@dataclass
class SweepCell:
    scale: int
    n_inverse: int
    mean: float
    stderr: float
    episodes: int


@dataclass
class SweepReport:
    cells: list[SweepCell]
    trend_notes: dict[int, str]

    def table(self) -> str:
        scales = sorted({c.scale for c in self.cells})
        lines = ["scale  " + "  ".join(f"#inv={i:<14d}" for i in range(max(scales) + 1))]
        for s in scales:
            row = [f"{s:<6d}"]
            for i in range(max(scales) + 1):
                cell = next(
                    (c for c in self.cells if c.scale == s and c.n_inverse == i), None
                )
                row.append("-".ljust(16) if cell is None else f"{cell.mean:8.2f}+-{cell.stderr:<6.2f}")
            lines.append("  ".join(row))
        return "\n".join(lines)


def multi_inverse_sweep(
    pools_by_scale: dict[int, dict[str, list[PolicyBundle]]],
    episodes: int = 100,
    steps: int = 200,
    seed: int = 0,
    base_method: str = "mappo",
    replace_method: str = "inverse_att",
    kind: str = "spread",
) -> SweepReport:
    """Group reward as baseline agents are gradually replaced by Inverse-Att.

    `pools_by_scale[scale]` maps method name to a list of seed bundles. The
    count-0 cell is a pure-baseline run on the same episode seeds.
    """
    master = np.random.default_rng(seed)
    cells: list[SweepCell] = []
    trend: dict[int, str] = {}
    for scale, methods in sorted(pools_by_scale.items()):
        base = methods[base_method]
        repl = methods[replace_method]
        spec = ScenarioSpec(kind=kind, n_per_side=scale, horizon=steps)
        n_slots = len(ScenarioCodec(spec).agent_ids)
        means = []
        for count in range(n_slots + 1):
            totals = []
            for _ in range(episodes):
                swap = master.choice(n_slots, size=count, replace=False)
                bundles = [
                    repl[master.integers(len(repl))]
                    if slot in swap
                    else base[master.integers(len(base))]
                    for slot in range(n_slots)
                ]
                ep_seed = int(master.integers(0, 2**62))
                rewards, _ = run_episode(spec, bundles, ep_seed, steps)
                totals.append(float(rewards.sum()))
            stats = _mean_stderr(np.array(totals))
            cells.append(
                SweepCell(scale, count, stats["mean"], stats["stderr"], episodes)
            )
            means.append(stats["mean"])
        diffs = np.diff(means)
        trend[scale] = (
            "monotone increasing" if np.all(diffs > 0) else "non-monotone"
        )
    return SweepReport(cells=cells, trend_notes=trend)


def partial_obs_eval(
    pool: AgentPool,
    spec: ScenarioSpec,
    radii: tuple[float, ...] = (1.5, 1.0, 0.5),
    episodes: int = 100,
    steps: int = 200,
    seed: int = 0,
) -> dict[float, MatchReport]:
    """Tournaments at each visibility radius; absent teammates are zero-filled
    in the inverse-attention slots by the rollout machinery."""
    out: dict[float, MatchReport] = {}
    for radius in radii:
        rspec = replace(spec, visibility_radius=radius)
        out[radius] = run_tournament(pool, rspec, episodes, steps, seed)
    return out


def measure_random_baseline(
    spec: ScenarioSpec, episodes: int = 50, steps: int = 200, seed: int = 0
) -> dict:
    """Mean scoring-mode episode reward of uniform-random forces, per role."""
    rng = np.random.default_rng(seed)
    codec = ScenarioCodec(spec)
    n_agents = len(codec.agent_ids)
    totals = np.zeros((episodes, n_agents))
    espec = replace(spec, horizon=steps, reward_mode="scoring")
    for ep in range(episodes):
        world = make_world(espec, int(rng.integers(0, 2**62)))
        for _ in range(steps):
            actions = rng.uniform(-1.0, 1.0, size=(n_agents, 2))
            _, rewards, _ = step(world, actions)
            totals[ep] += rewards
    per_role: dict[str, float] = {}
    for role in sorted({codec.roles[sid] for sid in codec.agent_ids}):
        cols = [i for i, sid in enumerate(codec.agent_ids) if codec.roles[sid] == role]
        per_role[Role(role).name.lower()] = float(totals[:, cols].mean())
    return {
        "per_agent_mean": float(totals.mean()),
        "per_role": per_role,
        "episodes": episodes,
    }
