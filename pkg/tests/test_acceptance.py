"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s`. The training-based
criteria are desk-scale runs with their stated runtime budgets; see the
README for expected wall-clock times.
"""

import dataclasses
import time

import numpy as np
import pytest

import iatt
from iatt import agents as ag
from iatt import evaluation as ev
from iatt import gradfield as gf
from iatt import tensor as T
from iatt import training as tr
from iatt.engine import (
    ARENA_DIAGONAL,
    Role,
    ScenarioSpec,
    make_world,
    observe,
    reset_world,
    step,
)
from util import finite_diff_check


def report(num: int, name: str, ok: bool, detail: str = ""):
    status = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE {num:02d} {name}: {status} {detail}")
    assert ok, f"criterion {num} ({name}) failed: {detail}"


@pytest.fixture(scope="module")
def standard_nets():
    """Gradient fields trained on the full 10k-sample datasets (default settings)."""
    sched = gf.NoiseSchedule()
    cfg = gf.GFTrainConfig(epochs=60)
    return {
        "entity": gf.train_score_net(gf.gen_entity_dataset(10000, 0), sched, cfg, seed=1),
        "boundary": gf.train_score_net(gf.gen_boundary_dataset(10000, 0), sched, cfg, seed=2),
    }


def test_criterion_01_autodiff_gradient_checks(standard_nets):
    t0 = time.time()
    spec = ScenarioSpec(kind="spread", n_per_side=2, horizon=50)
    rng = np.random.default_rng(0)
    iw = ag.IWNet(seed=1)
    selfatt = ag.make_bundle("self_att", spec, 0, nets=standard_nets, seed=2)
    inverse = tr.upgrade_to_inverse(selfatt, iw, seed=3)
    mlp = ag.make_bundle("mlp_baseline", spec, 0, nets=standard_nets, seed=4)
    # move the UW head off its identity/relu kink before differencing
    inverse.uw_w.data += 0.05 * np.random.default_rng(5).standard_normal(
        inverse.uw_w.data.shape
    )
    codec = ag.ScenarioCodec(spec)
    worlds = [make_world(spec, s) for s in (10, 11, 12, 13)]
    batch = codec.encode_agent(worlds, selfatt)
    k, s_slots = selfatt.layout.n_slots, selfatt.meta.teammate_slots
    inferred = rng.uniform(0.1, 1.0, (4, s_slots, k))
    inferred /= inferred.sum(axis=2, keepdims=True)
    probe2 = rng.standard_normal((4, 2))
    probe1 = rng.standard_normal(4)
    targets = rng.uniform(0.1, 0.9, (4, k))
    critic_obs = rng.standard_normal((4, selfatt.c1.in_dim))

    def selfatt_loss():
        _, mean, _ = ag.selfatt_forward_batch(
            selfatt, batch["goals"], batch["mask"], batch["selfg"]
        )
        return T.tmean(T.square(mean - T.Tensor(probe2)))

    def inverse_loss():
        w, mean, _ = ag.inverse_forward_batch(
            inverse, batch["goals"], batch["mask"], batch["selfg"], inferred
        )
        return T.tmean(T.square(mean - T.Tensor(probe2))) + T.tmean(
            T.square(w - T.Tensor(targets))
        )

    def iw_loss_fn():
        return ag.iw_loss(iw, batch["query"], batch["goals"], batch["mask"], targets)

    def critic_loss():
        v = ag.critic_forward_batch(selfatt, critic_obs)
        return T.tmean(T.square(v - T.Tensor(probe1)))

    def mlp_loss():
        mean = ag.mlp_forward_batch(mlp, batch["flat"])
        return T.tmean(T.square(mean - T.Tensor(probe2)))

    heads = {
        "f": (selfatt_loss, selfatt.store, ["f.l1.w", "f.l1.b", "f.l2.w", "f.l2.b"]),
        "W(q,k)": (selfatt_loss, selfatt.store, ["wq.w", "wq.b", "wk.w", "wk.b"]),
        "V": (selfatt_loss, selfatt.store, ["v.l1.w", "v.l1.b", "v.l2.w", "v.l2.b"]),
        "h": (selfatt_loss, selfatt.store, ["h.l1.w", "h.l1.b", "h.l2.w", "h.l2.b"]),
        "IW": (iw_loss_fn, iw.store, None),
        "UW": (inverse_loss, inverse.store, ["uw.w", "uw.b"]),
        "critic": (critic_loss, selfatt.store, ["c1.w", "c1.b", "c2.w", "c2.b", "c3.w", "c3.b"]),
        "mlp": (mlp_loss, mlp.store, ["p1.w", "p1.b", "p2.w", "p2.b", "p3.w", "p3.b"]),
    }
    worst = {}
    for name, (loss_fn, store, names) in heads.items():
        worst[name] = finite_diff_check(
            loss_fn, store, names=names, n_samples=50, h=1e-5, rng=rng
        )
    elapsed = time.time() - t0
    ok = all(e < 1e-4 for e in worst.values()) and elapsed < 60
    detail = (
        "worst rel err per head: "
        + ", ".join(f"{n}={e:.2e}" for n, e in worst.items())
        + f"; {elapsed:.1f}s"
    )
    report(1, "autodiff gradient checks", ok, detail)


def test_criterion_02_dsm_analytic_oracle():
    t0 = time.time()
    sched = gf.NoiseSchedule()
    rng = np.random.default_rng(10)
    data = gf.GFDataset(rng.standard_normal((2000, 1)), kind="gaussian1d")
    net = gf.train_score_net(
        data, sched, gf.GFTrainConfig(epochs=600, batch_size=256, lr=1e-3), seed=11
    )
    xs = np.linspace(-2.0, 2.0, 41)[:, None]
    rels = []
    for t in (sched.epsilon, 0.25, 0.5, 0.75, 1.0):
        pred = net.score(xs, t)[:, 0]
        truth = -xs[:, 0] / (1.0 + sched.sigma(t) ** 2)
        rels.append(np.abs(pred - truth).sum() / np.abs(truth).sum())
    mean_rel = float(np.mean(rels))
    elapsed = time.time() - t0
    ok = mean_rel < 0.15 and elapsed < 300
    report(
        2,
        "DSM analytic oracle",
        ok,
        f"mean relative error {mean_rel:.4f} over t grid (per-t: "
        + ", ".join(f"{r:.3f}" for r in rels)
        + f"); {elapsed:.0f}s",
    )


def test_criterion_03_boundary_inwardness(standard_nets):
    t0 = time.time()
    net = standard_nets["boundary"]
    eps = net.schedule.epsilon
    probes = np.array([[0.95, 0.0], [-0.95, 0.0], [0.0, 0.95], [0.0, -0.95]])
    inward = -probes / np.linalg.norm(probes, axis=1, keepdims=True)
    scores = net.score(probes, eps)
    dots = (scores * inward).sum(axis=1)
    elapsed = time.time() - t0
    ok = bool((dots > 0).all()) and elapsed < 300
    report(
        3,
        "boundary-field inwardness",
        ok,
        f"inward dot products {np.round(dots, 4).tolist()}; {elapsed:.0f}s",
    )


def test_criterion_04_identity_at_init(standard_nets):
    spec = ScenarioSpec(kind="spread", n_per_side=2, horizon=50)
    codec = ag.ScenarioCodec(spec)
    selfatt = ag.make_bundle("self_att", spec, 0, standard_nets, seed=20)
    inverse = tr.upgrade_to_inverse(selfatt, ag.IWNet(seed=21), seed=22)
    rng = np.random.default_rng(23)
    worst = 0.0
    for trial in range(100):
        world = make_world(spec, int(rng.integers(1 << 30)))
        step(world, rng.uniform(-1, 1, (2, 2)))  # nonzero velocities/prev actions
        gs0 = gf.build_goalset(
            observe(world, 0), standard_nets, roles_by_id=codec.roles_by_id
        )
        gs1 = gf.build_goalset(
            observe(world, 1), standard_nets, roles_by_id=codec.roles_by_id
        )
        _, a_self, _ = ag.selfatt_forward(selfatt, gs0)
        teammates = [gs1] if trial % 2 == 0 else []  # exercise zero-filled slots
        _, a_inv = ag.inverse_forward(inverse, gs0, teammates)
        worst = max(worst, float(np.abs(a_inv - a_self).max()))
    ok = worst < 1e-12
    report(4, "identity-at-init", ok, f"worst action difference {worst:.2e}")


def test_criterion_05_dataset_trimming_contract(standard_nets):
    spec = ScenarioSpec(kind="spread", n_per_side=2, horizon=25)
    config = tr.TrainConfig(
        n_envs=4, rollout_steps=32, phase1_steps=384, conv_threshold=-1e9
    )
    result, trimmed = tr.phase1(spec, config, standard_nets, seed=30)
    k_collected = result.pair_datasets[0].total_collected
    kept = trimmed[0]
    ids = kept.order_ids()
    chronological = bool((np.diff(ids) > 0).all()) if len(ids) > 1 else True
    newest = ids.min() == k_collected - len(kept) if len(kept) else True
    ok = (
        k_collected == 384
        and len(kept) == 384 // 10
        and chronological
        and newest
    )
    report(
        5,
        "Algorithm 1 dataset contract",
        ok,
        f"collected K={k_collected}, kept {len(kept)} (=floor(K/10)), "
        f"chronology {'ok' if chronological and newest else 'BROKEN'}",
    )


@pytest.fixture(scope="module")
def phase1_spread2(standard_nets):
    """Criterion 6's phase-1 run (shared with nothing else; ~minutes)."""
    spec = ScenarioSpec(kind="spread", n_per_side=2, horizon=200)
    config = tr.TrainConfig(n_envs=8, rollout_steps=256, phase1_steps=300_000, seed=0)
    t0 = time.time()
    result, trimmed = tr.phase1(spec, config, standard_nets, seed=0)
    return result, trimmed, time.time() - t0


def test_criterion_06_phase2_rank_accuracy(standard_nets, phase1_spread2):
    result, trimmed, phase1_time = phase1_spread2
    t0 = time.time()
    iw, rep = tr.phase2(trimmed[0], tr.IWTrainConfig(), seed=0)
    elapsed = phase1_time + (time.time() - t0)
    rank1 = float(rep.rank_accuracy[0])
    ok = (
        rank1 > 0.90
        and rep.test_loss < rep.uniform_baseline_loss
        and elapsed < 45 * 60
    )
    report(
        6,
        "phase-2 inverse-attention accuracy",
        ok,
        f"rank-1 accuracy {rank1:.4f} (all ranks "
        f"{np.round(rep.rank_accuracy, 3).tolist()}), test MSE {rep.test_loss:.6f} "
        f"vs uniform {rep.uniform_baseline_loss:.6f}; phase1 {result.steps_collected} "
        f"steps, total {elapsed:.0f}s",
    )


def test_criterion_07_learning_sanity(standard_nets):
    t0 = time.time()
    spec = ScenarioSpec(kind="spread", n_per_side=1, horizon=200)
    baseline = ev.measure_random_baseline(spec, episodes=50, steps=200, seed=1)
    config = tr.TrainConfig(
        n_envs=8, rollout_steps=256, phase1_steps=200_000, conv_threshold=-1e9, seed=1
    )
    result, _ = tr.phase1(spec, config, standard_nets, seed=1)
    totals = [
        ev.run_episode(spec, [result.bundles[0]], seed=5000 + i, steps=200)[0][0]
        for i in range(30)
    ]
    trained = float(np.mean(totals))
    elapsed = time.time() - t0
    ok = trained >= 5.0 * baseline["per_agent_mean"] and elapsed < 20 * 60
    report(
        7,
        "learning sanity",
        ok,
        f"trained {trained:.1f} vs random baseline {baseline['per_agent_mean']:.2f} "
        f"(x{trained / max(baseline['per_agent_mean'], 1e-9):.0f}, needs x5); {elapsed:.0f}s",
    )


def test_criterion_08_tournament_bookkeeping(standard_nets):
    t0 = time.time()
    spec = ScenarioSpec(kind="spread", n_per_side=2, horizon=200)
    shared = ag.make_bundle("self_att", spec, 0, standard_nets, seed=40)
    entries = [
        ev.PoolEntry(method=m, role=int(Role.AGENT), seed_id=i, bundle=shared)
        for i, m in enumerate(("method_a", "method_b"))
    ]
    pool = ev.AgentPool(entries)
    r1 = ev.run_tournament(pool, spec, episodes=1000, steps=200, seed=42)
    r2 = ev.run_tournament(pool, spec, episodes=1000, steps=200, seed=42)
    bit_reproducible = (
        r1.composition_log == r2.composition_log and r1.per_method == r2.per_method
    )
    counted = ev.recount(r1, pool)
    recount_exact = (
        counted.per_method == r1.per_method
        and counted.per_method_role == r1.per_method_role
        and counted.team_total == r1.team_total
    )
    a, b = r1.per_method["method_a"], r1.per_method["method_b"]
    within = abs(a["mean"] - b["mean"]) <= 2.0 * (a["stderr"] + b["stderr"])
    elapsed = time.time() - t0
    ok = bit_reproducible and recount_exact and within
    report(
        8,
        "tournament bookkeeping",
        ok,
        f"bit-reproducible={bit_reproducible}, recount exact={recount_exact}, "
        f"identical-checkpoint means {a['mean']:.3f} vs {b['mean']:.3f} "
        f"(2se {2 * (a['stderr'] + b['stderr']):.3f}); {elapsed:.0f}s",
    )


def test_criterion_09_rank_accuracy_oracle():
    rng = np.random.default_rng(50)
    w = rng.uniform(size=(200, 4))
    exact = ev.rank_accuracy(w, w)
    true = np.array([[0.4, 0.3, 0.2, 0.1]] * 100)
    reversed_acc = ev.rank_accuracy(true[:, ::-1].copy(), true)
    rand = ev.rank_accuracy(
        rng.uniform(size=(10_000, 4)), rng.uniform(size=(10_000, 4))
    )
    ok = (
        np.allclose(exact, 1.0)
        and reversed_acc[0] == 0.0
        and bool(np.all(np.abs(rand - 0.25) < 0.02))
    )
    report(
        9,
        "rank-accuracy oracle",
        ok,
        f"exact {exact.tolist()}, reversed rank-1 {reversed_acc[0]}, "
        f"random {np.round(rand, 3).tolist()}",
    )


def test_criterion_10_engine_invariant_fuzz():
    t0 = time.time()
    total_steps = 0
    violations = []
    rng = np.random.default_rng(60)
    for kind in iatt.engine.SCENARIOS:
        n = 3 if kind in ("navigation", "tag") else 2
        spec = ScenarioSpec(kind=kind, n_per_side=n, horizon=100)
        world = make_world(spec, int(rng.integers(1 << 30)))
        n_agents = len(world.agent_ids())
        sheep = world.ids_with_role(Role.SHEEP)
        wolves = world.ids_with_role(Role.WOLF)
        for i in range(20_000):
            _, _, done = step(world, rng.uniform(-1.5, 1.5, (n_agents, 2)))
            total_steps += 1
            if (np.abs(world.pos) > 1.0).any():
                violations.append(f"{kind}: containment at step {i}")
                break
            speed = np.linalg.norm(world.vel, axis=1)
            if (speed > world.max_speed + 1e-9).any():
                violations.append(f"{kind}: speed cap at step {i}")
                break
            if kind == "grassland" and len(world.ids_with_role(Role.GRASS)) != 4:
                violations.append(f"{kind}: grass count at step {i}")
                break
            if kind == "adversary":
                r = world.last_rewards["scoring"]
                if abs(r[: len(sheep)].sum() + r[len(sheep) :].sum()) > 1e-9:
                    violations.append(f"{kind}: reward conservation at step {i}")
                    break
            if done:
                reset_world(world)
    elapsed = time.time() - t0
    ok = not violations and total_steps == 100_000
    report(
        10,
        "engine invariant fuzz",
        ok,
        f"{total_steps} steps across 5 scenarios, "
        f"violations: {violations or 'none'}; {elapsed:.0f}s",
    )


def test_criterion_11_partial_observation_contract(standard_nets):
    t0 = time.time()
    spec = ScenarioSpec(kind="spread", n_per_side=2, horizon=60)
    bundle = ag.make_bundle("self_att", spec, 0, standard_nets, seed=70)
    pool = ev.AgentPool(
        [ev.PoolEntry(method="m", role=int(Role.AGENT), seed_id=0, bundle=bundle)]
    )
    full = ev.run_tournament(pool, spec, episodes=25, steps=60, seed=71)
    big = dataclasses.replace(spec, visibility_radius=ARENA_DIAGONAL)
    big_r = ev.run_tournament(pool, big, episodes=25, steps=60, seed=71)
    bit_exact = (
        full.composition_log == big_r.composition_log
        and full.per_method == big_r.per_method
    )
    reports = ev.partial_obs_eval(
        pool, spec, radii=(1.5, 1.0, 0.5), episodes=10, steps=60, seed=72
    )
    shrinks = (
        reports[0.5].mean_visible_entities < reports[1.5].mean_visible_entities
    )
    all_ran = all(r.episodes == 10 for r in reports.values())
    elapsed = time.time() - t0
    ok = bit_exact and shrinks and all_ran
    report(
        11,
        "partial-observation contract",
        ok,
        f"radius>=diagonal bit-exact={bit_exact}; mean visible 1.5/1.0/0.5 = "
        f"{reports[1.5].mean_visible_entities:.2f}/"
        f"{reports[1.0].mean_visible_entities:.2f}/"
        f"{reports[0.5].mean_visible_entities:.2f}; {elapsed:.0f}s",
    )
