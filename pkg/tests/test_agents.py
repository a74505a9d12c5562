import math

import numpy as np
import pytest

from iatt import agents as ag
from iatt import gradfield as gf
from iatt import tensor as T
from iatt.engine import ScenarioSpec, make_world, observe, step
from iatt.errors import ContractViolation


@pytest.fixture(scope="module")
def spread2_bundle(nets, spread2):
    return ag.make_bundle("self_att", spread2, 0, nets, seed=3)


def goalset_for(nets, spec, world, agent_id):
    codec = ag.ScenarioCodec(spec)
    return gf.build_goalset(
        observe(world, agent_id), nets, roles_by_id=codec.roles_by_id
    )


def test_selfatt_weights_sum_to_one(nets, spread2, spread2_bundle):
    w = make_world(spread2, seed=1)
    gs = goalset_for(nets, spread2, w, 0)
    weights, mean, weighted = ag.selfatt_forward(spread2_bundle, gs)
    assert weights.sum() == pytest.approx(1.0, abs=1e-9)
    assert (weights > 0).all()
    assert mean.shape == (2,) and weighted.shape == (64,)


def test_selfatt_duplicate_goals_equal_weights(nets, spread2, spread2_bundle):
    w = make_world(spread2, seed=2)
    gs = goalset_for(nets, spread2, w, 0)
    gs.goals[1] = gs.goals[0].copy()
    gs.roles[1] = gs.roles[0]  # identical content -> identical one-hot channel
    enc = ag.encode_goalset(gs, spread2_bundle.layout)
    enc.goals[1] = enc.goals[0].copy()
    with T.no_grad():
        weights, _, _ = ag.selfatt_forward_batch(
            spread2_bundle, enc.goals[None], enc.mask[None], enc.selfg[None]
        )
    assert weights.data[0, 0] == pytest.approx(weights.data[0, 1], abs=1e-12)


def test_selfatt_zero_value_embedding_zeroes_contribution(nets, spread2, spread2_bundle):
    w = make_world(spread2, seed=3)
    gs = goalset_for(nets, spread2, w, 0)
    enc = ag.encode_goalset(gs, spread2_bundle.layout)
    with T.no_grad():
        wt, _, _ = ag.selfatt_forward_batch(
            spread2_bundle, enc.goals[None], enc.mask[None], enc.selfg[None]
        )
        e = spread2_bundle.f(T.Tensor(enc.goals[None]))
        values = spread2_bundle.v(e).data.copy()
    # weighted sum with goal 0's value embedding zeroed drops exactly its term
    full = (wt.data[0, :, None] * values[0]).sum(axis=0)
    goal0_term = wt.data[0, 0] * values[0, 0, :].copy()
    values[0, 0, :] = 0.0
    partial = (wt.data[0, :, None] * values[0]).sum(axis=0)
    assert np.allclose(full - partial, goal0_term)


def test_selfatt_empty_goalset_rejected(spread2_bundle):
    with pytest.raises(ContractViolation):
        ag.selfatt_forward_batch(
            spread2_bundle, np.zeros((1, 4, ag.GOAL_DIM)), np.zeros((1, 4)), np.zeros((1, ag.GOAL_DIM))
        )


def test_act_deterministic_repeatable(nets, spread2, spread2_bundle):
    w = make_world(spread2, seed=4)
    gs = goalset_for(nets, spread2, w, 0)
    a1, _ = ag.act(spread2_bundle, gs, np.random.default_rng(0), stochastic=False)
    a2, _ = ag.act(spread2_bundle, gs, np.random.default_rng(99), stochastic=False)
    assert np.array_equal(a1, a2)


def test_act_log_prob_at_mean_closed_form(nets, spread2, spread2_bundle):
    w = make_world(spread2, seed=5)
    gs = goalset_for(nets, spread2, w, 0)
    _, logp = ag.act(spread2_bundle, gs, np.random.default_rng(0), stochastic=False)
    log_std = np.clip(spread2_bundle.log_std.data, ag.LOG_STD_MIN, ag.LOG_STD_MAX)
    expected = -0.5 * (2.0 * log_std + math.log(2.0 * math.pi)).sum()
    assert logp == pytest.approx(expected)


def test_act_clamps_to_unit_box(nets, spread2, spread2_bundle):
    w = make_world(spread2, seed=6)
    gs = goalset_for(nets, spread2, w, 0)
    spread2_bundle.log_std.data[...] = 2.0  # huge std to force clamping
    try:
        rng = np.random.default_rng(1)
        for _ in range(20):
            a, _ = ag.act(spread2_bundle, gs, rng, stochastic=True)
            assert (np.abs(a) <= 1.0).all()
    finally:
        spread2_bundle.log_std.data[...] = spread2_bundle.meta.log_std_init


def test_iw_output_probability_vector(nets, spread2):
    iw = ag.IWNet(seed=7)
    bundle = ag.make_bundle("self_att", spread2, 0, nets, seed=8)
    w = make_world(spread2, seed=9)
    gs = goalset_for(nets, spread2, w, 1)  # infer agent 1 (same type)
    pred = ag.iw_forward(iw, bundle, gs)
    assert pred.sum() == pytest.approx(1.0, abs=1e-9)
    assert len(pred) == len(gs)


def test_iw_type_mismatch_rejected(nets):
    spec = ScenarioSpec(kind="adversary", n_per_side=2)
    codec = ag.ScenarioCodec(spec)
    sheep_bundle = ag.make_bundle("self_att", spec, 0, nets, seed=1)  # sheep slot
    w = make_world(spec, seed=2)
    wolf_gs = gf.build_goalset(observe(w, 2), nets, roles_by_id=codec.roles_by_id)
    iw = ag.IWNet(seed=3)
    with pytest.raises(ContractViolation):
        ag.iw_forward(iw, sheep_bundle, wolf_gs)


def test_iw_loss_uniform_vs_onehot_closed_form():
    # identical keys force a uniform attention output regardless of weights
    iw = ag.IWNet(seed=4)
    k = 4
    goals = np.tile(np.ones((1, 1, ag.GOAL_DIM)), (8, k, 1))
    masks = np.ones((8, k))
    queries = np.zeros((8, ag.QUERY_DIM))
    targets = np.zeros((8, k))
    targets[:, 0] = 1.0
    loss = ag.iw_loss(iw, queries, goals, masks, targets).item()
    expected = (((k - 1) / k) ** 2 + (k - 1) / k**2) / k
    assert loss == pytest.approx(expected, abs=1e-12)


def test_iw_loss_zero_when_prediction_matches():
    iw = ag.IWNet(seed=5)
    k = 3
    goals = np.tile(np.ones((1, 1, ag.GOAL_DIM)), (4, k, 1))
    masks = np.ones((4, k))
    queries = np.zeros((4, ag.QUERY_DIM))
    targets = np.full((4, k), 1.0 / k)  # uniform = what identical keys produce
    assert ag.iw_loss(iw, queries, goals, masks, targets).item() == pytest.approx(0.0, abs=1e-18)


def test_iw_loss_nonnegative_random():
    iw = ag.IWNet(seed=6)
    rng = np.random.default_rng(0)
    goals = rng.standard_normal((16, 5, ag.GOAL_DIM))
    masks = np.ones((16, 5))
    queries = rng.standard_normal((16, ag.QUERY_DIM))
    targets = rng.uniform(0, 1, (16, 5))
    assert ag.iw_loss(iw, queries, goals, masks, targets).item() >= 0.0


def test_uw_identity_at_init(nets, spread2):
    iw = ag.IWNet(seed=10)
    bundle = ag.make_bundle("inverse_att", spread2, 0, nets, seed=11, iw=iw)
    own = np.array([0.4, 0.3, 0.2, 0.1])
    inferred = [np.array([0.25, 0.25, 0.25, 0.25])]
    out = ag.uw_update(bundle, own, inferred)
    assert np.allclose(out, own, atol=1e-12)


def test_uw_identity_with_zero_filled_slots(nets, spread2):
    iw = ag.IWNet(seed=12)
    bundle = ag.make_bundle("inverse_att", spread2, 0, nets, seed=13, iw=iw)
    own = np.array([0.7, 0.1, 0.1, 0.1])
    out = ag.uw_update(bundle, own, [])  # missing teammates zero-filled
    assert np.allclose(out, own, atol=1e-12)


def test_uw_oversize_inferred_rejected(nets, spread2):
    iw = ag.IWNet(seed=14)
    bundle = ag.make_bundle("inverse_att", spread2, 0, nets, seed=15, iw=iw)
    with pytest.raises(ContractViolation):
        ag.uw_update(bundle, np.ones(4) / 4, [np.ones(4) / 4, np.ones(4) / 4])


def test_uw_trained_output_is_probability_vector(nets, spread2):
    iw = ag.IWNet(seed=16)
    bundle = ag.make_bundle("inverse_att", spread2, 0, nets, seed=17, iw=iw)
    rng = np.random.default_rng(0)
    bundle.uw_w.data[...] = rng.standard_normal(bundle.uw_w.data.shape)
    bundle.uw_b.data[...] = rng.standard_normal(bundle.uw_b.data.shape)
    out = ag.uw_update(bundle, rng.uniform(0, 1, 4), [rng.uniform(0, 1, 4)])
    assert out.sum() == pytest.approx(1.0, abs=1e-9)
    assert (out >= 0).all()


def test_inverse_forward_init_equivalence(nets, spread2):
    iw = ag.IWNet(seed=18)
    selfatt = ag.make_bundle("self_att", spread2, 0, nets, seed=19)
    from iatt.training import upgrade_to_inverse

    inverse = upgrade_to_inverse(selfatt, iw)
    w = make_world(spread2, seed=20)
    gs0 = goalset_for(nets, spread2, w, 0)
    gs1 = goalset_for(nets, spread2, w, 1)
    w_self, a_self, _ = ag.selfatt_forward(selfatt, gs0)
    w_inv, a_inv = ag.inverse_forward(inverse, gs0, [gs1])
    assert np.allclose(w_inv, w_self, atol=1e-12)
    assert np.allclose(a_inv, a_self, atol=1e-12)


def test_inverse_forward_no_teammates_zero_filled(nets, spread2):
    iw = ag.IWNet(seed=21)
    selfatt = ag.make_bundle("self_att", spread2, 0, nets, seed=22)
    from iatt.training import upgrade_to_inverse

    inverse = upgrade_to_inverse(selfatt, iw)
    w = make_world(spread2, seed=23)
    gs0 = goalset_for(nets, spread2, w, 0)
    w_self, a_self, _ = ag.selfatt_forward(selfatt, gs0)
    w_inv, a_inv = ag.inverse_forward(inverse, gs0, [])
    assert np.allclose(a_inv, a_self, atol=1e-12)


def test_inverse_sensitivity_to_teammate_obs_after_training(nets, spread2):
    # with nonzero UW weight on the inferred block, perturbing the teammate
    # observation must change the updated weights
    iw = ag.IWNet(seed=24)
    selfatt = ag.make_bundle("self_att", spread2, 0, nets, seed=25)
    from iatt.training import upgrade_to_inverse

    inverse = upgrade_to_inverse(selfatt, iw)
    k = inverse.layout.n_slots
    rng = np.random.default_rng(1)
    inverse.uw_w.data[k:, :] = 0.3 * rng.standard_normal((k, k))
    w = make_world(spread2, seed=26)
    gs0 = goalset_for(nets, spread2, w, 0)
    gs1 = goalset_for(nets, spread2, w, 1)
    w_a, _ = ag.inverse_forward(inverse, gs0, [gs1])
    gs1.self_query[0] += 0.05  # nudge the teammate's velocity observation
    w_b, _ = ag.inverse_forward(inverse, gs0, [gs1])
    assert np.abs(w_a - w_b).max() > 0.0


def test_permutation_consistency(nets, spread2, spread2_bundle):
    w = make_world(spread2, seed=27)
    gs = goalset_for(nets, spread2, w, 0)
    enc = ag.encode_goalset(gs, spread2_bundle.layout)
    perm = np.array([2, 0, 3, 1])
    with T.no_grad():
        w1, a1, _ = ag.selfatt_forward_batch(
            spread2_bundle, enc.goals[None], enc.mask[None], enc.selfg[None]
        )
        w2, a2, _ = ag.selfatt_forward_batch(
            spread2_bundle,
            enc.goals[perm][None],
            enc.mask[perm][None],
            enc.selfg[None],
        )
    assert np.allclose(w2.data[0], w1.data[0][perm], atol=1e-12)
    assert np.allclose(a2.data, a1.data, atol=1e-12)


def test_codec_matches_spec_level_encoding(nets, spread3):
    codec = ag.ScenarioCodec(spread3)
    bundle = ag.make_bundle("self_att", spread3, 1, nets, seed=30)
    w = make_world(spread3, seed=31)
    step(w, np.random.default_rng(0).uniform(-1, 1, (3, 2)))
    gs = goalset_for(nets, spread3, w, 1)
    enc = ag.encode_goalset(gs, bundle.layout)
    batch = codec.encode_agent([w], bundle)
    assert np.array_equal(batch["goals"][0], enc.goals)
    assert np.array_equal(batch["mask"][0], enc.mask)
    assert np.array_equal(batch["selfg"][0], enc.selfg)
    assert np.array_equal(batch["query"][0], enc.query)
    assert np.array_equal(batch["flat"][0], ag.flat_obs(enc))


def test_codec_partial_visibility_masks(nets):
    spec = ScenarioSpec(kind="spread", n_per_side=2, visibility_radius=0.3)
    codec = ag.ScenarioCodec(spec)
    bundle = ag.make_bundle("self_att", spec, 0, nets, seed=32)
    w = make_world(spec, seed=33)
    w.pos[0] = [0.0, 0.0]
    w.pos[1] = [1.0, 1.0]
    w.pos[2] = [0.1, 0.0]
    w.pos[3] = [-1.0, -1.0]
    batch = codec.encode_agent([w], bundle)
    mask = batch["mask"][0]
    assert mask[-1] == 1.0  # wall always present
    assert mask.sum() == 2.0  # only the nearby landmark plus the wall
    hidden_rows = batch["goals"][0][mask == 0.0]
    assert np.allclose(hidden_rows, 0.0)


def test_mlp_baseline_forward(nets, spread2):
    bundle = ag.make_bundle("mlp_baseline", spread2, 0, nets, seed=34, centralized=False)
    w = make_world(spread2, seed=35)
    codec = ag.ScenarioCodec(spread2)
    batch = codec.encode_agent([w], bundle)
    mean, wt = ag.policy_mean_batch(bundle, batch)
    assert mean.data.shape == (1, 2)
    assert wt is None


def test_gradcheck_policy_heads(nets, spread2):
    from util import finite_diff_check

    bundle = ag.make_bundle("self_att", spread2, 0, nets, seed=36)
    codec = ag.ScenarioCodec(spread2)
    worlds = [make_world(spread2, seed=s) for s in (40, 41, 42)]
    batch = codec.encode_agent(worlds, bundle)
    rng = np.random.default_rng(2)
    probe = rng.standard_normal((3, 2))

    def loss_fn():
        _, mean, _ = ag.selfatt_forward_batch(
            bundle, batch["goals"], batch["mask"], batch["selfg"]
        )
        return T.tmean(T.square(mean - T.Tensor(probe)))

    err = finite_diff_check(loss_fn, bundle.store,
                            names=[n for n in bundle.store.names() if n.startswith(("f.", "wq.", "wk.", "v.", "h."))],
                            n_samples=60, rng=rng)
    assert err < 1e-4
