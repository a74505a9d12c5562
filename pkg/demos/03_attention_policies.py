"""The three policy heads: self-attention over goals, attention inference,
and the identity-initialized weight-update layer.

Run: python3 demos/03_attention_policies.py   (~15 s)
"""

import numpy as np

from iatt.agents import IWNet, ScenarioCodec, inverse_forward, iw_forward, make_bundle, selfatt_forward
from iatt.engine import ScenarioSpec, make_world, observe
from iatt.gradfield import GFTrainConfig, NoiseSchedule, build_goalset, gen_boundary_dataset, gen_entity_dataset, train_score_net
from iatt.training import upgrade_to_inverse

sched = NoiseSchedule()
cfg = GFTrainConfig(epochs=15, batch_size=256)
nets = {
    "entity": train_score_net(gen_entity_dataset(4000, 0), sched, cfg, seed=1),
    "boundary": train_score_net(gen_boundary_dataset(4000, 2), sched, cfg, seed=3),
}

spec = ScenarioSpec(kind="spread", n_per_side=3)
codec = ScenarioCodec(spec)
world = make_world(spec, seed=5)

print("== goal set: one gradient-field vector per entity, wall last ==")
gs0 = build_goalset(observe(world, 0), nets, roles_by_id=codec.roles_by_id)
print(f"agent 0 has {len(gs0)} goals (2 agents + 3 landmarks + wall)")

print("\n== self-attention policy ==")
bundle = make_bundle("self_att", spec, 0, nets, seed=6)
weights, action_mean, _ = selfatt_forward(bundle, gs0)
print("attention weights over goals:", weights.round(3), "(sum", round(weights.sum(), 6), ")")
print("action mean:", action_mean.round(4))

print("\n== inverse attention: inferring a teammate's weights ==")
iw = IWNet(seed=7)
gs1 = build_goalset(observe(world, 1), nets, roles_by_id=codec.roles_by_id)
inferred = iw_forward(iw, bundle, gs1)
true_w, _, _ = selfatt_forward(make_bundle("self_att", spec, 1, nets, seed=6), gs1)
print("inferred (untrained IW):", inferred.round(3))
print("teammate's actual:      ", true_w.round(3))
print("(phase 2 trains IW to close this gap; see demo 04)")

print("\n== identity-initialized weight update ==")
inverse = upgrade_to_inverse(bundle, iw)
w_tilde, action_inv = inverse_forward(inverse, gs0, [gs1])
print("fresh UW leaves weights unchanged:", np.allclose(w_tilde, weights, atol=1e-12))
print("and the action identical:         ", np.allclose(action_inv, action_mean, atol=1e-12))
