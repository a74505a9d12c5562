"""The full three-phase pipeline at demo scale.

Phase 1: MAPPO on the self-attention policy while logging (weights,
observation) pairs, trimmed to the newest tenth. Phase 2: offline inverse
network fit with early stopping. Phase 3: the composed inverse-attention
policy warm-started at exact behavioral equivalence.

Run: python3 demos/04_three_phase_pipeline.py   (~2-3 min)
"""

import numpy as np

from iatt.engine import ScenarioSpec
from iatt.gradfield import GFTrainConfig, NoiseSchedule, gen_boundary_dataset, gen_entity_dataset, train_score_net
from iatt.training import IWTrainConfig, TrainConfig, run_algorithm1

sched = NoiseSchedule()
gcfg = GFTrainConfig(epochs=30, batch_size=256)
nets = {
    "entity": train_score_net(gen_entity_dataset(6000, 0), sched, gcfg, seed=1),
    "boundary": train_score_net(gen_boundary_dataset(6000, 2), sched, gcfg, seed=3),
}
print("gradient fields trained")

spec = ScenarioSpec(kind="spread", n_per_side=2, horizon=200)
config = TrainConfig(
    n_envs=8,
    rollout_steps=256,
    phase1_steps=60_000,   # demo scale; full runs use tens of millions
    phase3_steps=20_000,
    seed=0,
)
out = run_algorithm1(spec, config, nets, IWTrainConfig(max_epochs=300), seed=0)

p1 = out["phase1"]
print(f"\nphase 1: {p1.steps_collected} steps, converged={p1.converged}")
for agent_id, hist in p1.reward_history.items():
    print(f"  agent {agent_id}: mean scoring reward {hist[0]:.3f} -> {hist[-1]:.3f}")
print(f"  trimmed pair datasets: {[len(d) for d in out['pair_datasets']]} entries")

print("\nphase 2 (offline inverse-network training):")
for agent_id, rep in out["phase2_reports"].items():
    print(
        f"  agent {agent_id}: {rep.epochs_run} epochs, test MSE {rep.test_loss:.5f} "
        f"(uniform baseline {rep.uniform_baseline_loss:.5f}), "
        f"rank accuracy {np.round(rep.rank_accuracy, 3).tolist()}"
    )

p3 = out["phase3"]
print(f"\nphase 3: {p3.steps_collected} steps on the composed policy")
for agent_id, hist in p3.reward_history.items():
    print(f"  agent {agent_id}: mean scoring reward {hist[0]:.3f} -> {hist[-1]:.3f}")
