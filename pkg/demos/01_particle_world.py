"""Tour of the particle world: scenarios, physics, rewards, observations.

Run: python3 demos/01_particle_world.py
"""

import numpy as np

from iatt.engine import Role, ScenarioSpec, make_world, observe, step, visible_set

rng = np.random.default_rng(0)

print("== five scenarios ==")
for kind in ("spread", "adversary", "grassland", "navigation", "tag"):
    n = 3 if kind in ("navigation", "tag") else 3
    world = make_world(ScenarioSpec(kind=kind, n_per_side=n), seed=7)
    roles = [Role(r).name.lower() for r in world.role]
    print(f"{kind:>11}: {len(world.role)} entities -> {roles}")

print("\n== deterministic physics ==")
spec = ScenarioSpec(kind="adversary", n_per_side=2, horizon=200)
world = make_world(spec, seed=42)
print("wolves are slower than sheep:",
      dict(zip(["sheep", "wolf"],
               [world.max_speed[world.ids_with_role(Role.SHEEP)][0],
                world.max_speed[world.ids_with_role(Role.WOLF)][0]])))
actions = rng.uniform(-1, 1, (4, 2))
for t in range(5):
    _, rewards, _ = step(world, actions)
print("positions stay inside the arena:", bool((np.abs(world.pos) <= 1).all()))

print("\n== training vs scoring rewards ==")
world = make_world(ScenarioSpec(kind="spread", n_per_side=2), seed=3)
world.pos[0] = world.pos[2].copy()  # drop agent 0 onto a landmark
from iatt.engine import reward

print("training mode (shaped, +100 occupancy):", reward(world, "training").round(3))
print("scoring mode (+5 point values):       ", reward(world, "scoring").round(3))

print("\n== observations ==")
obs = observe(world, 0)
print(f"agent 0 sees {len(obs.entity_rel_pos)} entities; "
      f"teammate prev actions: {len(obs.teammate_prev_actions)}")
print("visible ids within radius 0.8:", visible_set(world, 0, 0.8))
