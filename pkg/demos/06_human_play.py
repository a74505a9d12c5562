"""Headless run of the human-play protocol: a five-episode session driven
by scripted keys, then exact replay verification from the session log.

For live play against the browser client, use the CLI instead:

    iatt train --variant self-att --scenario spread --n 2 --steps 60000 --out run/
    iatt play --scenario spread --n 2 --human-role agent \
        --teammates run/self-att_agent1.iatt --port 8765 --log session.json

and open frontend/index.html (see frontend/README.md).

Run: python3 demos/06_human_play.py   (~15 s)
"""

from iatt.engine import ScenarioSpec
from iatt.gradfield import GFTrainConfig, NoiseSchedule, gen_boundary_dataset, gen_entity_dataset, train_score_net
from iatt.agents import make_bundle
from iatt.io import replay_session, serve_play_session

sched = NoiseSchedule()
gcfg = GFTrainConfig(epochs=8, batch_size=256)
nets = {
    "entity": train_score_net(gen_entity_dataset(2000, 0), sched, gcfg, seed=1),
    "boundary": train_score_net(gen_boundary_dataset(2000, 2), sched, gcfg, seed=3),
}

spec = ScenarioSpec(kind="spread", n_per_side=2, horizon=100)
teammate = make_bundle("self_att", spec, 1, nets, seed=4)

# a scripted "human": circle the arena for five 100-step episodes
keys = [
    ["up"] * 25 + ["right"] * 25 + ["down"] * 25 + ["left"] * 25
    for _ in range(5)
]
log = serve_play_session(spec, "agent", [teammate], keys, seed=7, episodes=5, steps=100)

print(f"episodes played: {len(log['episodes'])}")
for i, ep in enumerate(log["episodes"]):
    print(f"  episode {i}: rewards {ep['rewards']}")

result = replay_session(log, [teammate])
print(f"replay reproduces logged rewards exactly: {result['match']}")
