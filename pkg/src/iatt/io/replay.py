"""Re-simulate logged human-play sessions and verify reward bookkeeping."""

from __future__ import annotations

import json

from ..agents import PolicyBundle
from ..engine import ScenarioSpec
from ..errors import ConfigurationError
from .server import PlaySession


def replay_session(log: dict, bundles: list[PolicyBundle]) -> dict:
    """Replay logged key sequences with the logged seeds and compare rewards.

    Returns {"match": bool, "episodes": [{"logged", "replayed", "match"}]}.
    Rewards must reproduce exactly: the simulation is deterministic in
    (seed, key sequence) and the agents act deterministically.
    """
    spec = ScenarioSpec.from_dict(log["scenario"])
    session = PlaySession(
        spec,
        log["human_role"],
        bundles,
        seed=log["seed"],
        episodes=log["episodes_planned"],
        steps=log["steps"],
    )
    results = []
    all_match = True
    for ep_log in log["episodes"]:
        session.start_episode()
        for key in ep_log["keys"]:
            session.tick_once(key)
        while not session.episode_done():
            session.tick_once("none")
        session.finish_episode()
        replayed = session.result.episodes[-1]["rewards"]
        match = all(
            replayed[k] == v for k, v in ep_log["rewards"].items()
        ) and set(replayed) == set(ep_log["rewards"])
        all_match &= match
        results.append(
            {"logged": ep_log["rewards"], "replayed": replayed, "match": match}
        )
    return {"match": bool(all_match), "episodes": results}


def replay_session_file(log_path, bundle_loader=None) -> dict:
    """Load a session log and its referenced checkpoints, then replay it."""
    with open(log_path) as f:
        log = json.load(f)
    if bundle_loader is None:
        from .checkpoint import load_policy_bundle

        bundle_loader = load_policy_bundle
    refs = [r for r in log["bundle_refs"] if r != "<memory>"]
    if len(refs) != len(log["bundle_refs"]):
        raise ConfigurationError(
            "session log references in-memory bundles; pass them explicitly"
        )
    bundles = [bundle_loader(r) for r in refs]
    return replay_session(log, bundles)
