"""Command-line interface.

Subcommands: train-gf, train, train-iw, eval (tournament|rank-acc|sweep|
partial-obs), play, replay. Every run echoes its effective configuration
and writes line-delimited metrics next to its outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import evaluation as ev
from . import gradfield as gf
from . import training as tr
from .agents import make_bundle
from .engine import Role, ScenarioSpec
from .errors import ConfigurationError
from .io import (
    MetricsLogger,
    PlaySession,
    RunConfig,
    config_to_dict,
    create_app,
    load_iw,
    load_policy_bundle,
    parse_config,
    save_checkpoint,
)

VARIANT_ALIASES = {
    "mappo": ("mlp_baseline", True),
    "ippo": ("mlp_baseline", False),
    "self-att": ("self_att", True),
    "inverse-att": ("inverse_att", True),
}


def _load_config(path) -> RunConfig:
    return parse_config(path) if path else RunConfig()


def _spec_from_args(cfg: RunConfig, args) -> ScenarioSpec:
    sc = cfg.scenario
    if getattr(args, "scenario", None):
        sc.kind = args.scenario
    if getattr(args, "n", None):
        sc.n_per_side = args.n
    if getattr(args, "visibility_radius", None):
        sc.visibility_radius = args.visibility_radius
    return sc.to_spec()


def _schedule(cfg: RunConfig) -> gf.NoiseSchedule:
    g = cfg.gradfield
    return gf.NoiseSchedule(sigma0=g.sigma0, t_max=g.t_max, epsilon=g.epsilon)


def _train_gf_nets(cfg: RunConfig, seed: int) -> dict[str, gf.ScoreNet]:
    g = cfg.gradfield
    sched = _schedule(cfg)
    gcfg = gf.GFTrainConfig(
        lr=g.lr, betas=g.betas, batch_size=g.batch_size, epochs=g.epochs, hidden=g.hidden
    )
    return {
        "entity": gf.train_score_net(
            gf.gen_entity_dataset(g.n_samples, seed), sched, gcfg, seed=seed
        ),
        "boundary": gf.train_score_net(
            gf.gen_boundary_dataset(g.n_samples, seed + 1), sched, gcfg, seed=seed + 1
        ),
    }


def _gf_nets(cfg: RunConfig, args, seed: int) -> dict[str, gf.ScoreNet]:
    from .io import load_score_net

    if getattr(args, "gf_entity", None) and getattr(args, "gf_boundary", None):
        return {
            "entity": load_score_net(args.gf_entity),
            "boundary": load_score_net(args.gf_boundary),
        }
    return _train_gf_nets(cfg, seed)


def _save_pairs(dataset: tr.PairDataset, path):
    arrays = dataset.to_arrays()
    np.savez(
        path,
        order=dataset.order_ids(),
        total_collected=np.array(dataset.total_collected),
        **arrays,
    )


def _load_pairs(path) -> tr.PairDataset:
    z = np.load(path)
    d = tr.PairDataset()
    for i in range(len(z["order"])):
        d.entries.append(
            (int(z["order"][i]), z["w"][i], z["query"][i], z["goals"][i], z["mask"][i])
        )
    d.total_collected = int(z["total_collected"])
    return d


def cmd_train_gf(args) -> int:
    cfg = _load_config(args.config)
    print(json.dumps({"effective_config": config_to_dict(cfg)["gradfield"]}))
    g = cfg.gradfield
    seed = args.seed if args.seed is not None else g.seed
    sched = _schedule(cfg)
    gcfg = gf.GFTrainConfig(
        lr=g.lr, betas=g.betas, batch_size=g.batch_size, epochs=g.epochs, hidden=g.hidden
    )
    if args.kind == "entity":
        dataset = gf.gen_entity_dataset(g.n_samples, seed)
    else:
        dataset = gf.gen_boundary_dataset(g.n_samples, seed)
    net = gf.train_score_net(dataset, sched, gcfg, seed=seed)
    save_checkpoint(net, args.out)
    print(
        f"trained {args.kind} gradient field: first-epoch loss "
        f"{net.train_history[0]:.4f}, final {net.train_history[-1]:.4f} -> {args.out}"
    )
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    variant, centralized = VARIANT_ALIASES[args.variant]
    spec = _spec_from_args(cfg, args)
    tc = cfg.train
    seed = args.seed if args.seed is not None else tc.seed
    if args.steps:
        tc.phase1_steps = args.steps
        tc.phase3_steps = args.steps
    os.makedirs(args.out, exist_ok=True)
    print(json.dumps({"effective_config": config_to_dict(cfg)}))
    metrics = MetricsLogger(os.path.join(args.out, "metrics.jsonl"), echo=args.verbose)

    def periodic_checkpoint(bundle, steps):
        path = os.path.join(
            args.out, f"{args.variant}_agent{bundle.agent_id}_step{steps}.iatt"
        )
        save_checkpoint(bundle, path)
        metrics.log({"event": "checkpoint", "steps": steps, "path": path})

    try:
        if variant == "inverse_att":
            if not args.from_ckpts or not args.iw:
                raise ConfigurationError(
                    "inverse-att training needs --from <self-att ckpts> and --iw <ckpts>"
                )
            bundles = [load_policy_bundle(p) for p in args.from_ckpts]
            iws = [load_iw(p) for p in args.iw]
            if len(iws) == 1:
                iws = iws * len(bundles)
            iw_by_agent = {b.agent_id: iw for b, iw in zip(bundles, iws)}
            result = tr.phase3(
                bundles,
                iw_by_agent,
                spec,
                tc,
                seed=seed,
                log_fn=metrics.log,
                checkpoint_fn=periodic_checkpoint,
            )
            for b in result.bundles:
                path = os.path.join(args.out, f"inverse_att_agent{b.agent_id}.iatt")
                save_checkpoint(b, path)
                print(f"saved {path}")
        else:
            nets = _gf_nets(cfg, args, seed)
            if variant == "self_att":
                result, trimmed = tr.phase1(
                    spec,
                    tc,
                    nets,
                    seed=seed,
                    log_fn=metrics.log,
                    checkpoint_fn=periodic_checkpoint,
                )
                for b, pairs in zip(result.bundles, trimmed):
                    ppath = os.path.join(args.out, f"pairs_agent{b.agent_id}.npz")
                    _save_pairs(pairs, ppath)
                    print(f"saved trimmed pair dataset ({len(pairs)} entries) {ppath}")
            else:
                from .agents import ScenarioCodec

                bundles = [
                    make_bundle(
                        variant,
                        spec,
                        agent_id,
                        nets,
                        seed=seed + 100 + agent_id,
                        hidden=tc.hidden,
                        centralized=centralized,
                        gain=tc.gain,
                        log_std_init=tc.log_std_init,
                    )
                    for agent_id in ScenarioCodec(spec).agent_ids
                ]
                result = tr.train_marl(
                    spec,
                    tc,
                    bundles,
                    tc.phase1_steps,
                    seed,
                    log_fn=metrics.log,
                    checkpoint_fn=periodic_checkpoint,
                )
            for b in result.bundles:
                path = os.path.join(args.out, f"{args.variant}_agent{b.agent_id}.iatt")
                save_checkpoint(b, path)
                print(f"saved {path}")
            if result.warning:
                print(f"warning: {result.warning}", file=sys.stderr)
    finally:
        metrics.close()
    return 0


def cmd_train_iw(args) -> int:
    cfg = _load_config(args.config)
    print(json.dumps({"effective_config": config_to_dict(cfg)["iw"]}))
    dataset = _load_pairs(args.pairs)
    iw, report = tr.phase2(dataset, cfg.iw, seed=args.seed or 0)
    save_checkpoint(iw, args.out)
    print(
        f"inverse network: {report.epochs_run} epochs, val {report.best_val_loss:.6f}, "
        f"test {report.test_loss:.6f} (uniform baseline {report.uniform_baseline_loss:.6f})"
    )
    print(f"per-rank accuracy: {np.round(report.rank_accuracy, 4).tolist()}")
    print(f"saved {args.out}")
    return 0


def _parse_pool(specs: list[str]) -> ev.AgentPool:
    entries = []
    for item in specs:
        if "=" not in item:
            raise ConfigurationError(f"pool entry {item!r} must look like method=path")
        method, path = item.split("=", 1)
        bundle = load_policy_bundle(path)
        entries.append(
            ev.PoolEntry(
                method=method,
                role=bundle.role,
                seed_id=len(entries),
                bundle=bundle,
                ref=path,
            )
        )
    return ev.AgentPool(entries)


def cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    if args.mode == "rank-acc":
        iw = load_iw(args.iw)
        dataset = _load_pairs(args.pairs)
        arrays = dataset.to_arrays()
        from .agents import iw_forward_np

        pred = iw_forward_np(
            iw, {"query": arrays["query"], "goals": arrays["goals"], "mask": arrays["mask"]}
        )
        acc = ev.rank_accuracy(pred, arrays["w"])
        print(json.dumps({"rank_accuracy": acc.tolist(), "samples": len(pred)}))
        return 0
    episodes = args.episodes or cfg.eval.episodes
    steps = args.steps or cfg.eval.steps
    seed = args.seed if args.seed is not None else cfg.eval.seed
    if args.mode == "sweep":
        base = [load_policy_bundle(p) for p in args.base.split(",")]
        repl = [load_policy_bundle(p) for p in args.replacement.split(",")]
        scale = args.scale or base[0].spec.n_per_side
        report = ev.multi_inverse_sweep(
            {scale: {"mappo": base, "inverse_att": repl}},
            episodes=episodes,
            steps=steps,
            seed=seed,
            kind=base[0].spec.kind,
        )
        print(report.table())
        for s, note in report.trend_notes.items():
            print(f"scale {s}: {note}")
        if args.out:
            with open(args.out, "w") as f:
                for c in report.cells:
                    f.write(json.dumps(c.__dict__) + "\n")
        return 0
    pool = _parse_pool(args.pool)
    spec = _spec_from_args(cfg, args)
    if args.mode == "tournament":
        report = ev.run_tournament(pool, spec, episodes, steps, seed)
        print(report.table())
        if args.out:
            _write_report(args.out, report)
        return 0
    if args.mode == "partial-obs":
        radii = tuple(float(r) for r in args.radii.split(","))
        reports = ev.partial_obs_eval(pool, spec, radii, episodes, steps, seed)
        for radius, report in reports.items():
            print(f"-- visibility radius {radius} "
                  f"(mean visible entities {report.mean_visible_entities:.2f})")
            print(report.table())
            if args.out:
                _write_report(f"{args.out}.r{radius}", report)
        return 0
    raise ConfigurationError(f"unknown eval mode {args.mode!r}")


def _write_report(path, report: ev.MatchReport):
    with open(path, "w") as f:
        f.write(json.dumps({"summary": report.per_method_role}) + "\n")
        for ep in report.composition_log:
            f.write(json.dumps(ep) + "\n")


def cmd_play(args) -> int:
    import uvicorn

    cfg = _load_config(args.config)
    spec = _spec_from_args(cfg, args)
    play = cfg.play
    episodes = args.episodes or play.episodes
    steps = args.steps or play.steps
    tick_hz = args.tick_hz or play.tick_hz
    seed = args.seed if args.seed is not None else play.seed
    paths = list(args.teammates or []) + list(args.opponents or [])
    bundles = [load_policy_bundle(p) for p in paths]
    role_of = {int(r): r.name.lower() for r in Role}

    def ordered_for_session():
        # slots are filled by role; sort provided bundles to match slot order
        from .agents import ScenarioCodec

        codec = ScenarioCodec(spec)
        human_role = args.human_role
        slot_roles = [codec.roles[sid] for sid in codec.agent_ids]
        remaining = list(zip(bundles, paths))
        ordered, refs = [], []
        human_taken = False
        for role in slot_roles:
            if role_of[role] == human_role and not human_taken:
                human_taken = True
                continue
            match = next(
                (i for i, (b, _) in enumerate(remaining) if b.role == role), None
            )
            if match is None:
                raise ConfigurationError(
                    f"no checkpoint provided for a {role_of[role]} slot"
                )
            b, p = remaining.pop(match)
            ordered.append(b)
            refs.append(p)
        return ordered, refs

    ordered, refs = ordered_for_session()

    def factory(role):
        if role != args.human_role:
            raise ConfigurationError(
                f"session is configured for role {args.human_role!r}"
            )
        return PlaySession(
            spec,
            args.human_role,
            list(ordered),
            seed=seed,
            episodes=episodes,
            steps=steps,
            bundle_refs=list(refs),
        )

    app = create_app(factory, tick_hz=tick_hz, log_path=args.log)
    print(f"serving ws://127.0.0.1:{args.port or play.port}/session")
    uvicorn.run(app, host="127.0.0.1", port=args.port or play.port, log_level="warning")
    return 0


def cmd_replay(args) -> int:
    from .io import replay_session_file

    result = replay_session_file(args.log)
    print(json.dumps({"match": result["match"], "episodes": len(result["episodes"])}))
    return 0 if result["match"] else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="iatt", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("train-gf", help="train a gradient-field score network")
    c.add_argument("--kind", choices=("entity", "boundary"), required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--config")
    c.add_argument("--seed", type=int)
    c.set_defaults(func=cmd_train_gf)

    c = sub.add_parser("train", help="train agents")
    c.add_argument("--variant", choices=sorted(VARIANT_ALIASES), required=True)
    c.add_argument("--scenario", choices=("spread", "adversary", "grassland", "navigation", "tag"))
    c.add_argument("--n", type=int)
    c.add_argument("--steps", type=int, help="override the phase step budget")
    c.add_argument("--out", required=True)
    c.add_argument("--config")
    c.add_argument("--seed", type=int)
    c.add_argument("--gf-entity")
    c.add_argument("--gf-boundary")
    c.add_argument("--from", dest="from_ckpts", nargs="+", help="self-att checkpoints (inverse-att)")
    c.add_argument("--iw", nargs="+", help="inverse-network checkpoints (inverse-att)")
    c.add_argument("--verbose", action="store_true")
    c.set_defaults(func=cmd_train)

    c = sub.add_parser("train-iw", help="train the inverse attention network offline")
    c.add_argument("--pairs", required=True, help="pair dataset .npz from phase 1")
    c.add_argument("--out", required=True)
    c.add_argument("--config")
    c.add_argument("--seed", type=int)
    c.set_defaults(func=cmd_train_iw)

    c = sub.add_parser("eval", help="evaluation harnesses")
    c.add_argument("mode", choices=("tournament", "rank-acc", "sweep", "partial-obs"))
    c.add_argument("--pool", nargs="+", help="method=checkpoint entries")
    c.add_argument("--scenario", choices=("spread", "adversary", "grassland", "navigation", "tag"))
    c.add_argument("--n", type=int)
    c.add_argument("--episodes", type=int)
    c.add_argument("--steps", type=int)
    c.add_argument("--seed", type=int)
    c.add_argument("--config")
    c.add_argument("--out")
    c.add_argument("--iw", help="inverse-network checkpoint (rank-acc)")
    c.add_argument("--pairs", help="pair dataset .npz (rank-acc)")
    c.add_argument("--base", help="comma-separated baseline checkpoints (sweep)")
    c.add_argument("--replacement", help="comma-separated inverse checkpoints (sweep)")
    c.add_argument("--scale", type=int, help="scenario scale (sweep)")
    c.add_argument("--radii", default="1.5,1.0,0.5", help="visibility radii (partial-obs)")
    c.add_argument("--visibility-radius", type=float)
    c.set_defaults(func=cmd_eval)

    c = sub.add_parser("play", help="serve a live human-play session")
    c.add_argument("--scenario", choices=("spread", "adversary", "grassland", "navigation", "tag"))
    c.add_argument("--n", type=int)
    c.add_argument("--human-role", required=True, choices=("agent", "sheep", "wolf"))
    c.add_argument("--teammates", nargs="*", help="same-role agent checkpoints")
    c.add_argument("--opponents", nargs="*", help="other-role agent checkpoints")
    c.add_argument("--port", type=int)
    c.add_argument("--episodes", type=int)
    c.add_argument("--steps", type=int)
    c.add_argument("--tick-hz", type=float, dest="tick_hz")
    c.add_argument("--seed", type=int)
    c.add_argument("--log", help="write the session log here")
    c.add_argument("--config")
    c.set_defaults(func=cmd_play)

    c = sub.add_parser("replay", help="verify a session log reproduces its rewards")
    c.add_argument("--log", required=True)
    c.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
