"""Shared test helpers: finite-difference gradient checks and tiny fixtures."""

from __future__ import annotations

import numpy as np

from iatt import tensor as T


def finite_diff_check(
    loss_fn,
    store: T.ParamStore,
    names: list[str] | None = None,
    n_samples: int = 50,
    h: float = 1e-5,
    rng: np.random.Generator | None = None,
) -> float:
    """Central finite differences on randomly sampled parameter entries.

    `loss_fn()` must rebuild the forward graph from the store's current
    values and return a scalar Tensor. Returns the worst relative error
    |fd - grad| / max(|fd|, |grad|, 1e-6).
    """
    rng = rng or np.random.default_rng(0)
    store.zero_grad()
    loss = loss_fn()
    loss.backward()
    grads = {n: (store[n].grad.copy() if store[n].grad is not None else
                 np.zeros_like(store[n].data)) for n in store.names()}
    candidates = names if names is not None else store.names()
    flat = []
    for n in candidates:
        for idx in range(store[n].data.size):
            flat.append((n, idx))
    picks = rng.choice(len(flat), size=min(n_samples, len(flat)), replace=False)
    worst = 0.0
    for p in picks:
        name, idx = flat[p]
        data = store[name].data
        orig = data.flat[idx]
        data.flat[idx] = orig + h
        with T.no_grad():
            up = loss_fn().item()
        data.flat[idx] = orig - h
        with T.no_grad():
            down = loss_fn().item()
        data.flat[idx] = orig
        fd = (up - down) / (2 * h)
        g = grads[name].flat[idx]
        err = abs(fd - g) / max(abs(fd), abs(g), 1e-6)
        worst = max(worst, err)
    return worst


def tiny_nets(seed: int = 0, epochs: int = 2, n: int = 200):
    """Fast, barely trained gradient fields; enough for structural tests."""
    from iatt import gradfield as gf

    sched = gf.NoiseSchedule()
    cfg = gf.GFTrainConfig(epochs=epochs)
    return {
        "entity": gf.train_score_net(gf.gen_entity_dataset(n, seed), sched, cfg, seed),
        "boundary": gf.train_score_net(
            gf.gen_boundary_dataset(n, seed + 1), sched, cfg, seed + 1
        ),
    }
