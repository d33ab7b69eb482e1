"""Timing of one spatial block, forward plus backward: GCO against dense node attention."""
from __future__ import annotations

import time

import numpy as np

from .autodiff import Tensor
from .model import DeepPA, ModelConfig, dense_msa, dense_msa_params

NODE_COUNTS = (256, 512, 1024, 1687)


def _time(fn, repeats: int) -> float:
    fn()  # warm caches (DCT basis, allocator)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_slblock(variant: str, n_nodes: int, hidden: int = 64, slices: int = 2, n_heads: int = 4,
                  repeats: int = 2, seed: int = 0) -> float:
    """Best-of-``repeats`` seconds for forward and backward over ``slices`` (batch x time) graphs."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((slices, n_nodes, hidden))
    if variant == "gco":
        cfg = ModelConfig(n_lots=n_nodes, hidden=hidden, n_heads=n_heads, use_temporal_node=False)
        model = DeepPA(cfg, seed=seed)
        params = list(model.params.values())

        def step():
            H = Tensor(x, requires_grad=True)
            model.slblock(H, 0).sum().backward()
    elif variant == "msa":
        mp = dense_msa_params(hidden, seed)
        params = list(mp.values())

        def step():
            H = Tensor(x, requires_grad=True)
            dense_msa(H, mp, n_heads).sum().backward()
    else:
        raise ValueError(f"unknown bench variant {variant!r} (expected 'gco' or 'msa')")

    def run():
        for p in params:
            p.grad = None
        step()

    return _time(run, repeats)


def run_bench(variants=("gco", "msa"), node_counts=NODE_COUNTS, **kw) -> list[dict]:
    rows = []
    for n in node_counts:
        for v in variants:
            rows.append({"variant": v, "nodes": n, "seconds": bench_slblock(v, n, **kw)})
    return rows
