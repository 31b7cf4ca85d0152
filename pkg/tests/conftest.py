"""Shared fixtures. The desk-scale sl2p(31) benchmark model is session-scoped
because two acceptance criteria share it; set CAYLEYDIFF_TEST_CACHE to a
directory to reuse it across local runs while iterating."""

from __future__ import annotations

import os
import time
from pathlib import Path

import pytest

from cayleydiff.graphs import sl2p_graph
from cayleydiff.model import load_checkpoint, save_checkpoint
from cayleydiff.oracle import bfs_distances
from cayleydiff.training import TrainConfig, train

SL2P31_CONFIG = dict(
    graph="sl2p", p=31, T=30, algorithm="alg3", batch_size=100,
    total_trajectories=1_000_000, lr=1e-3, lr_final=1e-4, scramble_nmax=1,
    seed=3, hidden_dim=128, n_blocks=2, time_embed_dim=16)


def _cache_dir() -> Path | None:
    val = os.environ.get("CAYLEYDIFF_TEST_CACHE")
    if not val:
        return None
    path = Path(val)
    path.mkdir(parents=True, exist_ok=True)
    return path


@pytest.fixture(scope="session")
def sl2p31():
    return sl2p_graph(31)


@pytest.fixture(scope="session")
def sl2p31_distances(sl2p31):
    return bfs_distances(sl2p31)


@pytest.fixture(scope="session")
def sl2p31_model(sl2p31, tmp_path_factory):
    """The desk-scale benchmark model (alg3, T=30, 1e6 trajectories), plus
    the training wall time in seconds (None when loaded from the cache)."""
    cache = _cache_dir()
    if cache is not None:
        path = cache / "sl2p31_alg3.ckpt"
        if path.exists():
            return load_checkpoint(path), None
    out_dir = tmp_path_factory.mktemp("sl2p31_run")
    config = TrainConfig(out_dir=str(out_dir), **SL2P31_CONFIG)
    t0 = time.perf_counter()
    model, _ = train(config, graph=sl2p31)
    seconds = time.perf_counter() - t0
    if cache is not None:
        save_checkpoint(model, cache / "sl2p31_alg3.ckpt")
    return model, seconds
