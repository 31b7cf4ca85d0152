"""Training loops: uniform-walk exploration (alg1) and reversed-score
exploration (alg3), with CSV metrics and periodic checkpoints."""

from __future__ import annotations

import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .diffusion import sample_trajectories
from .errors import NumericError, UsageError
from .graphs import CayleyGraph, build_graph
from .model import (
    AdamState,
    ScoreModel,
    init_model,
    loss_and_grad,
    loss_only,
    optimizer_step,
    save_checkpoint,
)

_FAMILY_DEFAULT_T = {"cube2": 20}


@dataclass
class TrainConfig:
    """Everything a training run needs; every field is a config-file key."""

    graph: str = "sl2p"
    p: int | None = None
    generator_file: str | None = None
    goal_file: str | None = None
    T: int | None = None
    algorithm: str = "alg1"
    batch_size: int = 100
    total_trajectories: int = 100_000
    lr: float = 1e-3
    lr_final: float | None = None      # cosine-decay target; None = constant
    scramble_nmax: int = 1
    seed: int = 0
    hidden_dim: int = 256
    n_blocks: int = 4
    time_embed_dim: int = 16
    checkpoint_every: int = 0          # optimizer steps between checkpoints; 0 = final only
    out_dir: str = "runs/latest"

    def __post_init__(self):
        if self.algorithm not in ("alg1", "alg3"):
            raise UsageError(f"algorithm must be alg1 or alg3, not {self.algorithm!r}")
        if self.T is None:
            self.T = _FAMILY_DEFAULT_T.get(self.graph)
        if self.T is None:
            raise UsageError(f"T (horizon) is required for family {self.graph!r}")
        if self.T < 1 or self.batch_size < 1:
            raise UsageError("T and batch_size must be >= 1")
        if self.total_trajectories < 1:
            raise UsageError("total_trajectories must be >= 1")

    def build_graph(self) -> CayleyGraph:
        return build_graph(self.graph, p=self.p, generator_file=self.generator_file,
                           goal_file=self.goal_file)


_CONFIG_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def _coerce(key: str, value: str):
    if key in ("p", "T", "batch_size", "total_trajectories", "scramble_nmax",
               "seed", "hidden_dim", "n_blocks", "time_embed_dim",
               "checkpoint_every"):
        return int(value)
    if key in ("lr", "lr_final"):
        return float(value)
    return value


def parse_config_file(path) -> dict:
    """key=value lines; '#' starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in _CONFIG_TYPES:
                raise UsageError(
                    f"{path}:{lineno}: unknown config key {key!r}; valid keys: "
                    + ", ".join(sorted(_CONFIG_TYPES)))
            out[key] = _coerce(key, value)
    return out


def make_config(file_path=None, **overrides) -> TrainConfig:
    """Config file values first, CLI/keyword overrides on top."""
    values = parse_config_file(file_path) if file_path else {}
    for key, val in overrides.items():
        if val is None:
            continue
        if key not in _CONFIG_TYPES:
            raise UsageError(f"unknown config key {key!r}; valid keys: "
                             + ", ".join(sorted(_CONFIG_TYPES)))
        values[key] = val
    return TrainConfig(**values)


@dataclass
class MetricsRow:
    step: int
    trajectories: int
    loss: float
    seconds: float

    def csv(self) -> str:
        return f"{self.step},{self.trajectories},{self.loss!r},{self.seconds:.3f}"


def _lr_at(config: TrainConfig, step: int, total_steps: int) -> float:
    if config.lr_final is None or total_steps <= 1:
        return config.lr
    frac = step / (total_steps - 1)
    return config.lr_final + 0.5 * (config.lr - config.lr_final) * (1 + np.cos(np.pi * frac))


def train(config: TrainConfig, graph: CayleyGraph | None = None,
          log_every: int = 50, progress=None):
    """Run the configured training loop.

    Returns (model, metrics) where metrics is the list of MetricsRow written
    to metrics.csv. Checkpoints go to out_dir; on a numeric failure the last
    good checkpoint is left in place and NumericError propagates.
    """
    graph = graph if graph is not None else config.build_graph()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = init_model(graph.feature_dim, graph.n_generators, config.hidden_dim,
                       config.n_blocks, config.time_embed_dim, seed=config.seed)
    opt = AdamState(model)
    rng = np.random.default_rng(config.seed)
    total_steps = -(-config.total_trajectories // config.batch_size)
    metrics: list[MetricsRow] = []
    ckpt_path = out_dir / "model.ckpt"
    t_start = time.perf_counter()
    seen = 0
    for step in range(total_steps):
        use_uniform = config.algorithm == "alg1" or step == 0
        batch = sample_trajectories(
            graph, config.T, config.batch_size,
            "uniform" if use_uniform else "reversed-score",
            rng, model=None if use_uniform else model,
            n_max=config.scramble_nmax)
        try:
            loss, grads = loss_and_grad(model, batch, graph)
        except NumericError:
            raise  # last good checkpoint (if any) stays on disk
        optimizer_step(model, grads, opt, _lr_at(config, step, total_steps))
        seen += config.batch_size
        if step % log_every == 0 or step == total_steps - 1:
            metrics.append(MetricsRow(step, seen, loss,
                                      time.perf_counter() - t_start))
            if progress is not None:
                progress(metrics[-1])
        if config.checkpoint_every and (step + 1) % config.checkpoint_every == 0:
            save_checkpoint(model, ckpt_path, opt)
    save_checkpoint(model, ckpt_path, opt)
    with open(out_dir / "metrics.csv", "w") as fh:
        fh.write("step,trajectories,loss,seconds\n")
        for row in metrics:
            fh.write(row.csv() + "\n")
    return model, metrics


def evaluate_loss(model: ScoreModel, graph: CayleyGraph, T: int, n_eval: int,
                  seed: int, n_max: int = 0) -> float:
    """Held-out loss on freshly sampled uniform-process trajectories."""
    if n_eval < 1:
        raise UsageError("n_eval must be >= 1")
    rng = np.random.default_rng(seed)
    batch = sample_trajectories(graph, T, n_eval, "uniform", rng, n_max=n_max)
    return loss_only(model, batch, graph)
