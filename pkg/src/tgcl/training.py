"""Epoch loop: sample timespan views, embed the shared-node minibatch,
minimize the contrastive objective with Adam.

All randomness derives from TrainConfig.seed: window sampling uses the
stream (seed, epoch) inside the sampler and minibatch selection uses
(seed, epoch, 101), so two runs with the same config and inputs produce
bit-identical loss sequences and checkpoints in 64-bit mode.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NumericError
from .graph import TemporalGraph, full_view, slice_interval
from .kernels import AdamState, adam_step
from .losses import LossConfig, multi_view_loss
from .model import (
    ModelParams,
    READOUT_STATS,
    embed_views,
    embed_views_backward,
    encode,
    init_params,
    normalize_adjacency,
    save_params,
)
from .sampling import SamplerConfig, sample_windows


@dataclass(frozen=True)
class TrainConfig:
    sampler: SamplerConfig = SamplerConfig()
    loss: LossConfig = LossConfig()
    d_in: int | None = None  # None: take the graph's feature dim
    d_hidden: int = 128
    d_out: int = 64
    lr: float = 4e-3
    weight_decay: float = 5e-4
    batch_size: int = 256
    epochs: int = 100
    seed: int = 0
    readout_stat: str = "mean"
    checkpoint_path: str | None = None
    checkpoint_every: int = 0  # 0: only after the final epoch
    batches_per_epoch: int = 1
    # audit metadata for the checkpoint; lets `embed` rebuild synthesized features
    feature_policy: str = "degree-buckets"
    feature_dim: int = 32
    feature_seed: int = 0

    def validate(self) -> "TrainConfig":
        self.sampler.validate()
        self.loss.validate()
        if not self.lr > 0:
            raise DataError(f"learning rate must be positive, got {self.lr}")
        if self.weight_decay < 0:
            raise DataError(f"weight decay must be non-negative, got {self.weight_decay}")
        if self.batch_size < 2:
            raise DataError(f"batch size must be at least 2 for contrast, got {self.batch_size}")
        if self.epochs < 1:
            raise DataError(f"epochs must be at least 1, got {self.epochs}")
        if self.batches_per_epoch < 1:
            raise DataError(f"batches_per_epoch must be at least 1, got {self.batches_per_epoch}")
        if self.readout_stat not in READOUT_STATS:
            raise DataError(
                f"unknown readout stat {self.readout_stat!r}; expected one of {READOUT_STATS}")
        return self


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    shared: int
    windows: tuple
    wall_time: float


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    def loss_values(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])

    def csv_lines(self):
        """Deterministic CSV serialization; wall time is deliberately
        excluded so identical runs produce identical bytes."""
        if not self.records:
            return ["epoch,loss,shared\n"]
        v = len(self.records[0].windows)
        cols = ["epoch", "loss", "shared"]
        for i in range(1, v + 1):
            cols += [f"lo{i}", f"hi{i}"]
        lines = [",".join(cols) + "\n"]
        for r in self.records:
            cells = [str(r.epoch), repr(float(r.loss)), str(r.shared)]
            for w in r.windows:
                cells += [repr(float(w.lo)), repr(float(w.hi))]
            lines.append(",".join(cells) + "\n")
        return lines


def shared_nodes(views) -> np.ndarray:
    """Intersection of the views' active node sets (internal ids, sorted)."""
    if len(views) < 2:
        raise ValueError(f"need at least 2 views, got {len(views)}")
    shared = views[0].active
    for view in views[1:]:
        shared = np.intersect1d(shared, view.active, assume_unique=True)
    return shared


def make_minibatch(shared: np.ndarray, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform without-replacement sample of up to batch_size shared nodes."""
    if shared.size == 0:
        raise DataError(
            "no shared nodes across sampled views; lower s or change the sampling strategy")
    if shared.size <= batch_size:
        return shared.copy()
    return rng.choice(shared, size=batch_size, replace=False)


def _window_desc(windows) -> str:
    return "; ".join(f"[{w.lo:.6g}, {w.hi:.6g}]" for w in windows)


def train(graph: TemporalGraph, cfg: TrainConfig):
    """Run the contrastive training loop. Returns (params, log).

    Per epoch: sample v windows, slice views, intersect active sets, draw
    the minibatch, embed every view with shared weights, take the
    configured InfoNCE objective, backpropagate, Adam step. A checkpoint
    is written to cfg.checkpoint_path after the final epoch (and every
    checkpoint_every epochs when set).
    """
    cfg.validate()
    d_in = cfg.d_in if cfg.d_in is not None else graph.feature_dim
    if d_in != graph.feature_dim:
        raise DataError(f"configured d_in {d_in} != graph feature dim {graph.feature_dim}")

    params = init_params(d_in, cfg.d_hidden, cfg.d_out, seed=cfg.seed)
    state = AdamState(lr=cfg.lr, weight_decay=cfg.weight_decay)
    sampler = dataclasses.replace(cfg.sampler, seed=cfg.seed)
    with_neigh = cfg.loss.level == "graph"
    log = TrainLog()

    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        windows = sample_windows(graph, sampler, epoch)
        views = [slice_interval(graph, w.lo, w.hi) for w in windows]
        shared = shared_nodes(views)
        batch_rng = np.random.default_rng([cfg.seed, epoch, 101])

        epoch_loss = 0.0
        for _ in range(cfg.batches_per_epoch):
            batch = make_minibatch(shared, cfg.batch_size, batch_rng)
            embs, caches = embed_views(
                views, batch, params, stat=cfg.readout_stat, with_neighborhood=with_neigh)
            loss, zgrads = multi_view_loss(embs, cfg.loss)
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite loss {loss} at epoch {epoch}; windows {_window_desc(windows)}")
            grads = embed_views_backward(zgrads, caches, params)
            adam_step(params.as_dict(), grads, state)
            epoch_loss += loss
        epoch_loss /= cfg.batches_per_epoch

        log.records.append(EpochRecord(
            epoch=epoch,
            loss=float(epoch_loss),
            shared=int(shared.size),
            windows=tuple(windows),
            wall_time=time.perf_counter() - t0,
        ))
        if cfg.checkpoint_path and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            save_params(cfg.checkpoint_path, params, meta=_checkpoint_meta(cfg, epoch))

    if cfg.checkpoint_path:
        save_params(cfg.checkpoint_path, params, meta=_checkpoint_meta(cfg, cfg.epochs))
    return params, log


def _checkpoint_meta(cfg: TrainConfig, epoch: int) -> dict:
    return {
        "epoch": epoch,
        "level": cfg.loss.level,
        "tau": cfg.loss.tau,
        "strategy": cfg.sampler.strategy,
        "s": cfg.sampler.s,
        "v": cfg.sampler.v,
        "seed": cfg.seed,
        "readout_stat": cfg.readout_stat,
        "feature_policy": cfg.feature_policy,
        "feature_dim": cfg.feature_dim,
        "feature_seed": cfg.feature_seed,
    }


def embed_all(graph: TemporalGraph, params: ModelParams, activation: str = "relu") -> np.ndarray:
    """Frozen-encoder representations for every node.

    Encodes the whole timespan as a single view and returns the
    pre-projection hidden matrix, one row per node in graph.node_ids
    order. Isolated nodes see only their self-loop.
    """
    view = full_view(graph)
    adj = normalize_adjacency(view)
    h, _ = encode(view, adj, params, activation=activation)
    return h
