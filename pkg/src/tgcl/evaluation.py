"""Evaluation stack: stratified splits, a frozen-embedding linear probe,
classification metrics, the temporal invariance probe, and a synthetic
persistent-community graph generator used as the desk-scale fixture.

The invariance probe splits a graph into sequential timespans, trains an
independent supervised encoder per timespan, and reports how often the
per-timespan predictions agree on nodes shared across timespans. High
agreement on community-structured data is the empirical premise behind
treating timespan views as label-preserving augmentations.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .graph import SampledView, TemporalGraph, build_graph, to_snapshots
from .kernels import AdamState, adam_step
from .model import NormalizedAdjacency, encode, encode_backward, init_params, normalize_adjacency

PROBE_ENCODERS = ("gcn", "mlp")


@dataclass(frozen=True)
class SplitSpec:
    """Materialized train/val/test node lists (internal indices, sorted)."""

    ratios: tuple
    seed: int
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    @property
    def sizes(self) -> tuple:
        return (self.train.size, self.val.size, self.test.size)


def make_split(labels: np.ndarray, ratios: tuple = (1, 1, 8), seed: int = 0) -> SplitSpec:
    """Stratified random split of the labeled nodes at the given ratios.

    Per class the members are shuffled once and cut by rounded ratio
    counts, so per-class fractions track the global ratios. A class with
    fewer members than split parts goes wholly to train with a warning.
    """
    labels = np.asarray(labels)
    labeled = np.flatnonzero(labels >= 0)
    if labeled.size < 10:
        raise DataError(f"need at least 10 labeled nodes to split, got {labeled.size}")
    if len(ratios) != 3 or any(r < 0 for r in ratios) or sum(ratios) <= 0:
        raise DataError(f"ratios must be three non-negative numbers, got {ratios!r}")
    rng = np.random.default_rng([seed, 23])
    total = sum(ratios)
    tr, va, te = [], [], []
    for c in np.unique(labels[labeled]):
        members = rng.permutation(labeled[labels[labeled] == c])
        if members.size < 3:
            warnings.warn(f"class {c} has only {members.size} members; placed wholly in train")
            tr.append(members)
            continue
        n_tr = round(members.size * ratios[0] / total)
        n_va = round(members.size * ratios[1] / total)
        tr.append(members[:n_tr])
        va.append(members[n_tr:n_tr + n_va])
        te.append(members[n_tr + n_va:])

    def cat(parts):
        return np.sort(np.concatenate(parts)) if parts else np.empty(0, dtype=np.int64)

    return SplitSpec(ratios=tuple(ratios), seed=seed, train=cat(tr), val=cat(va), test=cat(te))


def softmax_cross_entropy(logits: np.ndarray, y: np.ndarray):
    """Mean cross-entropy of row-softmax(logits) against integer targets.

    Returns (loss, grad_logits); the gradient is exact (softmax minus
    one-hot, divided by the row count).
    """
    n = logits.shape[0]
    m = logits.max(axis=1, keepdims=True)
    ex = np.exp(logits - m)
    denom = ex.sum(axis=1)
    idx = np.arange(n)
    log_prob = logits[idx, y] - m[:, 0] - np.log(denom)
    loss = -log_prob.mean()
    grad = ex / denom[:, None]
    grad[idx, y] -= 1.0
    grad /= n
    return loss, grad


@dataclass(eq=False)
class LinearProbe:
    """Multinomial logistic classifier over frozen embeddings."""

    w: np.ndarray
    b: np.ndarray
    best_epoch: int

    @property
    def num_classes(self) -> int:
        return self.w.shape[1]

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(x @ self.w + self.b, axis=1)


def train_linear_probe(
    embeddings: np.ndarray,
    labels: np.ndarray,
    split: SplitSpec,
    lr: float = 1e-2,
    weight_decay: float = 1e-4,
    epochs: int = 200,
) -> LinearProbe:
    """Fit the linear probe with Adam on the train split only.

    Zero-initialized weights keep the fit deterministic without a seed;
    the validation split picks the best epoch (epoch 0 is the untrained
    classifier, so epochs=0 returns the chance-level predictor).
    """
    y_train = labels[split.train]
    if np.unique(y_train).size < 2:
        raise DataError("degenerate train split: a linear probe needs at least 2 classes")
    num_classes = int(labels[np.concatenate([split.train, split.val, split.test])].max()) + 1
    x_train = embeddings[split.train]
    x_val = embeddings[split.val]
    y_val = labels[split.val]

    w = np.zeros((embeddings.shape[1], num_classes))
    b = np.zeros(num_classes)
    params = {"w": w, "b": b}
    state = AdamState(lr=lr, weight_decay=weight_decay)

    def val_accuracy():
        if y_val.size == 0:
            return 0.0
        return float(np.mean(np.argmax(x_val @ w + b, axis=1) == y_val))

    best = (val_accuracy(), 0, w.copy(), b.copy())
    for epoch in range(1, epochs + 1):
        logits = x_train @ w + b
        _, g_logits = softmax_cross_entropy(logits, y_train)
        grads = {"w": x_train.T @ g_logits, "b": g_logits.sum(axis=0)}
        adam_step(params, grads, state)
        acc = val_accuracy()
        if acc > best[0]:
            best = (acc, epoch, w.copy(), b.copy())
    _, best_epoch, best_w, best_b = best
    return LinearProbe(w=best_w, b=best_b, best_epoch=best_epoch)


@dataclass(eq=False)
class EvalReport:
    """Test-split classification report."""

    accuracy: float
    weighted_f1: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    config: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "weighted_f1": self.weighted_f1,
            "per_class": [
                {
                    "label": int(c),
                    "precision": float(self.precision[c]),
                    "recall": float(self.recall[c]),
                    "f1": float(self.f1[c]),
                    "support": int(self.support[c]),
                }
                for c in range(self.support.shape[0])
            ],
            "config": self.config,
        }


def classification_report(y_true: np.ndarray, y_pred: np.ndarray, num_classes: int,
                          config: dict | None = None) -> EvalReport:
    """Accuracy plus per-class precision/recall/F1 and the support-weighted
    F1 mean. Undefined ratios (empty denominator) count as 0."""
    if y_true.size == 0:
        raise DataError("empty evaluation set")
    precision = np.zeros(num_classes)
    recall = np.zeros(num_classes)
    f1 = np.zeros(num_classes)
    support = np.zeros(num_classes, dtype=np.int64)
    for c in range(num_classes):
        tp = int(np.sum((y_pred == c) & (y_true == c)))
        fp = int(np.sum((y_pred == c) & (y_true != c)))
        fn = int(np.sum((y_pred != c) & (y_true == c)))
        support[c] = tp + fn
        precision[c] = tp / (tp + fp) if tp + fp else 0.0
        recall[c] = tp / (tp + fn) if tp + fn else 0.0
        f1[c] = (2 * precision[c] * recall[c] / (precision[c] + recall[c])
                 if precision[c] + recall[c] else 0.0)
    accuracy = float(np.mean(y_pred == y_true))
    weighted_f1 = float(np.sum(support * f1) / support.sum())
    return EvalReport(accuracy=accuracy, weighted_f1=weighted_f1, precision=precision,
                      recall=recall, f1=f1, support=support, config=dict(config or {}))


def evaluate(probe: LinearProbe, embeddings: np.ndarray, labels: np.ndarray,
             split: SplitSpec, config: dict | None = None) -> EvalReport:
    """Score the probe on the test split."""
    if split.test.size == 0:
        raise DataError("empty test split")
    y_true = labels[split.test]
    y_pred = probe.predict(embeddings[split.test])
    return classification_report(y_true, y_pred, probe.num_classes, config=config)


@dataclass(frozen=True)
class InvarianceConfig:
    """Protocol knobs for the per-timespan supervised probe."""

    epochs: int = 150
    lr: float = 1e-2
    weight_decay: float = 5e-4
    d_hidden: int = 128
    d_out: int = 64
    encoder: str = "gcn"
    ratios: tuple = (1, 1, 8)
    seed: int = 0

    def validate(self) -> "InvarianceConfig":
        if self.encoder not in PROBE_ENCODERS:
            raise DataError(f"unknown probe encoder {self.encoder!r}; expected one of {PROBE_ENCODERS}")
        if self.epochs < 1 or self.lr <= 0 or self.weight_decay < 0:
            raise DataError("probe epochs must be >= 1 and rates positive")
        return self


@dataclass(eq=False)
class InvarianceResult:
    """Pairwise prediction-agreement rates between timespan probes.

    ``matrix[i, j]`` is the fraction of shared evaluation nodes on which
    the probes of timespans i and j predict the same label; missing
    timespans (no edges or no trainable labels) hold NaN.
    """

    matrix: np.ndarray
    eval_nodes: np.ndarray
    missing: tuple

    def mean_agreement(self) -> float:
        s = self.matrix.shape[0]
        off = ~np.eye(s, dtype=bool)
        vals = self.matrix[off]
        vals = vals[np.isfinite(vals)]
        if vals.size == 0:
            return float("nan")
        return float(vals.mean())


def _snapshot_view(snap: TemporalGraph, full_features: np.ndarray) -> SampledView:
    active = np.unique(np.concatenate([snap.src, snap.dst])) if snap.num_edges else np.empty(0, dtype=np.int64)
    return SampledView(
        lo=snap.t_min if snap.t_min is not None else 0.0,
        hi=snap.t_max if snap.t_max is not None else 0.0,
        active=active,
        src=np.searchsorted(active, snap.src),
        dst=np.searchsorted(active, snap.dst),
        timestamps=snap.timestamps,
        features=full_features[active] if active.size else full_features[:0],
    )


def _identity_adjacency(n: int) -> NormalizedAdjacency:
    idx = np.arange(n, dtype=np.int64)
    return NormalizedAdjacency(n=n, rows=idx, cols=idx, vals=np.ones(n), indptr=np.arange(n + 1, dtype=np.int64))


def _fit_timespan_probe(view: SampledView, y_train: np.ndarray, train_local: np.ndarray,
                        num_classes: int, cfg: InvarianceConfig, stream: int) -> np.ndarray:
    """Train one independent supervised encoder; returns per-active-node logits."""
    base = np.random.default_rng([cfg.seed, 31, stream])
    params = init_params(view.features.shape[1], cfg.d_hidden, cfg.d_out,
                         seed=int(base.integers(2 ** 31)))
    limit = np.sqrt(6.0 / (cfg.d_out + num_classes))
    head_w = base.uniform(-limit, limit, size=(cfg.d_out, num_classes))
    head_b = np.zeros(num_classes)
    adj = normalize_adjacency(view) if cfg.encoder == "gcn" else _identity_adjacency(view.num_active)

    trainable = {"gcn_w1": params.gcn_w1, "gcn_w2": params.gcn_w2,
                 "head_w": head_w, "head_b": head_b}
    state = AdamState(lr=cfg.lr, weight_decay=cfg.weight_decay)
    for _ in range(cfg.epochs):
        h, cache = encode(view, adj, params)
        logits = h[train_local] @ head_w + head_b
        _, g_logits = softmax_cross_entropy(logits, y_train)
        g_h = np.zeros_like(h)
        g_h[train_local] = g_logits @ head_w.T
        enc_grads = encode_backward(g_h, cache, adj, params)
        grads = {"gcn_w1": enc_grads["gcn_w1"], "gcn_w2": enc_grads["gcn_w2"],
                 "head_w": h[train_local].T @ g_logits, "head_b": g_logits.sum(axis=0)}
        adam_step(trainable, grads, state)
    h, _ = encode(view, adj, params)
    return h @ head_w + head_b


def probe_invariance(graph: TemporalGraph, labels, s: int,
                     cfg: InvarianceConfig = InvarianceConfig()) -> InvarianceResult:
    """Agreement of independent per-timespan supervised probes.

    ``labels`` is either one full-length label array used everywhere or a
    sequence of s arrays (one per timespan), which enables the
    shuffled-label control. Each timespan trains a fresh encoder on its
    own view of the train split, then predicts the shared test nodes.
    """
    cfg.validate()
    if isinstance(labels, np.ndarray) and labels.ndim == 1:
        labels_per_span = [labels] * s
    else:
        labels_per_span = [np.asarray(a) for a in labels]
        if len(labels_per_span) != s:
            raise DataError(f"got {len(labels_per_span)} label arrays for s={s} timespans")

    snaps = to_snapshots(graph, s)
    views = [_snapshot_view(snaps[t], graph.features) for t in range(s)]
    split = make_split(labels_per_span[0], ratios=cfg.ratios, seed=cfg.seed)

    nonempty = [t for t in range(s) if not views[t].is_empty]
    shared = None
    for t in nonempty:
        shared = views[t].active if shared is None else np.intersect1d(shared, views[t].active, assume_unique=True)
    if shared is None:
        raise DataError("every timespan is empty")
    eval_nodes = np.intersect1d(shared, split.test, assume_unique=True)

    num_classes = int(max(int(a[a >= 0].max()) for a in labels_per_span)) + 1
    preds = [None] * s
    missing = []
    for t in range(s):
        if views[t].is_empty:
            warnings.warn(f"timespan {t} has no edges; marked missing")
            missing.append(t)
            continue
        y_full = labels_per_span[t]
        train_nodes = np.intersect1d(split.train, views[t].active, assume_unique=True)
        train_nodes = train_nodes[y_full[train_nodes] >= 0]
        if train_nodes.size == 0 or eval_nodes.size == 0:
            warnings.warn(f"timespan {t} has no shared labeled nodes; marked missing")
            missing.append(t)
            continue
        logits = _fit_timespan_probe(
            views[t], y_full[train_nodes], views[t].local_index_of(train_nodes),
            num_classes, cfg, stream=t)
        preds[t] = np.argmax(logits[views[t].local_index_of(eval_nodes)], axis=1)

    matrix = np.full((s, s), np.nan)
    for i in range(s):
        if preds[i] is not None:
            matrix[i, i] = 1.0
        for j in range(i + 1, s):
            if preds[i] is not None and preds[j] is not None:
                agree = float(np.mean(preds[i] == preds[j]))
                matrix[i, j] = matrix[j, i] = agree
    return InvarianceResult(matrix=matrix, eval_nodes=eval_nodes, missing=tuple(missing))


def generate_synthetic(
    k: int,
    n: int,
    T: float,
    p_in: float,
    p_out: float,
    events: int,
    seed: int = 0,
    feature_policy: str = "degree-buckets",
    feature_dim: int = 32,
) -> TemporalGraph:
    """Persistent-community temporal graph: a desk-scale learnable fixture.

    Node i belongs to community i mod k for the whole timespan. Each of
    ``events`` edges picks a uniform source, then a partner with weight
    p_in for same-community candidates and p_out otherwise; timestamps
    are uniform on [0, T]. Nodes left isolated get one self-event so the
    node table always covers 0..n-1. Labels are the community ids.
    """
    if k < 2 or n < k:
        raise DataError(f"need n >= k >= 2, got k={k} n={n}")
    if not T > 0:
        raise DataError(f"timespan must be positive, got {T}")
    if not p_in > p_out or p_out < 0:
        raise DataError(f"need p_in > p_out >= 0, got p_in={p_in} p_out={p_out}")
    if events < n:
        raise DataError(f"need events >= n, got events={events} n={n}")

    rng = np.random.default_rng([seed, 5])
    comm = np.arange(n, dtype=np.int64) % k
    members = [np.flatnonzero(comm == c) for c in range(k)]
    complements = [np.flatnonzero(comm != c) for c in range(k)]
    sizes = np.array([m.size for m in members])

    src = rng.integers(0, n, size=events)
    m_same = sizes[comm[src]] - 1
    m_diff = n - sizes[comm[src]]
    weight_in = p_in * m_same
    p_intra = np.divide(weight_in, weight_in + p_out * m_diff,
                        out=np.zeros(events), where=(weight_in + p_out * m_diff) > 0)
    intra = rng.random(events) < p_intra
    draws = rng.integers(0, np.where(intra, np.maximum(m_same, 1), m_diff))

    dst = np.empty(events, dtype=np.int64)
    for c in range(k):
        pick_in = intra & (comm[src] == c)
        if pick_in.any():
            pos = np.searchsorted(members[c], src[pick_in])
            j = draws[pick_in]
            j = j + (j >= pos)  # skip the source itself
            dst[pick_in] = members[c][j]
        pick_out = ~intra & (comm[src] == c)
        if pick_out.any():
            dst[pick_out] = complements[c][draws[pick_out]]
    timestamps = rng.uniform(0.0, T, size=events)

    present = np.zeros(n, dtype=bool)
    present[src] = True
    present[dst] = True
    lonely = np.flatnonzero(~present)
    if lonely.size:
        src = np.concatenate([src, lonely])
        dst = np.concatenate([dst, lonely])
        timestamps = np.concatenate([timestamps, rng.uniform(0.0, T, size=lonely.size)])

    return build_graph(
        src, dst, timestamps,
        label_rows={int(i): int(comm[i]) for i in range(n)},
        feature_policy=feature_policy,
        feature_dim=feature_dim,
        feature_seed=seed,
    )
