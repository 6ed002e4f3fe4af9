"""Forward model: shared-weight GCN encoder, neighborhood readout,
projection head; plus hand-wired backward passes and checkpoint IO.

The encoder is the standard two-layer graph convolution over the
symmetrically normalized self-loop adjacency: ReLU after the first
propagation, no activation after the second (the second layer's output is
the representation handed to downstream consumers). The projection head
is linear -> LeakyReLU -> linear -> row L2 normalization. All views share
one parameter object.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DataError
from .graph import SampledView

CHECKPOINT_MAGIC = "tgcl-checkpoint v1"
PARAM_FIELDS = ("gcn_w1", "gcn_w2", "proj_w1", "proj_b1", "proj_w2", "proj_b2")
READOUT_STATS = ("mean", "max", "sum")


@dataclass
class ModelParams:
    """All trainable tensors: two GCN weights, two projection layers."""

    gcn_w1: np.ndarray
    gcn_w2: np.ndarray
    proj_w1: np.ndarray
    proj_b1: np.ndarray
    proj_w2: np.ndarray
    proj_b2: np.ndarray

    @property
    def d_in(self) -> int:
        return self.gcn_w1.shape[0]

    @property
    def d_hidden(self) -> int:
        return self.gcn_w1.shape[1]

    @property
    def d_out(self) -> int:
        return self.gcn_w2.shape[1]

    @property
    def num_params(self) -> int:
        return sum(getattr(self, f).size for f in PARAM_FIELDS)

    def as_dict(self) -> dict:
        return {f: getattr(self, f) for f in PARAM_FIELDS}

    def copy(self) -> "ModelParams":
        return ModelParams(**{f: getattr(self, f).copy() for f in PARAM_FIELDS})

    def zeros_like_grads(self) -> dict:
        return {f: np.zeros_like(getattr(self, f)) for f in PARAM_FIELDS}


def init_params(d_in: int, d_hidden: int = 128, d_out: int = 64, seed: int = 0) -> ModelParams:
    """Seeded Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng([seed, 17])

    def glorot(fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    return ModelParams(
        gcn_w1=glorot(d_in, d_hidden),
        gcn_w2=glorot(d_hidden, d_out),
        proj_w1=glorot(d_out, d_out),
        proj_b1=np.zeros(d_out),
        proj_w2=glorot(d_out, d_out),
        proj_b2=np.zeros(d_out),
    )


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    """Sparse symmetric D^-1/2 (A + I) D^-1/2 over a view's active nodes.

    COO entries sorted by row; ``indptr`` gives per-row extents so
    matrix-vector products reduce over contiguous slices. Self-loops make
    every row non-empty.
    """

    n: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    indptr: np.ndarray

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n, self.n))
        dense[self.rows, self.cols] = self.vals
        return dense


def _undirected_pairs(view: SampledView):
    """Distinct unordered non-self edges as (a, b) with a < b."""
    a = np.minimum(view.src, view.dst)
    b = np.maximum(view.src, view.dst)
    keep = a != b
    a, b = a[keep], b[keep]
    if a.size == 0:
        return a, b
    code = a * np.int64(view.num_active) + b
    uniq = np.unique(code)
    return uniq // view.num_active, uniq % view.num_active


def normalize_adjacency(view: SampledView) -> NormalizedAdjacency:
    """Symmetrize, add self-loops, normalize by sqrt of augmented degrees."""
    if view.is_empty:
        raise DataError("cannot normalize adjacency of an empty view")
    n = view.num_active
    a, b = _undirected_pairs(view)
    deg = np.ones(n, dtype=np.float64)  # self-loop
    np.add.at(deg, a, 1.0)
    np.add.at(deg, b, 1.0)
    rows = np.concatenate([a, b, np.arange(n, dtype=np.int64)])
    cols = np.concatenate([b, a, np.arange(n, dtype=np.int64)])
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    vals = 1.0 / np.sqrt(deg[rows] * deg[cols])
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return NormalizedAdjacency(n=n, rows=rows, cols=cols, vals=vals, indptr=indptr)


def adj_matmul(adj: NormalizedAdjacency, x: np.ndarray) -> np.ndarray:
    """Sparse @ dense; the adjacency is symmetric so this is its own adjoint."""
    contrib = adj.vals[:, None] * x[adj.cols]
    return np.add.reduceat(contrib, adj.indptr[:-1], axis=0)


@dataclass(eq=False)
class EncodeCache:
    p0: np.ndarray
    s1: np.ndarray
    p1: np.ndarray


def encode(view: SampledView, adj: NormalizedAdjacency, params: ModelParams,
           activation: str = "relu"):
    """Two-layer graph convolution of the view's features.

    Returns (H, cache); H has one row per active node. ``activation``
    applies between the layers ("relu" or "linear").
    """
    h0 = view.features
    if h0.shape[1] != params.d_in:
        raise ValueError(f"feature dim {h0.shape[1]} != encoder input dim {params.d_in}")
    p0 = adj_matmul(adj, h0)
    s1 = kernels.matmul(p0, params.gcn_w1)
    h1 = kernels.relu(s1) if activation == "relu" else s1
    p1 = adj_matmul(adj, h1)
    h2 = kernels.matmul(p1, params.gcn_w2)
    return h2, EncodeCache(p0=p0, s1=s1, p1=p1)


def encode_backward(grad_h2: np.ndarray, cache: EncodeCache, adj: NormalizedAdjacency,
                    params: ModelParams, activation: str = "relu") -> dict:
    g_p1, g_w2 = kernels.matmul_backward(grad_h2, cache.p1, params.gcn_w2)
    g_h1 = adj_matmul(adj, g_p1)  # symmetric adjoint
    g_s1 = kernels.relu_backward(g_h1, cache.s1) if activation == "relu" else g_h1
    _, g_w1 = kernels.matmul_backward(g_s1, cache.p0, params.gcn_w1)
    return {"gcn_w1": g_w1, "gcn_w2": g_w2}


@dataclass(eq=False)
class ReadoutCache:
    flat: np.ndarray
    indptr: np.ndarray
    stat: str


def readout(view: SampledView, h: np.ndarray, batch_local: np.ndarray, stat: str = "mean"):
    """Aggregate each batch node's 1-hop in-view neighbor rows of ``h``.

    The node itself is excluded; a batch node with no in-view neighbor
    falls back to its own row. Returns (matrix, cache).
    """
    if stat not in READOUT_STATS:
        raise ValueError(f"unknown readout stat {stat!r}; expected one of {READOUT_STATS}")
    a, b = _undirected_pairs(view)
    nbr_src = np.concatenate([a, b])
    nbr_dst = np.concatenate([b, a])
    order = np.argsort(nbr_src, kind="stable")
    nbr_src, nbr_dst = nbr_src[order], nbr_dst[order]
    starts = np.searchsorted(nbr_src, np.arange(view.num_active))
    ends = np.searchsorted(nbr_src, np.arange(view.num_active) + 1)

    chunks = []
    counts = np.empty(batch_local.shape[0], dtype=np.int64)
    for i, node in enumerate(batch_local):
        lo, hi = starts[node], ends[node]
        if hi > lo:
            chunks.append(nbr_dst[lo:hi])
            counts[i] = hi - lo
        else:
            chunks.append(np.array([node], dtype=np.int64))
            counts[i] = 1
    flat = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
    indptr = np.zeros(batch_local.shape[0] + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    out = kernels.segment_reduce(h[flat], indptr, mode=stat)
    return out, ReadoutCache(flat=flat, indptr=indptr, stat=stat)


def readout_backward(grad_out: np.ndarray, cache: ReadoutCache, h: np.ndarray) -> np.ndarray:
    grad_values = kernels.segment_reduce_backward(grad_out, h[cache.flat], cache.indptr, cache.stat)
    grad_h = np.zeros_like(h)
    np.add.at(grad_h, cache.flat, grad_values)
    return grad_h


@dataclass(eq=False)
class ProjectCache:
    x: np.ndarray
    s1: np.ndarray
    l1: np.ndarray
    s2: np.ndarray


LEAKY_SLOPE = 0.01


def project(x: np.ndarray, params: ModelParams):
    """Two-layer MLP head with LeakyReLU, rows L2-normalized to the sphere."""
    s1 = kernels.add_bias(kernels.matmul(x, params.proj_w1), params.proj_b1)
    l1 = kernels.leaky_relu(s1, LEAKY_SLOPE)
    s2 = kernels.add_bias(kernels.matmul(l1, params.proj_w2), params.proj_b2)
    z = kernels.row_l2_normalize(s2)
    return z, ProjectCache(x=x, s1=s1, l1=l1, s2=s2)


def project_backward(grad_z: np.ndarray, cache: ProjectCache, params: ModelParams):
    g_s2 = kernels.row_l2_normalize_backward(grad_z, cache.s2)
    g_s2, g_b2 = kernels.add_bias_backward(g_s2)
    g_l1, g_w2 = kernels.matmul_backward(g_s2, cache.l1, params.proj_w2)
    g_s1 = kernels.leaky_relu_backward(g_l1, cache.s1, LEAKY_SLOPE)
    g_s1, g_b1 = kernels.add_bias_backward(g_s1)
    g_x, g_w1 = kernels.matmul_backward(g_s1, cache.x, params.proj_w1)
    grads = {"proj_w1": g_w1, "proj_b1": g_b1, "proj_w2": g_w2, "proj_b2": g_b2}
    return g_x, grads


@dataclass(eq=False)
class ViewEmbeddings:
    """Projected node (and optionally neighborhood) embeddings for one view,
    rows aligned with ``node_index`` across views."""

    node_z: np.ndarray
    neigh_z: np.ndarray | None
    node_index: np.ndarray


@dataclass(eq=False)
class ViewCache:
    adj: NormalizedAdjacency
    enc: EncodeCache
    batch_local: np.ndarray
    h: np.ndarray
    proj_node: ProjectCache
    proj_neigh: ProjectCache | None
    read: ReadoutCache | None
    activation: str


def embed_views(
    views,
    batch_nodes: np.ndarray,
    params: ModelParams,
    stat: str = "mean",
    with_neighborhood: bool = True,
    activation: str = "relu",
):
    """Encode every view with the same parameters and project the batch rows.

    ``batch_nodes`` are internal graph node indices that must be active in
    every view. Returns (embeddings, caches), both lists indexed by view.
    """
    batch_nodes = np.asarray(batch_nodes, dtype=np.int64)
    embeddings, caches = [], []
    for view in views:
        adj = normalize_adjacency(view)
        h, enc_cache = encode(view, adj, params, activation=activation)
        batch_local = view.local_index_of(batch_nodes)
        node_z, proj_node = project(h[batch_local], params)
        neigh_z = proj_neigh = read_cache = None
        if with_neighborhood:
            r, read_cache = readout(view, h, batch_local, stat=stat)
            neigh_z, proj_neigh = project(r, params)
        embeddings.append(ViewEmbeddings(node_z=node_z, neigh_z=neigh_z, node_index=batch_nodes))
        caches.append(
            ViewCache(
                adj=adj,
                enc=enc_cache,
                batch_local=batch_local,
                h=h,
                proj_node=proj_node,
                proj_neigh=proj_neigh,
                read=read_cache,
                activation=activation,
            )
        )
    return embeddings, caches


def embed_views_backward(zgrads, caches, params: ModelParams) -> dict:
    """Accumulate parameter gradients from per-view (node_z, neigh_z) grads.

    ``zgrads`` is a list of (grad_node_z, grad_neigh_z_or_None) aligned
    with the caches from :func:`embed_views`.
    """
    total = params.zeros_like_grads()
    for (g_node_z, g_neigh_z), cache in zip(zgrads, caches):
        grad_h = np.zeros_like(cache.h)
        g_rows, proj_grads = project_backward(g_node_z, cache.proj_node, params)
        np.add.at(grad_h, cache.batch_local, g_rows)
        for k, g in proj_grads.items():
            total[k] += g
        if g_neigh_z is not None:
            if cache.proj_neigh is None:
                raise ValueError("neighborhood gradient given but forward skipped the readout path")
            g_read, proj_grads_n = project_backward(g_neigh_z, cache.proj_neigh, params)
            grad_h += readout_backward(g_read, cache.read, cache.h)
            for k, g in proj_grads_n.items():
                total[k] += g
        enc_grads = encode_backward(grad_h, cache.enc, cache.adj, params, cache.activation)
        for k, g in enc_grads.items():
            total[k] += g
    return total


def save_params(path, params: ModelParams, meta: dict | None = None) -> None:
    """Write a deterministic binary checkpoint (header JSON + raw float64).

    Layout: one magic line, one JSON line (dims, tensor manifest, meta),
    then the tensors' C-order little-endian float64 bytes in manifest
    order. Written atomically via a temp file.
    """
    path = Path(path)
    header = {
        "dims": {"d_in": params.d_in, "d_hidden": params.d_hidden, "d_out": params.d_out},
        "tensors": [{"name": f, "shape": list(getattr(params, f).shape)} for f in PARAM_FIELDS],
        "meta": meta or {},
    }
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("wb") as fh:
        fh.write((CHECKPOINT_MAGIC + "\n").encode("utf-8"))
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("utf-8"))
        for f in PARAM_FIELDS:
            arr = np.ascontiguousarray(getattr(params, f), dtype="<f8")
            fh.write(arr.tobytes())
    os.replace(tmp, path)


def load_params(path):
    """Read a checkpoint back; returns (params, meta). Bit-exact round trip."""
    path = Path(path)
    with path.open("rb") as fh:
        magic = fh.readline().decode("utf-8").rstrip("\n")
        if magic != CHECKPOINT_MAGIC:
            raise DataError(f"{path}: not a checkpoint (bad magic {magic!r})")
        header = json.loads(fh.readline().decode("utf-8"))
        arrays = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise DataError(f"{path}: truncated tensor {entry['name']}")
            arrays[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    missing = [f for f in PARAM_FIELDS if f not in arrays]
    if missing:
        raise DataError(f"{path}: checkpoint missing tensors {missing}")
    return ModelParams(**arrays), header.get("meta", {})
