"""Graph-integrated imputation branch.

Each node's window becomes a directed temporal graph over L data vertices
plus one injection vertex carrying summary context from the companion
branch.  Observed vertices form a bidirectional clique, observed vertices
point into missing ones, missing vertices emit nothing, and the injection
vertex points one way into every data vertex.  Edges from observed into
missing vertices are sampled away during training with probability
min(1, exp(-alpha*dt + beta)), beta calibrated so the expected drop rate
over all vertex pairs is p.  Aggregation is row-normalized (in-degree) with
learned positive edge weights shared across graphs, followed per time step
by a multi-order spatial convolution over the road graph and a linear head.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numcore import ParamStore, Tensor, concat, constant, relu, softplus

DEGREE_EPS = 1e-6


# ---- temporal graph construction ----


def build_temporal_adjacency(mask_column: np.ndarray, include_injection: bool = True) -> np.ndarray:
    """Adjacency mask of one node-window graph; entry (i, j) = edge j -> i.

    Row/column L is the injection vertex: no incoming edges, outgoing to
    every data vertex when enabled.  Data vertex j emits edges only while
    observed, so column j of the data block equals mask[j] off-diagonal.
    """
    col = np.asarray(mask_column, dtype=np.float64)
    if col.ndim != 1:
        raise ValueError("mask_column must be 1-d")
    if not np.all((col == 0.0) | (col == 1.0)):
        raise ValueError("mask_column entries must be 0 or 1")
    return _batch_temporal_adjacency(col[None, :], include_injection)[0]


def _batch_temporal_adjacency(columns: np.ndarray, include_injection: bool) -> np.ndarray:
    """Stacked adjacency masks for (G, L) mask columns -> (G, L+1, L+1)."""
    G, L = columns.shape
    adj = np.zeros((G, L + 1, L + 1))
    adj[:, :L, :L] = columns[:, None, :]
    idx = np.arange(L)
    adj[:, idx, idx] = 0.0
    if include_injection:
        adj[:, :L, L] = 1.0
    return adj


def dropout_beta(alpha: float, p: float, L: int) -> float:
    """Offset making the mean pair drop probability equal p before clamping.

    beta = log(p * L^2 / sum_{i,j in 1..L} exp(-alpha * |i - j|)).
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if not (0.0 < p < 1.0):
        raise ValueError("p must be in (0, 1)")
    if L < 1:
        raise ValueError("L must be at least 1")
    idx = np.arange(L)
    total = np.exp(-alpha * np.abs(idx[:, None] - idx[None, :])).sum()
    return float(np.log(p * L * L / total))


def _batch_interval_dropout(
    adj: np.ndarray, columns: np.ndarray, alpha: float, beta: float, rng: np.random.Generator
) -> np.ndarray:
    """Drop observed->missing data edges independently; copies the input."""
    G, L = columns.shape
    idx = np.arange(L)
    delta = np.abs(idx[:, None] - idx[None, :])
    prob = np.minimum(1.0, np.exp(-alpha * delta + beta))
    eligible = (columns[:, :, None] == 0.0) & (columns[:, None, :] == 1.0)
    drop = eligible & (rng.random((G, L, L)) < prob)
    out = adj.copy()
    out[:, :L, :L][drop] = 0.0
    return out


def apply_interval_dropout(
    adj_mask: np.ndarray,
    mask_column: np.ndarray,
    alpha: float,
    beta: float,
    training: bool,
    seed: int,
) -> np.ndarray:
    """Training-time edge dropout on one graph; eval returns the input as is."""
    if not training:
        return adj_mask
    col = np.asarray(mask_column, dtype=np.float64)
    rng = np.random.default_rng(seed)
    return _batch_interval_dropout(adj_mask[None], col[None, :], alpha, beta, rng)[0]


# ---- forward operators ----


def temporal_forward(vertex_states, adj_mask, edge_logits, w, b) -> Tensor:
    """Row-normalized aggregation then linear + relu.

    A = adj_mask * softplus(edge_logits); each vertex averages its sources
    by incoming weight, H' = (D + eps I)^-1 A H; output relu(H' W + b).
    Zero-degree rows (the injection vertex, fully dropped vertices) give
    H' = 0 and hence relu(b).  Accepts a leading batch axis on states and
    adjacency.
    """
    states = vertex_states if isinstance(vertex_states, Tensor) else constant(vertex_states)
    logits = edge_logits if isinstance(edge_logits, Tensor) else constant(edge_logits)
    a = constant(np.asarray(adj_mask, dtype=np.float64)) * softplus(logits)
    degree = a.sum(axis=a.ndim - 1, keepdims=True)
    aggregated = (a @ states) / (degree + DEGREE_EPS)
    return relu(aggregated @ w + b)


@dataclass
class SpatialOperator:
    """Symmetrically normalized powers (D_k + eps)^-1/2 A^k (D_k + eps)^-1/2."""

    normalized_powers: list[np.ndarray]

    @property
    def order(self) -> int:
        return len(self.normalized_powers) - 1

    @property
    def n_nodes(self) -> int:
        return self.normalized_powers[0].shape[0]


def build_spatial_operator(a_s: np.ndarray, K: int) -> SpatialOperator:
    a_s = np.asarray(a_s, dtype=np.float64)
    if K < 0:
        raise ValueError("K must be non-negative")
    if a_s.ndim != 2 or a_s.shape[0] != a_s.shape[1]:
        raise ValueError("A_S must be square")
    if np.any(a_s < 0) or not np.allclose(a_s, a_s.T):
        raise ValueError("A_S must be symmetric and non-negative")
    powers = []
    for k in range(K + 1):
        m_k = np.linalg.matrix_power(a_s, k)
        scale = 1.0 / np.sqrt(m_k.sum(axis=1) + DEGREE_EPS)
        powers.append(scale[:, None] * m_k * scale[None, :])
    return SpatialOperator(normalized_powers=powers)


def spatial_forward(h_nodes, op: SpatialOperator, w, b) -> Tensor:
    """Concatenate every normalized-power aggregation, then linear + relu."""
    h = h_nodes if isinstance(h_nodes, Tensor) else constant(h_nodes)
    parts = [constant(p) @ h for p in op.normalized_powers]
    stacked = concat(parts, axis=h.ndim - 1)
    return relu(stacked @ w + b)


# ---- full branch ----


@dataclass
class GimConfig:
    L: int
    d: int
    n: int
    K: int
    alpha: float = 0.1
    p_dropout: float = 0.1
    include_injection: bool = True


class GimModule:
    """Owns the branch parameters inside a shared store under ``gim/``."""

    def __init__(self, params: ParamStore, config: GimConfig, spatial_op: SpatialOperator):
        self.params = params
        self.config = config
        self.spatial_op = spatial_op
        self.beta = (
            dropout_beta(config.alpha, config.p_dropout, config.L)
            if config.p_dropout > 0.0
            else 0.0
        )

    @classmethod
    def build(cls, params: ParamStore, config: GimConfig, spatial_op: SpatialOperator) -> "GimModule":
        d, K = config.d, config.K
        params.add("gim/embed/w", (d,), init="uniform_fan_in", fan_in=1)
        params.add("gim/embed/b", (d,))
        params.add("gim/embed/mask_token", (d,), init="normal")
        for i in range(config.n):
            prefix = f"gim/layer{i}"
            # zero logits start every edge at softplus(0) = log 2
            params.add(f"{prefix}/edge_logits", (config.L + 1, config.L + 1))
            params.add(f"{prefix}/temporal/W", (d, d), init="uniform_fan_in")
            params.add(f"{prefix}/temporal/b", (d,))
            params.add(f"{prefix}/spatial/W", ((K + 1) * d, d), init="uniform_fan_in")
            params.add(f"{prefix}/spatial/b", (d,))
        params.add("gim/head/W", (d, 1), init="uniform_fan_in")
        params.add("gim/head/b", (1,))
        return cls(params, config, spatial_op)

    def forward(
        self,
        x: np.ndarray,
        m: np.ndarray,
        hiddens: list | None,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """Impute every entry of a (B, L, N) batch; returns a (B, L, N) tensor.

        ``hiddens`` supplies one (B, N, d) injection state per layer (tensor
        or array); None or a None entry means a zero injection state.
        """
        cfg = self.config
        x = np.asarray(x, dtype=np.float64)
        m = np.asarray(m, dtype=np.float64)
        if x.ndim != 3 or x.shape != m.shape:
            raise ValueError("x and m must both be (B, L, N)")
        B, L, N = x.shape
        if L != cfg.L:
            raise ValueError(f"window length {L} does not match configured {cfg.L}")
        if N != self.spatial_op.n_nodes:
            raise ValueError("node count does not match the spatial operator")
        if hiddens is not None and len(hiddens) != cfg.n:
            raise ValueError("need one hidden state per layer")
        use_dropout = training and cfg.p_dropout > 0.0
        if use_dropout and rng is None:
            raise ValueError("training with dropout requires an rng")

        p = self.params
        d = cfg.d
        xz = np.where(m == 1.0, x, 0.0)[..., None]
        m4 = m[..., None]
        embedded = constant(m4) * (constant(xz) * p["gim/embed/w"] + p["gim/embed/b"]) + constant(
            1.0 - m4
        ) * p["gim/embed/mask_token"]

        columns = np.ascontiguousarray(m.transpose(0, 2, 1)).reshape(B * N, L)
        adj_base = _batch_temporal_adjacency(columns, cfg.include_injection)

        h = embedded  # (B, L, N, d)
        for i in range(cfg.n):
            adj = adj_base
            if use_dropout:
                adj = _batch_interval_dropout(adj_base, columns, cfg.alpha, self.beta, rng)
            states = h.transpose((0, 2, 1, 3)).reshape(B * N, L, d)
            inj = None if hiddens is None else hiddens[i]
            if inj is None:
                inj_t = constant(np.zeros((B * N, 1, d)))
            else:
                inj_t = inj if isinstance(inj, Tensor) else constant(np.asarray(inj, dtype=np.float64))
                inj_t = inj_t.reshape(B * N, 1, d)
            vertices = concat([states, inj_t], axis=1)
            prefix = f"gim/layer{i}"
            after_temporal = temporal_forward(
                vertices,
                adj,
                p[f"{prefix}/edge_logits"],
                p[f"{prefix}/temporal/W"],
                p[f"{prefix}/temporal/b"],
            )
            data_rows = after_temporal[:, :L, :]
            per_step = data_rows.reshape(B, N, L, d).transpose((0, 2, 1, 3)).reshape(B * L, N, d)
            h = spatial_forward(
                per_step, self.spatial_op, p[f"{prefix}/spatial/W"], p[f"{prefix}/spatial/b"]
            ).reshape(B, L, N, d)

        flat = h.reshape(B * L * N, d)
        out = flat @ p["gim/head/W"] + p["gim/head/b"]
        return out.reshape(B, L, N)


def gim_forward(
    module: GimModule,
    x_window: np.ndarray,
    m_window: np.ndarray,
    hidden_per_layer: list | None = None,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Single-window entry point: (L, N) in, (L, N) tensor out."""
    x = np.asarray(x_window, dtype=np.float64)
    m = np.asarray(m_window, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("x_window must be (L, N)")
    hiddens = None
    if hidden_per_layer is not None:
        hiddens = []
        for item in hidden_per_layer:
            if item is None:
                hiddens.append(None)
            elif isinstance(item, Tensor):
                hiddens.append(item.reshape(1, *item.shape))
            else:
                hiddens.append(np.asarray(item, dtype=np.float64)[None])
    out = module.forward(x[None], m[None], hiddens, training=training, rng=rng)
    return out.reshape(out.shape[1], out.shape[2])
