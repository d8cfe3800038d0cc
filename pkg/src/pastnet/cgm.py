"""Cross-gated auxiliary branch.

Consumes no measurements at all: node identities and calendar features
(week, hour, minute bucket) are embedded into a spatial and a temporal
stream, and n gating layers let each stream modulate the other through
sigmoid/tanh products with a residual pass-through.  The branch emits its
own imputation surface plus, per layer, one context vector per node
(time-mean of the concatenated streams, linearly projected) that the
temporal-graph branch injects into its per-node graphs.

Each layer owns exactly four d x d matrices (no biases); biases exist only
in the per-layer hidden projection and the output head.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numcore import ParamStore, Tensor, concat, constant, embedding, sigmoid, tanh

WEEK_CARD = 7
HOUR_CARD = 24
MINUTE_CARD = 4


def default_partition(d: int) -> tuple[int, int, int]:
    """Split d into (week, hour, minute) widths, hour taking the largest share."""
    if d < 4:
        raise ValueError("d must be at least 4 to partition the timestamp embedding")
    quarter = d // 4
    return quarter, d - 2 * quarter, quarter


@dataclass
class CgmConfig:
    N: int
    d: int
    n: int
    d_week: int | None = None
    d_hour: int | None = None
    d_minute: int | None = None

    def __post_init__(self):
        if self.d_week is None or self.d_hour is None or self.d_minute is None:
            self.d_week, self.d_hour, self.d_minute = default_partition(self.d)
        if self.d_week + self.d_hour + self.d_minute != self.d:
            raise ValueError("timestamp embedding partition must sum to d")
        if min(self.d_week, self.d_hour, self.d_minute) < 1:
            raise ValueError("each timestamp embedding needs at least one dimension")


@dataclass
class EmbeddingTables:
    node: Tensor
    week: Tensor
    hour: Tensor
    minute: Tensor

    @property
    def d(self) -> int:
        return self.node.shape[1]


def _check_range(name: str, idx: np.ndarray, cardinality: int) -> np.ndarray:
    idx = np.asarray(idx)
    if idx.size and (idx.min() < 0 or idx.max() >= cardinality):
        raise ValueError(f"{name} index out of range [0, {cardinality})")
    return idx


def embed_external(node_index: int, tf, tables: EmbeddingTables) -> tuple[Tensor, Tensor]:
    """Single lookup: v_s = node row, v_t = concat(week, hour, minute) rows."""
    u = _check_range("node", np.array([node_index]), tables.node.shape[0])
    w = _check_range("week", np.array([tf.week]), WEEK_CARD)
    h = _check_range("hour", np.array([tf.hour]), HOUR_CARD)
    b = _check_range("minute_bucket", np.array([tf.minute_bucket]), MINUTE_CARD)
    v_s = embedding(tables.node, u).reshape(tables.d)
    v_t = concat(
        [embedding(tables.week, w), embedding(tables.hour, h), embedding(tables.minute, b)],
        axis=1,
    ).reshape(tables.d)
    return v_s, v_t


def cross_gate_layer(v_s, v_t, w_sp, w_tp, w_sg, w_tg) -> tuple[Tensor, Tensor]:
    """One bidirectional gating step on (..., d) streams.

    Projections v_sp = v_s W_sp, v_tp = v_t W_tp and gates v_sg = v_s W_sg,
    v_tg = v_t W_tg; each projection is scaled by sigmoid of its own gate
    and tanh of the opposite gate, then added back onto its stream.
    """
    v_s = v_s if isinstance(v_s, Tensor) else constant(v_s)
    v_t = v_t if isinstance(v_t, Tensor) else constant(v_t)
    if v_s.shape != v_t.shape:
        raise ValueError("stream shapes must match")
    d = v_s.shape[-1]
    flat_s = v_s.reshape(-1, d)
    flat_t = v_t.reshape(-1, d)
    v_sp = flat_s @ w_sp
    v_tp = flat_t @ w_tp
    v_sg = flat_s @ w_sg
    v_tg = flat_t @ w_tg
    gated_s = v_sp * sigmoid(v_sg) * tanh(v_tg)
    gated_t = v_tp * sigmoid(v_tg) * tanh(v_sg)
    return v_s + gated_s.reshape(v_s.shape), v_t + gated_t.reshape(v_t.shape)


def hidden_export(s_u, t_u, proj_w, proj_b) -> Tensor:
    """Time-mean of concat(S, T) rows, projected 2d -> d."""
    s_u = s_u if isinstance(s_u, Tensor) else constant(s_u)
    t_u = t_u if isinstance(t_u, Tensor) else constant(t_u)
    pooled = concat([s_u, t_u], axis=1).mean(axis=0)
    d = s_u.shape[1]
    return (pooled.reshape(1, 2 * d) @ proj_w + proj_b).reshape(d)


class CgmModule:
    """Owns the branch parameters inside a shared store under ``cgm/``."""

    def __init__(self, params: ParamStore, config: CgmConfig):
        self.params = params
        self.config = config

    @classmethod
    def build(cls, params: ParamStore, config: CgmConfig) -> "CgmModule":
        d = config.d
        params.add("cgm/embed/node", (config.N, d), init="normal")
        params.add("cgm/embed/week", (WEEK_CARD, config.d_week), init="normal")
        params.add("cgm/embed/hour", (HOUR_CARD, config.d_hour), init="normal")
        params.add("cgm/embed/minute", (MINUTE_CARD, config.d_minute), init="normal")
        for i in range(config.n):
            prefix = f"cgm/layer{i}"
            for name in ("W_sp", "W_tp", "W_sg", "W_tg"):
                params.add(f"{prefix}/{name}", (d, d), init="uniform_fan_in")
            params.add(f"{prefix}/hidden/W", (2 * d, d), init="uniform_fan_in")
            params.add(f"{prefix}/hidden/b", (d,))
        params.add("cgm/head/W", (2 * d, 1), init="uniform_fan_in")
        params.add("cgm/head/b", (1,))
        return cls(params, config)

    @property
    def tables(self) -> EmbeddingTables:
        p = self.params
        return EmbeddingTables(
            node=p["cgm/embed/node"],
            week=p["cgm/embed/week"],
            hour=p["cgm/embed/hour"],
            minute=p["cgm/embed/minute"],
        )

    def forward(
        self, week: np.ndarray, hour: np.ndarray, minute_bucket: np.ndarray
    ) -> tuple[Tensor, list[Tensor]]:
        """(B, L) calendar indices -> ((B, L, N) surface, n x (B, N, d) hiddens).

        Layer 0 broadcasts the node embedding over time and the timestamp
        embedding over nodes; gating then makes every (t, u) pair distinct.
        """
        cfg = self.config
        week = _check_range("week", np.asarray(week, dtype=np.int64), WEEK_CARD)
        hour = _check_range("hour", np.asarray(hour, dtype=np.int64), HOUR_CARD)
        minute_bucket = _check_range(
            "minute_bucket", np.asarray(minute_bucket, dtype=np.int64), MINUTE_CARD
        )
        if week.ndim != 2 or week.shape != hour.shape or week.shape != minute_bucket.shape:
            raise ValueError("week, hour, minute_bucket must share a (B, L) shape")
        B, L = week.shape
        N, d, n = cfg.N, cfg.d, cfg.n
        p = self.params

        node_rows = embedding(p["cgm/embed/node"], np.arange(N))
        s_stream = node_rows.reshape(1, 1, N, d).broadcast_to((B, L, N, d))
        stamp = concat(
            [
                embedding(p["cgm/embed/week"], week),
                embedding(p["cgm/embed/hour"], hour),
                embedding(p["cgm/embed/minute"], minute_bucket),
            ],
            axis=2,
        )
        t_stream = stamp.reshape(B, L, 1, d).broadcast_to((B, L, N, d))

        hiddens: list[Tensor] = []
        for i in range(n):
            prefix = f"cgm/layer{i}"
            s_stream, t_stream = cross_gate_layer(
                s_stream,
                t_stream,
                p[f"{prefix}/W_sp"],
                p[f"{prefix}/W_tp"],
                p[f"{prefix}/W_sg"],
                p[f"{prefix}/W_tg"],
            )
            pair = concat([s_stream, t_stream], axis=3)
            pooled = pair.mean(axis=1)  # (B, N, 2d)
            h_i = (pooled.reshape(B * N, 2 * d) @ p[f"{prefix}/hidden/W"] + p[f"{prefix}/hidden/b"])
            hiddens.append(h_i.reshape(B, N, d))

        pair = concat([s_stream, t_stream], axis=3)
        y = (pair.reshape(B * L * N, 2 * d) @ p["cgm/head/W"] + p["cgm/head/b"]).reshape(B, L, N)
        return y, hiddens


def cgm_forward(
    module: CgmModule, week: np.ndarray, hour: np.ndarray, minute_bucket: np.ndarray
) -> tuple[Tensor, list[Tensor]]:
    """Single-window entry point: (L,) features -> ((L, N), n x (N, d))."""
    week = np.asarray(week)
    if week.ndim != 1:
        raise ValueError("expected 1-d per-step features")
    y, hiddens = module.forward(
        week[None, :], np.asarray(hour)[None, :], np.asarray(minute_bucket)[None, :]
    )
    L = week.shape[0]
    N = module.config.N
    d = module.config.d
    return y.reshape(L, N), [h.reshape(N, d) for h in hiddens]
