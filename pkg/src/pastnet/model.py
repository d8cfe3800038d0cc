"""Primary-auxiliary imputation model.

The temporal-graph branch (gim) fits observed values directly; the
cross-gated branch (cgm) fits whatever residual the first branch leaves
behind.  Their sum fills the missing entries and observed entries pass
through untouched:

    Y = M * X + (1 - M) * (Y_cgm + Y_gim)

Training keeps the two objectives partitioned GBDT-style: the residual
target X - Y_gim is a constant to the second loss, and the context vectors
handed from cgm to gim are constants to the first, so loss1 gradients touch
only gim parameters and loss2 gradients only cgm parameters.  Both losses
are averaged over observed entries only and optimized together by one Adam
instance.  The severing can be switched off to make the composite objective
fully differentiable for finite-difference validation.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cgm import CgmConfig, CgmModule
from .gim import GimConfig, GimModule, SpatialOperator, build_spatial_operator
from .numcore import AdamState, ParamStore, Tensor, adam_step, constant, masked_mse


@dataclass
class ModelConfig:
    L: int
    N: int
    d: int = 64
    n: int = 3
    K: int = 2
    alpha: float = 0.1
    p_dropout: float = 0.1
    d_week: int | None = None
    d_hour: int | None = None
    d_minute: int | None = None
    use_gim: bool = True
    use_cgm: bool = True
    residual_literal_sign: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.L < 1 or self.N < 1:
            raise ValueError("L and N must be positive")
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.K < 0:
            raise ValueError("K must be non-negative")
        if not (self.use_gim or self.use_cgm):
            raise ValueError("at least one branch must be enabled")


def fuse(x: np.ndarray, m: np.ndarray, y_gim: np.ndarray, y_cgm: np.ndarray) -> np.ndarray:
    """M * X + (1 - M) * (Y_cgm + Y_gim), shapes equal, M binary."""
    x, m = np.asarray(x, dtype=np.float64), np.asarray(m, dtype=np.float64)
    y_gim = np.asarray(y_gim, dtype=np.float64)
    y_cgm = np.asarray(y_cgm, dtype=np.float64)
    if not (x.shape == m.shape == y_gim.shape == y_cgm.shape):
        raise ValueError("fuse inputs must share one shape")
    if not np.all((m == 0.0) | (m == 1.0)):
        raise ValueError("mask entries must be 0 or 1")
    return m * x + (1.0 - m) * (y_cgm + y_gim)


def compute_losses(
    x,
    m,
    y_gim: Tensor,
    y_cgm: Tensor,
    sever_residual: bool = True,
    literal_sign: bool = False,
) -> tuple[Tensor, Tensor]:
    """Dual objectives on observed entries.

    loss1 = masked_mse(y_gim, x, m).  loss2 = masked_mse(y_cgm, r, m) with
    r = x - y_gim (or y_gim - x under the literal sign flag); by default
    y_gim enters r as a constant so loss2 cannot move the first branch.
    """
    x_c = constant(np.asarray(x, dtype=np.float64))
    loss1 = masked_mse(y_gim, x_c, m)
    gim_term = y_gim.detach() if sever_residual else y_gim
    residual = (gim_term - x_c) if literal_sign else (x_c - gim_term)
    loss2 = masked_mse(y_cgm, residual, m)
    return loss1, loss2


class PastModel:
    """Both branches over one shared parameter store plus fusion/inference."""

    def __init__(
        self,
        config: ModelConfig,
        params: ParamStore,
        gim: GimModule | None,
        cgm: CgmModule | None,
        spatial_op: SpatialOperator,
        norm_stats: tuple[float, float] | None = None,
    ):
        self.config = config
        self.params = params
        self.gim = gim
        self.cgm = cgm
        self.spatial_op = spatial_op
        self.norm_stats = norm_stats
        self.optimizer_state: AdamState | None = None

    @classmethod
    def build(
        cls,
        config: ModelConfig,
        adjacency: np.ndarray | None = None,
        spatial_op: SpatialOperator | None = None,
        norm_stats: tuple[float, float] | None = None,
    ) -> "PastModel":
        if spatial_op is None:
            if adjacency is None:
                raise ValueError("need an adjacency matrix or a prebuilt operator")
            spatial_op = build_spatial_operator(adjacency, config.K)
        if spatial_op.n_nodes != config.N or spatial_op.order != config.K:
            raise ValueError("spatial operator does not match the configuration")
        params = ParamStore(seed=config.seed)
        cgm = None
        if config.use_cgm:
            cgm = CgmModule.build(
                params,
                CgmConfig(
                    N=config.N,
                    d=config.d,
                    n=config.n,
                    d_week=config.d_week,
                    d_hour=config.d_hour,
                    d_minute=config.d_minute,
                ),
            )
        gim = None
        if config.use_gim:
            gim = GimModule.build(
                params,
                GimConfig(
                    L=config.L,
                    d=config.d,
                    n=config.n,
                    K=config.K,
                    alpha=config.alpha,
                    p_dropout=config.p_dropout,
                    # context injection exists only when the other branch does
                    include_injection=config.use_cgm,
                ),
                spatial_op,
            )
        return cls(config, params, gim, cgm, spatial_op, norm_stats)

    # ---- forward passes ----

    def forward(
        self,
        values: np.ndarray,
        masks: np.ndarray,
        week: np.ndarray,
        hour: np.ndarray,
        minute_bucket: np.ndarray,
        training: bool = False,
        rng: np.random.Generator | None = None,
        sever: bool = True,
    ) -> tuple[Tensor | None, Tensor | None]:
        """Branch outputs for a (B, L, N) batch; either side may be None."""
        y_cgm = None
        hiddens = None
        if self.cgm is not None:
            y_cgm, hiddens = self.cgm.forward(week, hour, minute_bucket)
        y_gim = None
        if self.gim is not None:
            passed = None
            if hiddens is not None:
                passed = [h.detach() if sever else h for h in hiddens]
            y_gim = self.gim.forward(values, masks, passed, training=training, rng=rng)
        return y_gim, y_cgm

    def objective(
        self,
        values: np.ndarray,
        masks: np.ndarray,
        week: np.ndarray,
        hour: np.ndarray,
        minute_bucket: np.ndarray,
        loss_weights: tuple[float, float] = (1.0, 1.0),
        training: bool = False,
        rng: np.random.Generator | None = None,
        sever: bool = True,
    ) -> tuple[Tensor, float, float]:
        """Weighted total plus the two raw loss values (nan for absent branch)."""
        y_gim, y_cgm = self.forward(
            values, masks, week, hour, minute_bucket, training=training, rng=rng, sever=sever
        )
        w1, w2 = loss_weights
        x_c = constant(np.asarray(values, dtype=np.float64))
        literal = self.config.residual_literal_sign
        if y_gim is not None and y_cgm is not None:
            loss1, loss2 = compute_losses(
                values, masks, y_gim, y_cgm, sever_residual=sever, literal_sign=literal
            )
            total = loss1 * w1 + loss2 * w2
            return total, float(loss1.data), float(loss2.data)
        if y_gim is not None:
            loss1 = masked_mse(y_gim, x_c, masks)
            return loss1 * w1, float(loss1.data), float("nan")
        # cgm alone fits the values directly: the absent branch contributes 0
        target = (x_c * -1.0) if literal else x_c
        loss2 = masked_mse(y_cgm, target, masks)
        return loss2 * w2, float("nan"), float(loss2.data)

    def impute(
        self,
        values: np.ndarray,
        masks: np.ndarray,
        week: np.ndarray,
        hour: np.ndarray,
        minute_bucket: np.ndarray,
    ) -> np.ndarray:
        """Fused output for one (L, N) window or a (B, L, N) batch; eval mode."""
        values = np.asarray(values, dtype=np.float64)
        masks = np.asarray(masks, dtype=np.float64)
        squeeze = values.ndim == 2
        if squeeze:
            values = values[None]
            masks = masks[None]
            week = np.asarray(week)[None]
            hour = np.asarray(hour)[None]
            minute_bucket = np.asarray(minute_bucket)[None]
        y_gim, y_cgm = self.forward(values, masks, week, hour, minute_bucket, training=False)
        zeros = np.zeros(values.shape)
        out = fuse(
            values,
            masks,
            y_gim.data if y_gim is not None else zeros,
            y_cgm.data if y_cgm is not None else zeros,
        )
        return out[0] if squeeze else out


def impute_span(
    model: PastModel,
    values: np.ndarray,
    mask: np.ndarray,
    week: np.ndarray,
    hour: np.ndarray,
    minute_bucket: np.ndarray,
) -> np.ndarray:
    """Impute an arbitrary span by tiling length-L windows.

    Windows start at 0, L, 2L, ...; an unaligned tail gets one extra window
    ending exactly at the span end.  Overlapping predictions are averaged.
    Observed entries still pass through exactly (every window agrees on
    them).
    """
    L = model.config.L
    T = values.shape[0]
    if T < L:
        raise ValueError(f"span of {T} steps is shorter than the window length {L}")
    starts = list(range(0, T - L + 1, L))
    if starts[-1] != T - L:
        starts.append(T - L)
    acc = np.zeros_like(np.asarray(values, dtype=np.float64))
    counts = np.zeros((T, 1))
    for s in starts:
        sl = slice(s, s + L)
        out = model.impute(values[sl], mask[sl], week[sl], hour[sl], minute_bucket[sl])
        acc[sl] += out
        counts[sl] += 1.0
    return acc / counts


# ---- training ----


@dataclass
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 32
    epochs: int = 100
    seed: int = 0
    loss_weights: tuple[float, float] = (1.0, 1.0)
    early_stop_patience: int = 10

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("lr, batch_size must be positive and epochs non-negative")


@dataclass
class TrainHistory:
    loss1: list[float] = field(default_factory=list)
    loss2: list[float] = field(default_factory=list)

    @property
    def n_epochs(self) -> int:
        return len(self.loss1)


def train(model: PastModel, windows, cfg: TrainConfig) -> tuple[PastModel, TrainHistory]:
    """Mini-batch Adam over shuffled windows; deterministic given cfg.seed.

    The shuffle is reseeded per epoch from (seed, epoch) and one dropout
    stream seeded from cfg.seed spans the whole run, so two identically
    configured runs produce bit-identical histories.  Stops early when the
    first branch's epoch loss fails to improve for early_stop_patience
    epochs.  Raises on non-finite losses, naming the epoch and batch.
    """
    if len(windows) == 0:
        raise ValueError("cannot train on an empty window batch")
    history = TrainHistory()
    if cfg.epochs == 0:
        return model, history
    adam = AdamState.for_params(model.params, lr=cfg.lr)
    model.optimizer_state = adam
    dropout_rng = np.random.default_rng([cfg.seed, 0xD120])
    best = np.inf
    stall = 0
    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(windows))
        sums = np.zeros(2)
        batches = 0
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            total, l1, l2 = model.objective(
                windows.values[idx],
                windows.masks[idx],
                windows.week[idx],
                windows.hour[idx],
                windows.minute_bucket[idx],
                loss_weights=cfg.loss_weights,
                training=True,
                rng=dropout_rng,
            )
            if not np.isfinite(float(total.data)):
                raise RuntimeError(
                    f"training diverged at epoch {epoch} batch {batches}: "
                    f"loss1={l1:g} loss2={l2:g}"
                )
            total.backward()
            adam_step(model.params, adam)
            sums += (0.0 if np.isnan(l1) else l1, 0.0 if np.isnan(l2) else l2)
            batches += 1
        epoch_l1 = sums[0] / batches
        epoch_l2 = sums[1] / batches
        history.loss1.append(epoch_l1)
        history.loss2.append(epoch_l2)
        tracked = epoch_l1 if model.config.use_gim else epoch_l2
        if tracked < best:
            best = tracked
            stall = 0
        else:
            stall += 1
            if stall >= cfg.early_stop_patience:
                break
    return model, history
