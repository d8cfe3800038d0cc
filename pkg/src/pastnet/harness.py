"""End-to-end evaluation: scenarios x methods, offline and online.

One experiment fixes a dataset, then for every missing scenario it hides
entries over the whole time span, fits each learned method on the first
80% of time (observed entries only), and scores every method on the hidden
entries of the training span (offline) and of the held-out span (online,
same trained model).  Scores live in normalized space unless the plan asks
for raw units.  Everything is a pure function of the plan and its seed;
only the runtime columns vary between identical runs.
"""
from __future__ import annotations

import json
import os
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .baselines import baseline_knn, baseline_linear
from .data import (
    TrafficDataset,
    build_spatial_adjacency,
    load_dataset,
    normalize,
    save_values_csv,
    synthesize_dataset,
    time_feature_arrays,
    window_split,
)
from .masking import ScenarioConfig, generate_mask, save_mask_csv
from .metrics import rmse_mae
from .model import ModelConfig, PastModel, TrainConfig, impute_span, train

METHOD_NAMES = ("past", "past_wo_cgm", "past_wo_gim", "linear", "knn")
LEARNED_METHODS = ("past", "past_wo_cgm", "past_wo_gim")
RESULTS_HEADER = "scenario,method,setting,rmse,mae,runtime_seconds"


@dataclass
class EvalResult:
    scenario: ScenarioConfig
    method: str
    setting: str  # offline | online
    rmse: float
    mae: float
    runtime_seconds: float

    def csv_row(self) -> str:
        return (
            f"{self.scenario.label},{self.method},{self.setting},"
            f"{self.rmse:.17g},{self.mae:.17g},{self.runtime_seconds:.6f}"
        )


@dataclass
class DatasetSpec:
    """Either a synthetic recipe or a pair of files."""

    kind: str = "synthetic"
    n_nodes: int = 8
    n_days: int = 4
    step_minutes: int = 15
    noise_level: float = 0.2
    values_path: str | None = None
    graph_path: str | None = None

    def __post_init__(self):
        if self.kind not in ("synthetic", "files"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "files" and not (self.values_path and self.graph_path):
            raise ValueError("file datasets need values_path and graph_path")

    def realize(self, seed: int) -> TrafficDataset:
        if self.kind == "files":
            return load_dataset(self.values_path, self.graph_path)
        return synthesize_dataset(
            self.n_nodes,
            self.n_days,
            step_minutes=self.step_minutes,
            seed=seed,
            noise_level=self.noise_level,
        )


@dataclass
class ExperimentPlan:
    dataset: DatasetSpec
    scenarios: list[ScenarioConfig]
    methods: list[str]
    model: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    # per-scenario-kind training tweaks, e.g. {"random": {"lr": 1e-2}};
    # values override plan.train (and window_stride) for that kind's cells
    train_overrides: dict = field(default_factory=dict)
    knn_k: int = 5
    window_stride: int | None = None  # None: non-overlapping windows (stride = L)
    train_fraction: float = 0.8
    output_dir: str = "results"
    seed: int = 0
    raw_space: bool = False
    dump_series: bool = True

    def __post_init__(self):
        if not self.scenarios:
            raise ValueError("plan needs at least one scenario")
        if not self.methods:
            raise ValueError("plan needs at least one method")
        unknown = [m for m in self.methods if m not in METHOD_NAMES]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {METHOD_NAMES}")
        if not (0.0 < self.train_fraction < 1.0):
            raise ValueError("train_fraction must be in (0, 1)")
        bad = [k for k in self.train_overrides if k not in ("random", "fiber", "block")]
        if bad:
            raise ValueError(f"train_overrides keyed by unknown scenario kinds {bad}")


def plan_from_dict(raw: dict) -> ExperimentPlan:
    raw = dict(raw)
    dataset = DatasetSpec(**raw.pop("dataset", {}))
    scenarios = []
    for i, sc in enumerate(raw.pop("scenarios", [])):
        sc = dict(sc)
        sc.setdefault("seed", raw.get("seed", 0) * 1000 + i)
        scenarios.append(ScenarioConfig(**sc))
    return ExperimentPlan(dataset=dataset, scenarios=scenarios, **raw)


def load_plan(path: str) -> ExperimentPlan:
    with open(path) as fh:
        return plan_from_dict(json.load(fh))


def _model_config(plan: ExperimentPlan, n_nodes: int, method: str) -> ModelConfig:
    kw = dict(plan.model)
    kw.setdefault("L", 96)
    kw["N"] = n_nodes
    kw.setdefault("seed", plan.seed)
    kw["use_cgm"] = method != "past_wo_cgm"
    kw["use_gim"] = method != "past_wo_gim"
    return ModelConfig(**kw)


def _train_config(plan: ExperimentPlan, scenario: ScenarioConfig) -> TrainConfig:
    kw = dict(plan.train)
    kw.update(plan.train_overrides.get(scenario.kind, {}))
    kw.pop("window_stride", None)
    kw.setdefault("seed", plan.seed)
    if "loss_weights" in kw:
        kw["loss_weights"] = tuple(kw["loss_weights"])
    return TrainConfig(**kw)


def _window_stride(plan: ExperimentPlan, scenario: ScenarioConfig, L: int) -> int:
    override = plan.train_overrides.get(scenario.kind, {}).get("window_stride")
    return override or plan.window_stride or L


@dataclass
class _Span:
    setting: str
    lo: int
    hi: int


def _score_grid(pred, truth, obs_mask, span: _Span, raw_space, norm_stats):
    eval_mask = 1.0 - obs_mask[span.lo : span.hi]
    p = pred
    t = truth[span.lo : span.hi]
    if raw_space:
        mean, std = norm_stats
        p = p * std + mean
        t = t * std + mean
    return rmse_mae(p, t, eval_mask)


def run_experiment(plan: ExperimentPlan) -> list[EvalResult]:
    os.makedirs(plan.output_dir, exist_ok=True)
    ds_raw = plan.dataset.realize(plan.seed)
    adjacency = build_spatial_adjacency(ds_raw.n_nodes, ds_raw.edges)
    results: list[EvalResult] = []
    errors: list[dict] = []
    histories: dict = {}
    train_seconds: dict = {}

    for scenario in plan.scenarios:
        mask = generate_mask(ds_raw.values.shape, scenario, adjacency=adjacency)
        ds = normalize(ds_raw, plan.train_fraction, mask)
        boundary = int(np.floor(plan.train_fraction * ds.n_steps))
        spans = [_Span("offline", 0, boundary), _Span("online", boundary, ds.n_steps)]
        masked_values = ds.values * mask  # hidden entries must not leak

        for method in plan.methods:
            try:
                preds = _impute_all_spans(
                    plan, ds, mask, masked_values, adjacency, scenario, method, spans,
                    histories, train_seconds,
                )
            except Exception as exc:  # noqa: BLE001 - cell failure must not kill the run
                errors.append(
                    {"scenario": scenario.label, "method": method, "error": f"{exc}"}
                )
                continue
            for span, (pred, seconds) in zip(spans, preds):
                rmse, mae = _score_grid(
                    pred, ds.values, mask, span, plan.raw_space, ds.norm_stats
                )
                results.append(EvalResult(scenario, method, span.setting, rmse, mae, seconds))
                if plan.dump_series:
                    name = f"imputed_{scenario.label}_{method}_{span.setting}.csv"
                    save_values_csv(os.path.join(plan.output_dir, name), pred, ds.node_ids)
        if plan.dump_series:
            save_mask_csv(
                os.path.join(plan.output_dir, f"mask_{scenario.label}.csv"), mask, ds.node_ids
            )

    results.sort(key=lambda r: (r.scenario.label, r.method, r.setting))
    _write_reports(plan, results, errors, histories, train_seconds)
    return results


def _impute_all_spans(
    plan, ds, mask, masked_values, adjacency, scenario, method, spans,
    histories, train_seconds,
):
    """One method on one scenario: returns [(pred, seconds), ...] per span."""
    if method in LEARNED_METHODS:
        model_cfg = _model_config(plan, ds.n_nodes, method)
        train_cfg = _train_config(plan, scenario)
        stride = _window_stride(plan, scenario, model_cfg.L)
        train_w, _ = window_split(ds, model_cfg.L, stride, plan.train_fraction, mask)
        model = PastModel.build(model_cfg, adjacency=adjacency, norm_stats=ds.norm_stats)
        t0 = time.perf_counter()
        model, history = train(model, train_w, train_cfg)
        train_seconds.setdefault(scenario.label, {})[method] = time.perf_counter() - t0
        histories.setdefault(scenario.label, {})[method] = {
            "loss1": [float(v) for v in history.loss1],
            "loss2": [float(v) for v in history.loss2],
        }
    out = []
    for span in spans:
        sl = slice(span.lo, span.hi)
        t0 = time.perf_counter()
        if method == "linear":
            pred = baseline_linear(masked_values[sl], mask[sl])
        elif method == "knn":
            pred = baseline_knn(masked_values[sl], mask[sl], plan.knn_k, adjacency)
        else:
            week, hour, bucket = time_feature_arrays(ds, span.lo, span.hi - span.lo)
            pred = impute_span(model, masked_values[sl], mask[sl], week, hour, bucket)
        out.append((pred, time.perf_counter() - t0))
    return out


def _write_reports(plan, results, errors, histories, train_seconds):
    csv_path = os.path.join(plan.output_dir, "results.csv")
    with open(csv_path, "w") as fh:
        fh.write(RESULTS_HEADER + "\n")
        for r in results:
            fh.write(r.csv_row() + "\n")
    payload = {
        "version": __version__,
        "numpy_version": np.__version__,
        "plan": _plan_as_dict(plan),
        "results": [
            {
                "scenario": r.scenario.label,
                "method": r.method,
                "setting": r.setting,
                "rmse": r.rmse,
                "mae": r.mae,
                "runtime_seconds": r.runtime_seconds,
            }
            for r in results
        ],
        "errors": errors,
        "train_seconds": train_seconds,
        "histories": histories,
    }
    with open(os.path.join(plan.output_dir, "results.json"), "w") as fh:
        json.dump(payload, fh, indent=2)
    if errors:
        warnings.warn(f"{len(errors)} experiment cell(s) failed; see results.json")


def _plan_as_dict(plan: ExperimentPlan) -> dict:
    return asdict(plan)
