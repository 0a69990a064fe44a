"""Training loop, evaluation, ablation runner, and embedding export.

One gradient step per date (the cross-section is the batch), dates strictly
chronological so memory writes happen in order, banks persisting across
epochs.  Early stopping tracks validation IC; the best-epoch parameter and
bank snapshot becomes the checkpoint.  Everything is deterministic per
seed: two runs with the same config produce byte-identical checkpoints.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import metrics as mx
from .checkpoint import Checkpoint
from .data import ConceptGraph, DateSlice, FeaturePanel, load_panel
from .errors import ContractError, DataError, NumericError, UsageError
from .memory import MemoryBank
from .model import (ModelConfig, ModelParams, forward, init_banks,
                    init_parameters, mse_loss, predict)

EXPORT_STAGES = ("h1", "q1", "q2", "hhat3")


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    panel_path: str | None = None
    concept_path: str | None = None
    learning_rate: float = 2e-4
    momentum: float = 0.0
    epochs: int = 30
    patience: int = 10
    seed: int = 0
    train_end: str = ""
    valid_end: str = ""
    reset_banks_each_epoch: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0.0:
            raise ContractError("learning_rate must be positive")
        if self.train_end and self.valid_end and not self.train_end < self.valid_end:
            raise ContractError("split boundaries must satisfy train_end < valid_end")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "panel_path", "concept_path", "learning_rate", "momentum", "epochs",
            "patience", "seed", "train_end", "valid_end", "reset_banks_each_epoch")}
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        model = ModelConfig.from_dict(d.pop("model", {}))
        known = {k: d[k] for k in (
            "panel_path", "concept_path", "learning_rate", "momentum", "epochs",
            "patience", "seed", "train_end", "valid_end", "reset_banks_each_epoch") if k in d}
        return cls(model=model, **known)

    @classmethod
    def from_json_file(cls, path: str) -> "TrainConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise UsageError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
        return cls.from_dict(raw)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_ic: float | None
    improved: bool


@dataclass
class TrainLog:
    date_order: list[str]
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_valid_ic: float = -math.inf
    wall_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "date_order": self.date_order,
            "epochs": [vars(e) for e in self.epochs],
            "best_epoch": self.best_epoch,
            "best_valid_ic": self.best_valid_ic,
            "wall_seconds": self.wall_seconds,
        }


def split_slices(panel: FeaturePanel, train_end: str, valid_end: str
                 ) -> tuple[list[DateSlice], list[DateSlice], list[DateSlice]]:
    """Chronological train/valid/test partition of the labeled dates."""
    train = [s for s in panel.usable_slices if s.date <= train_end]
    valid = [s for s in panel.usable_slices if train_end < s.date <= valid_end]
    test = [s for s in panel.usable_slices if valid_end < s.date]
    return train, valid, test


def fraction_boundaries(panel: FeaturePanel, train_frac: float = 0.6,
                        valid_frac: float = 0.2) -> tuple[str, str]:
    """Pick split dates covering the requested fractions of usable dates."""
    dates = panel.usable_dates
    if len(dates) < 3:
        raise DataError("panel too small to split three ways")
    i_train = max(1, int(len(dates) * train_frac)) - 1
    i_valid = max(i_train + 1, int(len(dates) * (train_frac + valid_frac)) - 1)
    i_valid = min(i_valid, len(dates) - 2)
    return dates[i_train], dates[i_valid]


class _Sgd:
    """Plain stochastic gradient descent with optional momentum."""

    def __init__(self, params: dict[str, ad.Tensor], lr: float, momentum: float):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocity = {name: np.zeros_like(t.data) for name, t in params.items()} \
            if momentum > 0.0 else None

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for name, tensor in self.params.items():
            g = grads.get(name)
            if g is None:
                continue
            if self.velocity is not None:
                v = self.velocity[name]
                v *= self.momentum
                v += g
                g = v
            tensor.data -= self.lr * g


def _mean_valid_ic(slices: list[DateSlice], graph: ConceptGraph, params: ModelParams,
                   banks: dict[str, MemoryBank], config: ModelConfig) -> float | None:
    values = []
    for s in slices:
        mask = graph.mask_for(s.date, s.stock_ids)
        value = mx.ic(predict(s, mask, params, banks, config), s.labels)
        if value is not None:
            values.append(value)
    return float(np.mean(values)) if values else None


def _snapshot_tensors(params: ModelParams, banks: dict[str, MemoryBank]) -> dict[str, np.ndarray]:
    tensors = {name: t.data.copy() for name, t in params.named().items()}
    tensors["memory.predefined"] = banks["predefined"].items.copy()
    tensors["memory.hidden"] = banks["hidden"].items.copy()
    return tensors


def state_from_checkpoint(ckpt: Checkpoint) -> tuple[ModelParams, dict[str, MemoryBank], ModelConfig]:
    """Rebuild parameters and banks from a checkpoint's named tensors."""
    model_cfg = ModelConfig.from_dict(ckpt.config.get("model", {}))
    params = init_parameters(model_cfg)
    for name, tensor in params.named().items():
        stored = ckpt.tensors.get(name)
        if stored is None:
            raise DataError(f"checkpoint is missing tensor {name!r}")
        if stored.shape != tensor.data.shape:
            raise DataError(f"checkpoint tensor {name!r} has shape {stored.shape}, "
                            f"expected {tensor.data.shape}")
        tensor.data[:] = stored
    banks = {
        "predefined": MemoryBank(items=ckpt.tensors["memory.predefined"].copy(),
                                 stage="predefined"),
        "hidden": MemoryBank(items=ckpt.tensors["memory.hidden"].copy(), stage="hidden"),
    }
    return params, banks, model_cfg


def _load_data(config: TrainConfig, panel: FeaturePanel | None,
               graph: ConceptGraph | None) -> tuple[FeaturePanel, ConceptGraph]:
    if panel is not None and graph is not None:
        return panel, graph
    if not (config.panel_path and config.concept_path):
        raise UsageError("config must provide panel_path and concept_path "
                         "when data is not passed in memory")
    return load_panel(config.panel_path, config.concept_path)


def train(config: TrainConfig, panel: FeaturePanel | None = None,
          graph: ConceptGraph | None = None,
          progress=None) -> tuple[Checkpoint, TrainLog]:
    """Train to the best validation IC and return that snapshot plus the log."""
    panel, graph = _load_data(config, panel, graph)
    train_slices, valid_slices, _ = split_slices(panel, config.train_end, config.valid_end)
    if not train_slices:
        raise DataError("training split is empty; check train_end")
    if not valid_slices:
        raise DataError("validation split is empty; check valid_end")

    model_cfg = replace(config.model, seed=config.seed)
    params = init_parameters(model_cfg)
    banks = init_banks(model_cfg)
    fresh_banks = {k: b.copy() for k, b in banks.items()}
    optimizer = _Sgd(params.named(), config.learning_rate, config.momentum)

    log = TrainLog(date_order=[s.date for s in train_slices])
    best: dict[str, np.ndarray] | None = None
    best_metrics: dict = {}
    stale = 0
    started = time.monotonic()

    for epoch in range(config.epochs):
        if config.reset_banks_each_epoch:
            banks = {k: b.copy() for k, b in fresh_banks.items()}
        losses = []
        for s in train_slices:
            mask = graph.mask_for(s.date, s.stock_ids)
            trace = forward(s, mask, params, banks, model_cfg, mode="train")
            loss = mse_loss(trace.predictions, s.labels)
            value = loss.item()
            if not math.isfinite(value):
                raise NumericError(f"non-finite training loss on date {s.date}")
            losses.append(value)
            optimizer.step(ad.backward(loss))
        valid_ic = _mean_valid_ic(valid_slices, graph, params, banks, model_cfg)
        improved = valid_ic is not None and valid_ic > log.best_valid_ic
        if improved:
            log.best_valid_ic = valid_ic
            log.best_epoch = epoch
            best = _snapshot_tensors(params, banks)
            best_metrics = {"valid_ic": valid_ic, "epoch": epoch}
            stale = 0
        else:
            stale += 1
        record = EpochRecord(epoch=epoch, train_loss=float(np.mean(losses)),
                             valid_ic=valid_ic, improved=improved)
        log.epochs.append(record)
        if progress is not None:
            progress(record)
        if stale > config.patience:
            break

    if best is None:  # no epoch produced a valid IC; keep the final state
        best = _snapshot_tensors(params, banks)
        best_metrics = {"valid_ic": None, "epoch": len(log.epochs) - 1}
    log.wall_seconds = time.monotonic() - started
    ckpt = Checkpoint(tensors=best, config={"model": model_cfg.to_dict(),
                                            "train": config.to_dict()},
                      metrics=best_metrics)
    return ckpt, log


def evaluate(ckpt: Checkpoint, split: str, panel: FeaturePanel | None = None,
             graph: ConceptGraph | None = None) -> mx.MetricReport:
    """Frozen-bank metrics over the requested split of labeled dates."""
    if split not in ("train", "valid", "test"):
        raise UsageError(f"unknown split {split!r}; expected train, valid, or test")
    train_cfg = TrainConfig.from_dict(ckpt.config.get("train", {}))
    panel, graph = _load_data(train_cfg, panel, graph)
    params, banks, model_cfg = state_from_checkpoint(ckpt)
    parts = dict(zip(("train", "valid", "test"),
                     split_slices(panel, train_cfg.train_end, train_cfg.valid_end)))
    slices = parts[split]
    if not slices:
        raise DataError(f"{split} split is empty")
    daily = []
    for s in slices:
        mask = graph.mask_for(s.date, s.stock_ids)
        preds = predict(s, mask, params, banks, model_cfg)
        daily.append(mx.score_date(s.date, preds, s.labels, s.raw_labels))
    return mx.aggregate(daily)


@dataclass
class AblationRow:
    code: str
    ic_mean: float
    ic_std: float
    rank_ic_mean: float
    rank_ic_std: float
    precision_mean: dict[int, float]
    seed_ics: list[float]


@dataclass
class AblationResult:
    rows: list[AblationRow]
    seeds: list[int]

    # published full-scale reference for context; not asserted at this scale
    REFERENCE_NOTE = ("reference (full-scale CSI 100 benchmark): memory-enabled IC 0.128 "
                      "vs memory-free baseline 0.120, a +0.008 gap")

    def table(self) -> str:
        lines = ["memory | IC (std) | Rank IC (std) | P@3 | P@5 | P@10 | P@30"]
        lines.append("-" * len(lines[0]))
        for row in self.rows:
            p = row.precision_mean
            lines.append(
                f"{row.code:>6s} | {row.ic_mean:.4f} ({row.ic_std:.4f}) | "
                f"{row.rank_ic_mean:.4f} ({row.rank_ic_std:.4f}) | "
                f"{p[3]:5.2f} | {p[5]:5.2f} | {p[10]:5.2f} | {p[30]:5.2f}"
            )
        lines.append(self.REFERENCE_NOTE)
        return "\n".join(lines)

    def to_csv(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("memory,ic_mean,ic_std,rank_ic_mean,rank_ic_std,p3,p5,p10,p30\n")
            for row in self.rows:
                p = row.precision_mean
                fh.write(f"{row.code},{row.ic_mean!r},{row.ic_std!r},"
                         f"{row.rank_ic_mean!r},{row.rank_ic_std!r},"
                         f"{p[3]!r},{p[5]!r},{p[10]!r},{p[30]!r}\n")


def run_ablation(config: TrainConfig, seeds: list[int] | None = None,
                 panel: FeaturePanel | None = None, graph: ConceptGraph | None = None,
                 progress=None) -> AblationResult:
    """Train the four memory switch settings with shared seeds; report test metrics."""
    panel, graph = _load_data(config, panel, graph)
    seeds = list(seeds) if seeds else [config.seed]
    rows = []
    for code in ("B", "P", "H", "A"):
        reports = []
        for seed in seeds:
            run_cfg = replace(config, seed=seed, model=config.model.with_ablation(code))
            ckpt, _ = train(run_cfg, panel=panel, graph=graph)
            reports.append(evaluate(ckpt, "test", panel=panel, graph=graph))
            if progress is not None:
                progress(code, seed, reports[-1])
        ics = [r.ic_mean for r in reports]
        rank_ics = [r.rank_ic_mean for r in reports]
        rows.append(AblationRow(
            code=code,
            ic_mean=float(np.mean(ics)),
            ic_std=float(np.std(ics)),
            rank_ic_mean=float(np.mean(rank_ics)),
            rank_ic_std=float(np.std(rank_ics)),
            precision_mean={n: float(np.mean([r.precision_mean[n] for r in reports]))
                            for n in mx.PRECISION_LEVELS},
            seed_ics=[float(v) for v in ics],
        ))
    return AblationResult(rows=rows, seeds=seeds)


def export_embeddings(ckpt: Checkpoint, split: str, out_path: str,
                      panel: FeaturePanel | None = None,
                      graph: ConceptGraph | None = None) -> int:
    """Write per-stock stage features as CSV for offline projection/plotting.

    Stage codes: h1 = encoder output, q1/q2 = memory-refined predefined and
    hidden features, hhat3 = individual features.  Returns the row count.
    """
    if split not in ("train", "valid", "test"):
        raise UsageError(f"unknown split {split!r}; expected train, valid, or test")
    train_cfg = TrainConfig.from_dict(ckpt.config.get("train", {}))
    panel, graph = _load_data(train_cfg, panel, graph)
    params, banks, model_cfg = state_from_checkpoint(ckpt)
    parts = dict(zip(("train", "valid", "test"),
                     split_slices(panel, train_cfg.train_end, train_cfg.valid_end)))
    slices = parts[split]
    if not slices:
        raise DataError(f"{split} split is empty")
    width = model_cfg.embed_width
    rows = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("date,stock_id,stage," + ",".join(f"e{i:03d}" for i in range(width)) + "\n")
        for s in slices:
            mask = graph.mask_for(s.date, s.stock_ids)
            trace = forward(s, mask, params, banks, model_cfg, mode="eval")
            stage_data = {
                "h1": trace.predefined.inputs.data,
                "q1": trace.predefined.refined.data,
                "q2": trace.hidden.refined.data,
                "hhat3": trace.individual.local.data,
            }
            for stage in EXPORT_STAGES:
                block = stage_data[stage]
                for i, stock_id in enumerate(s.stock_ids):
                    fh.write(f"{s.date},{stock_id},{stage},"
                             + ",".join(repr(v) for v in block[i]) + "\n")
                    rows += 1
    return rows
