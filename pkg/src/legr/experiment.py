"""Pipeline stages shared by the CLI and the experiment scripts."""

from __future__ import annotations

import csv
import dataclasses
import io
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from legr import data as data_mod
from legr import ranking
from legr import search as search_mod
from legr.archgraph import FilterMask, NetworkGraph, apply_mask, total_flops
from legr.baselines import baseline_prune
from legr.manifest import ConfigError, ExperimentManifest, derive_seed
from legr.nn import Model, TrainConfig, checkpoint, evaluate, train_steps
from legr.ranking import AffinePair, InfeasibleTarget
from legr.search import FitnessContext, SearchResult

REPORT_HEADER = ["method", "zeta", "flops", "flop_ratio", "params_kept",
                 "accuracy_after_finetune", "finetune_steps", "wall_seconds", "status"]


@dataclass
class Splits:
    train: data_mod.Dataset
    val: data_mod.Dataset
    test: data_mod.Dataset


def prepare_data(m: ExperimentManifest) -> Splits:
    """Train/val/test splits, standardized with train statistics."""
    spec = m.dataset
    if spec.kind == "synth":
        full = data_mod.synth_shapes(spec.n, spec.classes, spec.size, derive_seed(m.seed, "data"), spec.noise)
        rest, test = data_mod.split(full, data_mod.SplitSpec(spec.test_fraction, True, derive_seed(m.seed, "test_split")))
    else:
        for key in ("train_images", "train_labels", "test_images", "test_labels"):
            if not m.resolve(getattr(spec, key)).exists():
                raise ConfigError(f"file not found: {m.resolve(getattr(spec, key))}", f"dataset.{key}")
        rest = data_mod.read_idx(m.resolve(spec.train_images), m.resolve(spec.train_labels))
        test = data_mod.read_idx(m.resolve(spec.test_images), m.resolve(spec.test_labels), rest.class_count)
    train, val = data_mod.split(rest, data_mod.SplitSpec(m.val_fraction, True, derive_seed(m.seed, "val_split")))
    return Splits(*data_mod.standardize(train, val, test))


def seeded(cfg: TrainConfig, seed: int, stream: str) -> TrainConfig:
    return dataclasses.replace(cfg, seed=derive_seed(seed, stream))


def pretrain(m: ExperimentManifest, graph: NetworkGraph, splits: Splits, log=None):
    """Train from scratch; returns (weights, metrics, loss log rows)."""
    model = Model.initialize(graph, np.random.default_rng(derive_seed(m.seed, "init")))
    cfg = seeded(m.pretrain, m.seed, "pretrain_batches")
    rows = []

    def record(step, loss):
        rows.append((step, loss))
        if log:
            log(f"pretrain step {step} loss {loss:.4f}")

    train_steps(model, splits.train, cfg, m.pretrain_steps, log_every=100, log=record)
    metrics = {
        "val_accuracy": evaluate(model, splits.val),
        "test_accuracy": evaluate(model, splits.test),
        "steps": m.pretrain_steps,
    }
    return model.state_dict(), metrics, rows


def fitness_context(m: ExperimentManifest, graph, weights, splits: Splits) -> FitnessContext:
    return FitnessContext(graph, weights, splits.train, splits.val,
                          seeded(m.finetune, m.seed, "fitness_batches"))


def run_search(m: ExperimentManifest, graph, weights, splits: Splits, log=None, **overrides) -> SearchResult:
    """Aging-evolution search; ``overrides`` patch SearchConfig fields."""
    cfg = dataclasses.replace(m.search, seed=derive_seed(m.seed, "search"), **overrides)
    ctx = fitness_context(m, graph, weights, splits)

    def report(it, fit, best):
        if log:
            log(f"search iter {it} fitness {fit:.4f} best {best:.4f}")

    return search_mod.search(ctx, cfg, log=report)


# ------------------------------------------------------------------ masks


def legr_masks(graph: NetworkGraph, weights: dict, pair: AffinePair, zetas: list[float]) -> list[FilterMask | None]:
    """Nested masks from one global ranking; None marks infeasible targets."""
    table = ranking.importance(ranking.filter_norms(weights, graph), pair, graph)
    masks: list[FilterMask | None] = []
    for i in range(len(zetas), 0, -1):
        try:
            masks = ranking.prune_by_order(graph, table.order, list(zetas[:i]))
            break
        except InfeasibleTarget:
            continue
    return masks + [None] * (len(zetas) - len(masks))


def baseline_masks(kind: str, graph: NetworkGraph, weights: dict, zetas: list[float]) -> list[FilterMask | None]:
    out = []
    for z in zetas:
        try:
            out.append(baseline_prune(kind, graph, weights, z))
        except InfeasibleTarget:
            out.append(None)
    return out


# ---------------------------------------------------------------- reports


@dataclass
class SweepRow:
    method: str
    zeta: float
    flops: int
    flop_ratio: float
    params_kept: int
    accuracy_after_finetune: float
    finetune_steps: int
    wall_seconds: float
    status: str = "ok"

    def cells(self) -> list[str]:
        return [self.method, repr(self.zeta), str(self.flops), repr(self.flop_ratio), str(self.params_kept),
                repr(self.accuracy_after_finetune), str(self.finetune_steps), f"{self.wall_seconds:.3f}",
                self.status]


@dataclass
class SweepReport:
    rows: list[SweepRow]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for row in self.rows:
            writer.writerow(row.cells())
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SweepReport":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if header != REPORT_HEADER:
            raise ValueError(f"unexpected report header {header}")
        rows = []
        for r in reader:
            rows.append(SweepRow(r[0], float(r[1]), int(r[2]), float(r[3]), int(r[4]), float(r[5]),
                                 int(r[6]), float(r[7]), r[8]))
        return cls(rows)

    def accuracy(self, zeta: float) -> float:
        return next(r.accuracy_after_finetune for r in self.rows if r.zeta == zeta)


def param_count(weights: dict) -> int:
    return int(sum(v.size for p in weights.values() for v in p.values()))


def finetune_pruned(graph, weights, mask, splits: Splits, cfg: TrainConfig, steps: int):
    """Materialize ``mask`` on a copy of ``weights``, fine-tune, and score on test."""
    small_graph, small_weights = apply_mask(graph, weights, mask)
    model = Model(small_graph, small_weights)
    train_steps(model, splits.train, cfg, steps)
    return evaluate(model, splits.test), small_graph, model.state_dict()


def run_sweep(m: ExperimentManifest, graph: NetworkGraph, weights: dict, splits: Splits,
              masks: list[FilterMask | None], method: str, zetas: list[float] | None = None,
              steps: int | None = None, checkpoint_dir: Path | None = None, log=None) -> SweepReport:
    """Fine-tune every mask from the pretrained weights and report test accuracy."""
    zetas = m.sweep.zetas if zetas is None else zetas
    steps = m.sweep.finetune_steps if steps is None else steps
    cfg = seeded(m.finetune, m.seed, "finetune_batches")
    full = total_flops(graph)
    rows = []
    for zeta, mask in zip(zetas, masks):
        start = time.perf_counter()
        if mask is None:
            rows.append(SweepRow(method, zeta, 0, float("nan"), 0, float("nan"), 0, 0.0, "infeasible"))
            if log:
                log(f"{method} zeta={zeta}: infeasible")
            continue
        flops = total_flops(graph, mask)
        acc, small_graph, small_weights = finetune_pruned(graph, weights, mask, splits, cfg, steps)
        if checkpoint_dir is not None:
            checkpoint.save(Path(checkpoint_dir) / f"{method}_z{zeta:.3f}.ckpt", small_graph, small_weights,
                            {"method": method, "zeta": zeta})
        rows.append(SweepRow(method, zeta, flops, flops / full, param_count(small_weights), acc, steps,
                             time.perf_counter() - start))
        if log:
            log(f"{method} zeta={zeta}: flops={flops / full:.3f} acc={acc:.4f}")
    return SweepReport(rows)
