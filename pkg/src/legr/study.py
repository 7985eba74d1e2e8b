"""Desk-scale studies: the full pipeline and the multi-seed trend comparison
(LeGR vs. uniform, search target robustness, short fine-tune ablation)."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from legr import experiment as ex
from legr.archgraph import load_graph
from legr.manifest import ExperimentManifest
from legr.ranking import AffinePair
from legr.search import SearchResult, fitness


@dataclass
class PipelineResult:
    pretrain_metrics: dict
    search: SearchResult
    legr: ex.SweepReport
    baseline: ex.SweepReport
    seconds: float


def run_pipeline(m: ExperimentManifest, baseline: str = "uniform", log=None, graph=None,
                 splits=None, weights=None) -> PipelineResult:
    """pretrain -> one search at min(zetas) -> LeGR sweep -> baseline sweep."""
    start = time.perf_counter()
    graph = graph or load_graph(m.resolve(m.architecture))
    splits = splits or ex.prepare_data(m)
    metrics = {}
    if weights is None:
        weights, metrics, _ = ex.pretrain(m, graph, splits)
        if log:
            log(f"seed {m.seed}: pretrained {metrics}")
    result = ex.run_search(m, graph, weights, splits)
    if log:
        log(f"seed {m.seed}: search best fitness {result.best_fitness:.4f}")
    legr = ex.run_sweep(m, graph, weights, splits, ex.legr_masks(graph, weights, result.best, m.sweep.zetas),
                        "legr", log=log)
    base = ex.run_sweep(m, graph, weights, splits, ex.baseline_masks(baseline, graph, weights, m.sweep.zetas),
                        baseline, log=log)
    return PipelineResult(metrics, result, legr, base, time.perf_counter() - start)


@dataclass
class TrendTrial:
    seed: int
    pipeline: PipelineResult
    # ranking searched at zeta_hat=0.5, pruned and fine-tuned at zeta=0.5
    acc_half_from_half: float
    # ranking searched at the lowest target with tau_hat=0
    acc_low_tau0: float
    seconds: float = 0.0
    extra: dict = field(default_factory=dict)


def trend_trial(m: ExperimentManifest, mid_zeta: float = 0.5, identity_tau: int = 200, log=None) -> TrendTrial:
    start = time.perf_counter()
    graph = load_graph(m.resolve(m.architecture))
    splits = ex.prepare_data(m)
    weights, metrics, _ = ex.pretrain(m, graph, splits)
    pretrain_seconds = time.perf_counter() - start
    if log:
        log(f"seed {m.seed}: pretrained {metrics} ({pretrain_seconds:.0f}s)")
    pipe = run_pipeline(m, log=log, graph=graph, splits=splits, weights=weights)
    pipe.pretrain_metrics = metrics
    low = min(m.sweep.zetas)
    extra = {"pretrain_seconds": pretrain_seconds}

    def single(result: SearchResult, zeta: float) -> float:
        report = ex.run_sweep(m, graph, weights, splits, ex.legr_masks(graph, weights, result.best, [zeta]),
                              "legr", zetas=[zeta])
        return report.rows[0].accuracy_after_finetune

    t0 = time.perf_counter()
    at_mid = ex.run_search(m, graph, weights, splits, zeta_hat_low=mid_zeta)
    acc_mid = single(at_mid, mid_zeta)
    t1 = time.perf_counter()
    tau0 = ex.run_search(m, graph, weights, splits, tau_hat=0)
    acc_tau0 = single(tau0, low)
    extra["mid_seconds"], extra["tau0_seconds"] = t1 - t0, time.perf_counter() - t1
    ctx = ex.fitness_context(m, graph, weights, splits)
    identity = AffinePair.identity(len(graph.prunable))
    extra["identity_fitness"] = {tau: fitness(identity, ctx, low, tau) for tau in (0, identity_tau)}
    trial = TrendTrial(m.seed, pipe, acc_mid, acc_tau0, time.perf_counter() - start, extra)
    if log:
        log(f"seed {m.seed}: legr {[r.accuracy_after_finetune for r in pipe.legr.rows]} "
            f"uniform {[r.accuracy_after_finetune for r in pipe.baseline.rows]} "
            f"mid-from-mid {acc_mid:.4f} tau0 {acc_tau0:.4f} ({trial.seconds:.0f}s)")
    return trial


def summarize(trials: list[TrendTrial], zetas: list[float], mid_zeta: float = 0.5) -> dict:
    """Seed means used by the trend checks."""
    low = min(zetas)
    legr = {z: float(np.mean([t.pipeline.legr.accuracy(z) for t in trials])) for z in zetas}
    uniform = {z: float(np.mean([t.pipeline.baseline.accuracy(z) for t in trials])) for z in zetas}
    return {
        "legr": legr,
        "uniform": uniform,
        "mid_from_low": legr[mid_zeta],
        "mid_from_mid": float(np.mean([t.acc_half_from_half for t in trials])),
        "low_tau_hat": legr[low],
        "low_tau0": float(np.mean([t.acc_low_tau0 for t in trials])),
        "pipeline_seconds": float(sum(t.extra.get("pretrain_seconds", 0.0) + t.pipeline.seconds for t in trials)),
        "search_improved": int(sum(
            t.pipeline.search.best_fitness > np.mean([h[1] for h in t.pipeline.search.history[:10]])
            for t in trials)),
        "identity_tau_helps": int(sum(
            max(t.extra["identity_fitness"].items())[1] > t.extra["identity_fitness"][0]
            for t in trials if "identity_fitness" in t.extra)),
    }
