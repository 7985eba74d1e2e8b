"""Regularized (aging) evolution over affine pairs.

Fitness of a pair is the validation accuracy of the network pruned with it
at the lowest FLOP target, after a short fine-tune that always restarts
from the pretrained weights.
"""

from __future__ import annotations

import csv
import io
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from legr.archgraph import NetworkGraph, apply_mask
from legr.nn import Model, TrainConfig, evaluate, train_steps
from legr.ranking import AffinePair, filter_norms, legr_prune

HISTORY_HEADER = ["iteration", "candidate_fitness", "best_so_far", "seconds_elapsed"]


@dataclass
class SearchConfig:
    zeta_hat_low: float = 0.2
    sigma: float = 0.1
    total_iters: int = 400
    sample_size: int = 16
    mutation_percent: float = 10.0
    pool_size: int = 64
    tau_hat: int = 200
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.zeta_hat_low <= 1.0:
            raise ValueError("zeta_hat_low must lie in (0, 1]")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if not 0.0 < self.mutation_percent <= 100.0:
            raise ValueError("mutation_percent must lie in (0, 100]")
        if not 1 <= self.sample_size <= self.pool_size:
            raise ValueError("need 1 <= sample_size <= pool_size")
        if self.tau_hat < 0:
            raise ValueError("tau_hat must be >= 0")


@dataclass
class Candidate:
    pair: AffinePair
    fitness: float
    age: int


class CandidatePool:
    """FIFO of at most ``capacity`` candidates; a full pool evicts its oldest."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._queue: deque[Candidate] = deque()
        self._next_age = 0
        self.evicted: list[int] = []

    def __len__(self) -> int:
        return len(self._queue)

    def __iter__(self):
        return iter(self._queue)

    def replace_oldest_with(self, pair: AffinePair, fitness: float) -> Candidate:
        if len(self._queue) == self.capacity:
            self.evicted.append(self._queue.popleft().age)
        cand = Candidate(pair, fitness, self._next_age)
        self._next_age += 1
        self._queue.append(cand)
        return cand

    def sample(self, k: int, rng: np.random.Generator) -> list[Candidate]:
        idx = rng.choice(len(self._queue), size=k, replace=False)
        return [self._queue[i] for i in sorted(idx)]


def layer_norm_std(weights: dict, graph: NetworkGraph, layer: str) -> float:
    """Population standard deviation of the squared filter norms of ``layer``."""
    w = weights[layer]["weight"]
    norms = np.einsum("oijk,oijk->o", w, w)
    return float(np.std(norms))


def mutate(pair: AffinePair, config: SearchConfig, stds: np.ndarray, rng: np.random.Generator) -> AffinePair:
    """Perturb a random ``mutation_percent`` of layers (at least one).

    Chosen layers get ``alpha *= exp(N(0, sigma^2))`` and
    ``kappa += N(0, std_l^2)``.
    """
    n = len(pair)
    k = min(n, max(1, int(np.floor(config.mutation_percent * n / 100.0 + 0.5))))
    layers = np.sort(rng.choice(n, size=k, replace=False))
    alpha, kappa = pair.alpha.copy(), pair.kappa.copy()
    alpha[layers] *= np.exp(rng.normal(0.0, config.sigma, size=k))
    kappa[layers] += rng.normal(0.0, 1.0, size=k) * stds[layers]
    return AffinePair(alpha, kappa)


@dataclass
class FitnessContext:
    """Everything fitness() needs besides the pair; built once per search."""

    graph: NetworkGraph
    weights: dict
    train: object
    val: object
    finetune: TrainConfig
    norms: dict = field(default=None)

    def __post_init__(self):
        if self.norms is None:
            self.norms = filter_norms(self.weights, self.graph)


def fitness(pair: AffinePair, ctx: FitnessContext, zeta: float, tau_hat: int) -> float:
    """Validation accuracy after pruning at ``zeta`` and ``tau_hat`` fine-tune steps.

    The data order of the fine-tune is fixed by ``ctx.finetune.seed`` so all
    candidates see the same batches.
    """
    mask = legr_prune(ctx.graph, ctx.weights, pair, zeta, norms=ctx.norms)
    small_graph, small_weights = apply_mask(ctx.graph, ctx.weights, mask)
    model = Model(small_graph, small_weights)
    train_steps(model, ctx.train, ctx.finetune, tau_hat)
    return evaluate(model, ctx.val)


@dataclass
class SearchResult:
    best: AffinePair
    best_fitness: float
    history: list[tuple[int, float, float, float]]
    pool: CandidatePool

    def history_csv(self, with_time: bool = True) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(HISTORY_HEADER if with_time else HISTORY_HEADER[:3])
        for it, fit, best, secs in self.history:
            row = [it, repr(fit), repr(best)]
            writer.writerow(row + [f"{secs:.3f}"] if with_time else row)
        return buf.getvalue()


def search(ctx: FitnessContext, config: SearchConfig, evaluate_fn=None, log=None) -> SearchResult:
    """Learn an affine pair by aging evolution.

    While the pool holds fewer than ``sample_size`` candidates, each
    iteration mutates the identity pair; afterwards it samples
    ``sample_size`` candidates without replacement, mutates the fittest and
    pushes the child, evicting the oldest when full.
    """
    if config.total_iters <= 0:
        raise ValueError("total_iters must be positive")
    evaluate_fn = evaluate_fn or (lambda p: fitness(p, ctx, config.zeta_hat_low, config.tau_hat))
    rng = np.random.default_rng(config.seed)
    stds = np.array([layer_norm_std(ctx.weights, ctx.graph, name) for name in ctx.graph.prunable])
    n_layers = len(ctx.graph.prunable)
    pool = CandidatePool(config.pool_size)
    best, best_fit = None, -np.inf
    history = []
    start = time.perf_counter()
    for it in range(config.total_iters):
        parent = AffinePair.identity(n_layers)
        if len(pool) >= config.sample_size:
            sampled = pool.sample(config.sample_size, rng)
            parent = max(sampled, key=lambda c: (c.fitness, -c.age)).pair
        child = mutate(parent, config, stds, rng)
        fit = float(evaluate_fn(child))
        pool.replace_oldest_with(child, fit)
        if fit > best_fit:
            best, best_fit = child, fit
        history.append((it, fit, best_fit, time.perf_counter() - start))
        if log:
            log(it, fit, best_fit)
    return SearchResult(best, best_fit, history, pool)
