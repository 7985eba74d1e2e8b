import time

import numpy as np
import pytest

from legr.archgraph import graph_from_text
from legr.data import SplitSpec, split, synth_shapes
from legr.nn import Model, TrainConfig, evaluate, init_params, train_steps
from legr.ranking import AffinePair
from legr.search import (HISTORY_HEADER, CandidatePool, FitnessContext, SearchConfig, fitness, layer_norm_std,
                         mutate, search)

from graphs import CHAIN
from oracles import two_pass_std

ARCH = """format: legr-arch/1
name: tiny
input: 1x16x16

layer conv1 kind=conv k=3 stride=2 pad=1 out_channels=6
layer ss1 kind=scale_shift
layer relu1 kind=relu
layer conv2 kind=conv k=3 stride=2 pad=1 out_channels=8
layer ss2 kind=scale_shift
layer relu2 kind=relu
layer conv3 kind=conv k=3 stride=1 pad=1 out_channels=8
layer ss3 kind=scale_shift
layer relu3 kind=relu
layer gap kind=gap
layer fc kind=dense out_channels=3 bias=1
layer loss kind=softmax_ce
"""


@pytest.fixture(scope="module")
def ctx():
    data = synth_shapes(300, 3, 16, seed=0, noise=0.2)
    train, val = split(data, SplitSpec(0.2, True, 1))
    graph = graph_from_text(ARCH)
    model = Model.initialize(graph, np.random.default_rng(0))
    train_steps(model, train, TrainConfig(learning_rate=0.01, batch_size=16, seed=2), 150)
    return FitnessContext(graph, model.state_dict(), train, val,
                          TrainConfig(learning_rate=0.005, batch_size=16, seed=3))


# --------------------------------------------------------------------- std


def _layer_with_norms(sq_norms):
    g = graph_from_text(f"format: legr-arch/1\ninput: 1x4x4\n"
                        f"layer conv1 kind=conv k=1 out_channels={len(sq_norms)}\n"
                        "layer gap kind=gap\nlayer fc kind=dense out_channels=2\nlayer loss kind=softmax_ce\n")
    w = init_params(g, np.random.default_rng(0))
    w["conv1"]["weight"][:, 0, 0, 0] = np.sqrt(sq_norms)
    return g, w


def test_std_equal_norms_is_zero():
    g, w = _layer_with_norms([2.0, 2.0, 2.0])
    assert layer_norm_std(w, g, "conv1") == 0.0


def test_std_two_point_population():
    g, w = _layer_with_norms([1.0, 3.0])
    assert layer_norm_std(w, g, "conv1") == pytest.approx(1.0, abs=1e-12)


def test_std_matches_two_pass():
    g = graph_from_text(CHAIN.format(a=7, b=5, c=3))
    w = init_params(g, np.random.default_rng(3))
    for name in g.prunable:
        sq = [float(np.sum(f * f)) for f in w[name]["weight"]]
        assert layer_norm_std(w, g, name) == pytest.approx(two_pass_std(sq), abs=1e-12)


# ------------------------------------------------------------------ mutate


def test_mutate_degenerate_noise():
    pair = AffinePair([1.0, 2.0, 3.0], [0.5, -1.0, 0.0])
    out = mutate(pair, SearchConfig(sigma=0.0, mutation_percent=100), np.zeros(3), np.random.default_rng(0))
    assert out == pair


def test_mutate_all_layers_deterministic():
    pair = AffinePair.identity(5)
    cfg = SearchConfig(mutation_percent=100)
    stds = np.ones(5)
    a = mutate(pair, cfg, stds, np.random.default_rng(7))
    b = mutate(pair, cfg, stds, np.random.default_rng(7))
    assert a == b
    assert np.all(a.alpha != 1.0) and np.all(a.kappa != 0.0)
    assert pair == AffinePair.identity(5)


@pytest.mark.parametrize("u,n,expected", [(10, 8, 1), (10, 3, 1), (50, 8, 4), (25, 10, 3), (100, 4, 4)])
def test_mutate_touches_u_percent(u, n, expected):
    cfg = SearchConfig(mutation_percent=u)
    out = mutate(AffinePair.identity(n), cfg, np.ones(n), np.random.default_rng(1))
    changed = (out.alpha != 1.0) | (out.kappa != 0.0)
    assert changed.sum() == expected


def test_mutation_moments_monte_carlo():
    rng = np.random.default_rng(11)
    cfg = SearchConfig(sigma=0.1, mutation_percent=100)
    stds = np.array([0.5, 2.0])
    logs, shifts = [], []
    for _ in range(10_000):
        out = mutate(AffinePair.identity(2), cfg, stds, rng)
        logs.append(np.log(out.alpha))
        shifts.append(out.kappa)
    logs, shifts = np.array(logs), np.array(shifts)
    assert np.all(np.abs(logs.mean(axis=0)) <= 0.01)
    assert np.all(np.abs(logs.std(axis=0) / 0.1 - 1) <= 0.10)
    np.testing.assert_allclose(shifts.std(axis=0), stds, rtol=0.05)


def test_mutation_layers_uniform():
    rng = np.random.default_rng(2)
    cfg = SearchConfig(mutation_percent=10)
    hits = np.zeros(10)
    for _ in range(5000):
        out = mutate(AffinePair.identity(10), cfg, np.ones(10), rng)
        hits += out.alpha != 1.0
    # each layer chosen with probability 1/10; 5-sigma band
    assert np.all(np.abs(hits - 500) < 5 * np.sqrt(5000 * 0.1 * 0.9))


# ------------------------------------------------------------------- config


@pytest.mark.parametrize("kwargs", [dict(sample_size=10, pool_size=5), dict(mutation_percent=0),
                                    dict(mutation_percent=101), dict(zeta_hat_low=0.0), dict(zeta_hat_low=1.5),
                                    dict(tau_hat=-1)])
def test_config_invariants(kwargs):
    with pytest.raises(ValueError):
        SearchConfig(**kwargs)


# -------------------------------------------------------------------- pool


def test_pool_appends_then_evicts_oldest():
    pool = CandidatePool(3)
    for i in range(5):
        pool.replace_oldest_with(AffinePair.identity(1), float(i))
        assert len(pool) <= 3
    assert [c.age for c in pool] == [2, 3, 4]
    assert pool.evicted == [0, 1]


def test_pool_sample_without_replacement():
    pool = CandidatePool(6)
    for i in range(6):
        pool.replace_oldest_with(AffinePair.identity(1), 0.0)
    for seed in range(20):
        ages = [c.age for c in pool.sample(6, np.random.default_rng(seed))]
        assert sorted(ages) == list(range(6))


# ------------------------------------------------------------------ fitness


def test_fitness_noop_pipeline(ctx):
    base = evaluate(Model(ctx.graph, ctx.weights), ctx.val)
    assert fitness(AffinePair.identity(3), ctx, 1.0, 0) == base


def test_fitness_deterministic_and_pure(ctx):
    before = {n: {k: v.copy() for k, v in p.items()} for n, p in ctx.weights.items()}
    pair = AffinePair([1.0, 0.5, 2.0], [0.0, 0.1, -0.1])
    a = fitness(pair, ctx, 0.4, 20)
    b = fitness(pair, ctx, 0.4, 20)
    assert a == b and 0.0 <= a <= 1.0
    for n, p in before.items():
        for k, v in p.items():
            assert np.array_equal(v, ctx.weights[n][k])


# ------------------------------------------------------------------- search


def _counting(pairs):
    def fn(pair):
        pairs.append(pair)
        return float(np.tanh(pair.alpha.sum() - pair.kappa.sum()) * 0.5 + 0.5)
    return fn


def test_single_iteration(ctx):
    seen = []
    result = search(ctx, SearchConfig(total_iters=1, sample_size=2, pool_size=4), evaluate_fn=_counting(seen))
    assert len(seen) == 1 and len(result.pool) == 1
    assert result.best == seen[0]
    assert len(result.history) == 1
    assert result.history_csv().splitlines()[0] == ",".join(HISTORY_HEADER)


def test_zero_iterations_rejected(ctx):
    with pytest.raises(ValueError):
        search(ctx, SearchConfig(total_iters=0))


def test_search_bookkeeping(ctx):
    seen = []
    cfg = SearchConfig(total_iters=40, sample_size=4, pool_size=8, mutation_percent=34, seed=5)
    result = search(ctx, cfg, evaluate_fn=_counting(seen))
    assert len(seen) == 40
    best = [h[2] for h in result.history]
    assert all(b2 >= b1 for b1, b2 in zip(best, best[1:]))
    assert best[-1] == max(h[1] for h in result.history) == result.best_fitness
    assert len(result.pool) == 8
    # once full, every iteration evicts the minimum age
    assert result.pool.evicted == list(range(40 - 8))
    # warm-up candidates are single mutations of the identity pair
    k = 1  # round(0.34 * 3)
    for pair in seen[:4]:
        assert ((pair.alpha != 1.0) | (pair.kappa != 0.0)).sum() == k


def test_search_bit_identical_history(ctx):
    cfg = SearchConfig(total_iters=6, sample_size=2, pool_size=4, tau_hat=5, zeta_hat_low=0.5, seed=9)
    a = search(ctx, cfg)
    b = search(ctx, cfg)
    assert a.history_csv(with_time=False) == b.history_csv(with_time=False)
    assert a.best == b.best
    assert [c.pair for c in a.pool] == [c.pair for c in b.pool]


def test_search_time_scales_with_iterations(ctx):
    def timed(iters):
        start = time.perf_counter()
        search(ctx, SearchConfig(total_iters=iters, sample_size=2, pool_size=4, tau_hat=30, zeta_hat_low=0.5))
        return time.perf_counter() - start

    timed(1)  # warm caches
    ratio = timed(8) / timed(4)
    assert 1.0 <= ratio <= 3.0
