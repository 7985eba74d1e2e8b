"""Reference pruners: one keep-fraction for every layer, and plain global
magnitude ranking."""

from __future__ import annotations

import numpy as np

from legr.archgraph import FilterMask, FlopCounter, NetworkGraph, mask_from_group_keep, total_flops
from legr.ranking import AffinePair, InfeasibleTarget, filter_norms, importance, legr_prune

BASELINE_KINDS = ("uniform", "local_norm_uniform", "global_norm")


def _group_norm_sums(graph: NetworkGraph, weights: dict) -> np.ndarray:
    norms = filter_norms(weights, graph)
    return importance(norms, AffinePair.identity(len(graph.prunable)), graph).importance


def uniform_mask(graph: NetworkGraph, weights: dict, fraction: float, group_score=None) -> FilterMask:
    """Keep floor(fraction * C_l) (at least one) top-scoring channels per layer.

    A group survives only if every layer it spans keeps it; coupled layers
    share the same groups, so they agree.
    """
    score = _group_norm_sums(graph, weights) if group_score is None else group_score
    keep = np.ones(len(graph.groups), dtype=bool)
    for name in graph.prunable:
        gids = graph.channel_groups[name]
        free = gids[gids >= 0]
        n_fixed = int((gids < 0).sum())
        n_keep = max(1, int(np.floor(fraction * len(gids) + 1e-9))) - n_fixed
        n_keep = max(n_keep, 0 if n_fixed else 1)
        # ties keep the higher group id, matching the global removal order
        order = free[np.lexsort((-free, -score[free]))]
        keep[order[n_keep:]] = False
    return mask_from_group_keep(graph, keep)


def uniform_prune(graph: NetworkGraph, weights: dict, zeta: float) -> FilterMask:
    """Largest per-layer keep-fraction j / max_channels meeting the MAC budget."""
    if not 0.0 < zeta <= 1.0:
        raise ValueError("zeta must lie in (0, 1]")
    score = _group_norm_sums(graph, weights)
    full = FlopCounter(graph).total
    target = zeta * full
    granules = max(graph.layer(n).out_channels for n in graph.prunable)

    def fits(j):
        mask = uniform_mask(graph, weights, j / granules, score)
        return total_flops(graph, mask) <= target, mask

    ok, best = fits(0)
    if not ok:
        raise InfeasibleTarget(zeta, total_flops(graph, best) / full)
    lo, hi = 0, granules  # fits(lo) holds; search the largest j that fits
    ok, mask = fits(hi)
    if ok:
        return mask
    while hi - lo > 1:
        mid = (lo + hi) // 2
        ok, mask = fits(mid)
        if ok:
            lo, best = mid, mask
        else:
            hi = mid
    return best


def global_norm_prune(graph: NetworkGraph, weights: dict, zeta: float) -> FilterMask:
    """Global magnitude ranking: the identity affine pair."""
    return legr_prune(graph, weights, AffinePair.identity(len(graph.prunable)), zeta)


def baseline_prune(kind: str, graph: NetworkGraph, weights: dict, zeta: float) -> FilterMask:
    if kind in ("uniform", "local_norm_uniform"):
        return uniform_prune(graph, weights, zeta)
    if kind == "global_norm":
        return global_norm_prune(graph, weights, zeta)
    raise ValueError(f"unknown baseline kind {kind!r}; expected one of {BASELINE_KINDS}")
