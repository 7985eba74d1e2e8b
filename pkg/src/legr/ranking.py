"""Learned global filter ranking.

Each filter's importance is ``alpha[l] * ||W_i||^2 + kappa[l]`` for its
layer ``l``; coupled filters are ranked by the sum of their importances.
Pruning walks the global ascending order and drops whole groups until the
MAC budget is met.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from legr.archgraph import FilterMask, FingerprintMismatch, FlopCounter, NetworkGraph, mask_from_group_keep


class InfeasibleTarget(ValueError):
    """The FLOP target lies below what the one-channel-per-layer guard allows."""

    def __init__(self, zeta: float, min_ratio: float):
        self.zeta = zeta
        self.min_ratio = min_ratio
        super().__init__(f"target ratio {zeta:.4g} is infeasible; minimal achievable ratio is {min_ratio:.4g}")


@dataclass
class AffinePair:
    alpha: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        self.kappa = np.asarray(self.kappa, dtype=np.float64)
        if self.alpha.shape != self.kappa.shape or self.alpha.ndim != 1:
            raise ValueError("alpha and kappa must be vectors of equal length")
        if not (np.isfinite(self.alpha).all() and np.isfinite(self.kappa).all()):
            raise ValueError("alpha and kappa must be finite")

    @classmethod
    def identity(cls, n_layers: int) -> "AffinePair":
        return cls(np.ones(n_layers), np.zeros(n_layers))

    def copy(self) -> "AffinePair":
        return AffinePair(self.alpha.copy(), self.kappa.copy())

    def __eq__(self, other) -> bool:
        return (isinstance(other, AffinePair) and np.array_equal(self.alpha, other.alpha)
                and np.array_equal(self.kappa, other.kappa))

    def __len__(self) -> int:
        return len(self.alpha)


@dataclass
class ImportanceTable:
    importance: np.ndarray         # per group
    members: list[tuple]           # per group, its (layer, channel) members
    order: np.ndarray              # group ids, ascending importance then group id


def filter_norms(weights: dict, graph: NetworkGraph) -> dict[str, np.ndarray]:
    """Squared l2 norm of every filter (over in_channels x k x k) per prunable layer."""
    norms = {}
    for name in graph.prunable:
        w = weights[name]["weight"]
        norms[name] = np.einsum("oijk,oijk->o", w, w)
    return norms


def _check_pair(pair: AffinePair, graph: NetworkGraph):
    if len(pair) != len(graph.prunable):
        raise ValueError(f"affine pair has {len(pair)} layers, graph has {len(graph.prunable)} prunable layers")


def importance(norms: dict[str, np.ndarray], pair: AffinePair, graph: NetworkGraph) -> ImportanceTable:
    """Transformed importances summed within each coupling group.

    Groups are numbered by their first member in (layer, channel) order, so
    sorting on (importance, group id) breaks ties by layer then channel.
    """
    _check_pair(pair, graph)
    imp = np.zeros(len(graph.groups))
    for li, name in enumerate(graph.prunable):
        gids = graph.channel_groups[name]
        sel = gids >= 0
        np.add.at(imp, gids[sel], pair.alpha[li] * norms[name][sel] + pair.kappa[li])
    order = np.lexsort((np.arange(len(imp)), imp))
    return ImportanceTable(imp, [g.members for g in graph.groups], order)


def _scan(graph: NetworkGraph, order: np.ndarray, targets: list[float]):
    """Walk ``order`` once, removing groups; snapshot the keep-vector the first
    time the running MAC total drops to each target (targets descending)."""
    counter = FlopCounter(graph)
    snapshots = []
    pending = list(targets)
    removed = []
    skipped = []

    def settle():
        while pending and counter.total <= pending[0]:
            snapshots.append((counter.group_keep.copy(), list(removed), list(skipped)))
            pending.pop(0)

    settle()
    for gid in order:
        if not pending:
            break
        if counter.would_empty(int(gid)):
            skipped.append(int(gid))
            continue
        counter.remove(int(gid))
        removed.append(int(gid))
        settle()
    return snapshots, counter.total, pending


def prune_by_order(graph: NetworkGraph, order: np.ndarray, zetas: list[float]):
    """Masks for descending ``zetas`` from one pass over a fixed group order."""
    if any(z <= 0 or z > 1 for z in zetas):
        raise ValueError("zeta must lie in (0, 1]")
    if any(b > a for a, b in zip(zetas, zetas[1:])):
        raise ValueError("zetas must be sorted descending")
    full = FlopCounter(graph).total
    targets = [z * full for z in zetas]
    snapshots, floor_total, pending = _scan(graph, order, targets)
    if pending:
        raise InfeasibleTarget(zetas[len(snapshots)], floor_total / full)
    return [mask_from_group_keep(graph, keep) for keep, _, _ in snapshots]


def legr_prune(graph: NetworkGraph, weights: dict, pair: AffinePair, zeta: float,
               norms: dict | None = None) -> FilterMask:
    """Drop bottom-ranked groups until MACs <= zeta * full MACs.

    Groups whose removal would leave some layer without channels are skipped
    and the scan continues.
    """
    return nested_masks(graph, weights, pair, [zeta], norms)[0]


def nested_masks(graph: NetworkGraph, weights: dict, pair: AffinePair, zetas: list[float],
                 norms: dict | None = None) -> list[FilterMask]:
    """One mask per target; smaller targets keep subsets of larger ones."""
    norms = filter_norms(weights, graph) if norms is None else norms
    table = importance(norms, pair, graph)
    return prune_by_order(graph, table.order, list(zetas))


# ------------------------------------------------------------------ files


def format_pair(graph: NetworkGraph, pair: AffinePair) -> str:
    _check_pair(pair, graph)
    doc = {
        "format": "legr-affine-pair/1",
        "graph": graph.fingerprint(),
        "layers": [{"layer_name": name, "alpha": float(a), "kappa": float(k)}
                   for name, a, k in zip(graph.prunable, pair.alpha, pair.kappa)],
    }
    return json.dumps(doc, indent=2) + "\n"


def parse_pair(graph: NetworkGraph, text: str) -> AffinePair:
    doc = json.loads(text)
    if doc.get("format") != "legr-affine-pair/1":
        raise ValueError("not a legr-affine-pair/1 document")
    if doc.get("graph") != graph.fingerprint():
        raise FingerprintMismatch(
            f"pair was learned for graph {doc.get('graph')}, this graph is {graph.fingerprint()}")
    names = [rec["layer_name"] for rec in doc["layers"]]
    if names != graph.prunable:
        raise FingerprintMismatch(f"pair layers {names} do not match {graph.prunable}")
    return AffinePair([rec["alpha"] for rec in doc["layers"]], [rec["kappa"] for rec in doc["layers"]])


def save_pair(path, graph: NetworkGraph, pair: AffinePair) -> None:
    Path(path).write_text(format_pair(graph, pair))


def load_pair(path, graph: NetworkGraph) -> AffinePair:
    return parse_pair(graph, Path(path).read_text())
