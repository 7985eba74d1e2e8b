"""Slow, obviously-correct reference implementations used as test oracles.

Nothing here calls into the cost model, the ranking scan, or the engine
kernels; each oracle recomputes its answer from first principles.
"""

import numpy as np


# ------------------------------------------------------------- convolution


def naive_conv2d(x, w, b=None, stride=1, pad=0, depthwise=False, keep_in=None, keep_out=None):
    """Direct 7-loop convolution on NCHW input. Returns (output, MAC count).

    ``keep_in``/``keep_out`` restrict the loops to surviving channels; the
    counter increments once per multiply actually performed.
    """
    n, c, h, wd = x.shape
    out_c, _, k, _ = w.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    keep_in = np.ones(c, bool) if keep_in is None else keep_in
    keep_out = np.ones(out_c, bool) if keep_out is None else keep_out
    out = np.zeros((n, out_c, ho, wo))
    macs = 0
    for bi in range(n):
        for o in range(out_c):
            if not keep_out[o]:
                continue
            in_range = [o] if depthwise else range(c)
            for i in in_range:
                if not keep_in[i]:
                    continue
                wi = 0 if depthwise else i
                for y in range(ho):
                    for xx in range(wo):
                        acc = 0.0
                        for a in range(k):
                            for bb in range(k):
                                iy, ix = y * stride + a - pad, xx * stride + bb - pad
                                macs += 1
                                if 0 <= iy < h and 0 <= ix < wd:
                                    acc += x[bi, i, iy, ix] * w[o, wi, a, bb]
                        out[bi, o, y, xx] += acc
            if b is not None:
                out[bi, o] += b[o]
    return out, macs // n


def naive_dense(x, w, b=None, keep_in=None):
    n, c = x.shape
    keep_in = np.ones(c, bool) if keep_in is None else keep_in
    out = np.zeros((n, w.shape[0]))
    macs = 0
    for bi in range(n):
        for o in range(w.shape[0]):
            for i in range(c):
                if keep_in[i]:
                    out[bi, o] += x[bi, i] * w[o, i]
                    macs += 1
            if b is not None:
                out[bi, o] += b[o]
    return out, macs // n


# ------------------------------------------------------------------ MACs


def instrumented_macs(graph, weights, keep: dict, x):
    """Walk ``graph`` with naive kernels, skipping pruned channels, counting MACs.

    ``keep`` maps prunable layers to their output keep vectors; the keep
    vector of every other tensor is propagated structurally.
    """
    acts = {"input": x}
    kept = {"input": np.ones(x.shape[1], bool)}
    total = 0
    for layer in graph.layers:
        src = layer.inputs[0]
        if layer.kind in ("conv", "dwconv"):
            p = weights[layer.name]
            acts[layer.name], macs = naive_conv2d(acts[src], p["weight"], p.get("bias"), layer.stride, layer.pad,
                                                  layer.kind == "dwconv", kept[src], keep[layer.name])
            kept[layer.name] = keep[layer.name]
            total += macs
        elif layer.kind == "dense":
            p = weights[layer.name]
            acts[layer.name], macs = naive_dense(acts[src], p["weight"], p.get("bias"), kept[src])
            kept[layer.name] = np.ones(layer.out_channels, bool)
            total += macs
        elif layer.kind == "add":
            acts[layer.name] = sum(acts[s] for s in layer.inputs)
            kept[layer.name] = kept[src]
        elif layer.kind == "relu":
            acts[layer.name] = np.maximum(acts[src], 0)
            kept[layer.name] = kept[src]
        elif layer.kind == "maxpool":
            a = acts[src]
            h, w = a.shape[2] // 2 * 2, a.shape[3] // 2 * 2
            a = a[:, :, :h, :w].reshape(a.shape[0], a.shape[1], h // 2, 2, w // 2, 2)
            acts[layer.name] = a.max(axis=(3, 5))
            kept[layer.name] = kept[src]
        elif layer.kind == "gap":
            acts[layer.name] = acts[src].mean(axis=(2, 3))
            kept[layer.name] = kept[src]
        elif layer.kind == "scale_shift":
            p = weights[layer.name]
            acts[layer.name] = acts[src] * p["scale"][:, None, None] + p["shift"][:, None, None]
            kept[layer.name] = kept[src]
    return total


def analytic_macs(graph, keep: dict) -> int:
    """Closed-form MACs from kept counts, recomputed from scratch."""
    kept = {"input": graph.input_shape[0]}
    total = 0
    for layer in graph.layers:
        src = kept.get(layer.inputs[0])
        if layer.kind == "conv":
            kept[layer.name] = int(keep[layer.name].sum())
            total += layer.out_hw[0] * layer.out_hw[1] * layer.k ** 2 * src * kept[layer.name]
        elif layer.kind == "dwconv":
            kept[layer.name] = int(keep[layer.name].sum())
            total += layer.out_hw[0] * layer.out_hw[1] * layer.k ** 2 * kept[layer.name]
        elif layer.kind == "dense":
            kept[layer.name] = layer.out_channels
            total += src * layer.out_channels
        else:
            kept[layer.name] = src
    return total


# --------------------------------------------------------------- pruning


def group_members(graph):
    """Coupling groups recomputed as (layer, channel) lists ordered by first member."""
    groups = {}
    for name in graph.prunable:
        for ch, gid in enumerate(graph.channel_groups[name]):
            if gid >= 0:
                groups.setdefault(int(gid), []).append((name, ch))
    return [groups[g] for g in sorted(groups)]


def brute_force_prune(graph, weights, zeta, alpha=None, kappa=None):
    """Global ranking by (transformed) squared norms, greedy removal with full
    MAC recomputation after every step; groups that would empty a layer are
    skipped. Returns the keep dict, or None if the target is unreachable."""
    layers = list(graph.prunable)
    alpha = np.ones(len(layers)) if alpha is None else alpha
    kappa = np.zeros(len(layers)) if kappa is None else kappa
    li = {name: i for i, name in enumerate(layers)}
    groups = group_members(graph)
    scores = []
    for g, members in enumerate(groups):
        s = 0.0
        for name, ch in members:
            w = weights[name]["weight"][ch]
            s += alpha[li[name]] * float(np.sum(w * w)) + kappa[li[name]]
        scores.append((s, g))
    scores.sort()
    keep = {name: np.ones(graph.layer(name).out_channels, bool) for name in layers}
    full = analytic_macs(graph, keep)
    target = zeta * full
    if analytic_macs(graph, keep) <= target:
        return keep
    for _, g in scores:
        trial = {k: v.copy() for k, v in keep.items()}
        for name, ch in groups[g]:
            trial[name][ch] = False
        if any(not v.any() for v in trial.values()):
            continue
        keep = trial
        if analytic_macs(graph, keep) <= target:
            return keep
    return None


def prefix_oracle(graph, weights, zeta):
    """Shortest prefix of the ascending-norm order whose removal meets the target
    (exhaustive over prefix lengths; assumes no layer empties)."""
    groups = group_members(graph)
    scores = sorted((sum(float(np.sum(weights[n]["weight"][c] ** 2)) for n, c in m), g)
                    for g, m in enumerate(groups))
    full_keep = {name: np.ones(graph.layer(name).out_channels, bool) for name in graph.prunable}
    full = analytic_macs(graph, full_keep)
    for length in range(len(scores) + 1):
        keep = {k: v.copy() for k, v in full_keep.items()}
        for _, g in scores[:length]:
            for name, ch in groups[g]:
                keep[name][ch] = False
        if analytic_macs(graph, keep) <= zeta * full:
            return keep
    return None


def zeroed_weights(graph, weights, keep: dict):
    """Full-size weights with every pruned channel's producer parameters set to 0."""
    out = {name: {k: v.copy() for k, v in p.items()} for name, p in weights.items()}
    for layer in graph.layers:
        if layer.kind in ("conv", "dwconv"):
            drop = ~keep[layer.name]
            out[layer.name]["weight"][drop] = 0.0
            if "bias" in out[layer.name]:
                out[layer.name]["bias"][drop] = 0.0
        elif layer.kind == "scale_shift":
            src_keep = _tensor_keep(graph, keep, layer.inputs[0])
            out[layer.name]["scale"][~src_keep] = 0.0
            out[layer.name]["shift"][~src_keep] = 0.0
    return out


def _tensor_keep(graph, keep, name):
    while name not in keep:
        if name == "input":
            return np.ones(graph.input_shape[0], bool)
        name = graph.layer(name).inputs[0]
    return keep[name]


# --------------------------------------------------------------- numerics


def finite_difference(f, x, eps=1e-4, idx=None):
    """Central differences of scalar ``f`` w.r.t. array ``x`` (modified in place, restored)."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in (range(flat.size) if idx is None else idx):
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * eps)
    return grad


def rel_error(a, b):
    return np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))


def two_pass_std(values):
    values = [float(v) for v in values]
    mean = sum(values) / len(values)
    return (sum((v - mean) ** 2 for v in values) / len(values)) ** 0.5
