"""A trainable network built from a NetworkGraph.

``Model.loss`` runs the forward pass and records a tape; ``Model.backward``
replays it in reverse, accumulating into each ``Param.grad``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from legr.archgraph import NetworkGraph
from legr.nn import functional as F


class TapeError(RuntimeError):
    """backward() called without a recorded forward pass."""


@dataclass
class Param:
    value: np.ndarray
    grad: np.ndarray = field(init=False)
    momentum: np.ndarray = field(init=False)

    def __post_init__(self):
        self.value = np.ascontiguousarray(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.momentum = np.zeros_like(self.value)


@dataclass
class LayerParams:
    """Named parameters of one layer ("weight"/"bias" or "scale"/"shift")."""

    params: dict[str, Param]

    @property
    def weights(self) -> np.ndarray:
        return self.params["weight"].value

    @property
    def bias(self) -> np.ndarray | None:
        p = self.params.get("bias")
        return None if p is None else p.value

    def __iter__(self):
        return iter(self.params.values())


def init_params(graph: NetworkGraph, rng: np.random.Generator) -> dict[str, dict[str, np.ndarray]]:
    """He-normal convolutions, 1/sqrt(fan_in) dense, identity scale-shift."""
    weights = {}
    for layer in graph.layers:
        if layer.kind == "conv":
            fan_in = layer.in_channels * layer.k * layer.k
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), (layer.out_channels, layer.in_channels, layer.k, layer.k))
        elif layer.kind == "dwconv":
            w = rng.normal(0.0, np.sqrt(2.0 / (layer.k * layer.k)), (layer.out_channels, 1, layer.k, layer.k))
        elif layer.kind == "dense":
            w = rng.normal(0.0, np.sqrt(1.0 / layer.in_channels), (layer.out_channels, layer.in_channels))
        elif layer.kind == "scale_shift":
            weights[layer.name] = {"scale": np.ones(layer.out_channels), "shift": np.zeros(layer.out_channels)}
            continue
        else:
            continue
        weights[layer.name] = {"weight": w}
        if layer.bias:
            weights[layer.name]["bias"] = np.zeros(layer.out_channels)
    return weights


def expected_param_shapes(graph: NetworkGraph) -> dict[str, dict[str, tuple]]:
    shapes = {}
    for layer in graph.layers:
        if layer.kind == "conv":
            s = {"weight": (layer.out_channels, layer.in_channels, layer.k, layer.k)}
        elif layer.kind == "dwconv":
            s = {"weight": (layer.out_channels, 1, layer.k, layer.k)}
        elif layer.kind == "dense":
            s = {"weight": (layer.out_channels, layer.in_channels)}
        elif layer.kind == "scale_shift":
            shapes[layer.name] = {"scale": (layer.out_channels,), "shift": (layer.out_channels,)}
            continue
        else:
            continue
        if layer.bias:
            s["bias"] = (layer.out_channels,)
        shapes[layer.name] = s
    return shapes


def check_weights(graph: NetworkGraph, weights: dict) -> None:
    expected = expected_param_shapes(graph)
    if set(weights) != set(expected):
        raise F.ShapeError("<model>", sorted(expected), sorted(weights))
    for name, shapes in expected.items():
        if set(weights[name]) != set(shapes):
            raise F.ShapeError(name, sorted(shapes), sorted(weights[name]))
        for pname, shape in shapes.items():
            if tuple(weights[name][pname].shape) != shape:
                raise F.ShapeError(f"{name}.{pname}", shape, tuple(weights[name][pname].shape))


class Model:
    def __init__(self, graph: NetworkGraph, weights: dict[str, dict[str, np.ndarray]]):
        check_weights(graph, weights)
        self.graph = graph
        self.layer_params = {
            name: LayerParams({pname: Param(v.copy()) for pname, v in p.items()})
            for name, p in weights.items()
        }
        self._tape = None

    @classmethod
    def initialize(cls, graph: NetworkGraph, rng: np.random.Generator) -> "Model":
        return cls(graph, init_params(graph, rng))

    def parameters(self) -> list[Param]:
        return [p for name in sorted(self.layer_params) for p in self.layer_params[name]]

    def state_dict(self) -> dict[str, dict[str, np.ndarray]]:
        return {name: {pname: p.value.copy() for pname, p in lp.params.items()}
                for name, lp in self.layer_params.items()}

    def zero_grad(self):
        for p in self.parameters():
            p.grad[...] = 0.0

    def _value(self, name, pname):
        return self.layer_params[name].params[pname].value

    def _bias(self, name):
        p = self.layer_params[name].params.get("bias")
        return None if p is None else p.value

    def _run(self, x_nchw: np.ndarray, record: bool):
        c, h, w = self.graph.input_shape
        if x_nchw.ndim != 4 or tuple(x_nchw.shape[1:]) != (c, h, w):
            raise F.ShapeError("input", ("N", c, h, w), x_nchw.shape)
        acts = {"input": np.ascontiguousarray(x_nchw.transpose(0, 2, 3, 1), dtype=np.float64)}
        caches = {}
        for layer in self.graph.layers[:-1]:
            name, kind = layer.name, layer.kind
            x = acts[layer.inputs[0]]
            if kind == "conv":
                out, cache = F.conv2d_forward(x, self._value(name, "weight"), self._bias(name),
                                              layer.stride, layer.pad, name)
            elif kind == "dwconv":
                out, cache = F.depthwise_forward(x, self._value(name, "weight"), self._bias(name),
                                                 layer.stride, layer.pad, name)
            elif kind == "dense":
                out, cache = F.dense_forward(x, self._value(name, "weight"), self._bias(name), name)
            elif kind == "relu":
                out, cache = F.relu_forward(x)
            elif kind == "maxpool":
                out, cache = F.maxpool2_forward(x)
            elif kind == "gap":
                out, cache = F.gap_forward(x)
            elif kind == "scale_shift":
                out, cache = F.scale_shift_forward(x, self._value(name, "scale"), self._value(name, "shift"))
            elif kind == "add":
                out = x.copy()
                for src in layer.inputs[1:]:
                    out += acts[src]
                cache = None
            else:  # pragma: no cover - build_graph rejects other kinds
                raise ValueError(kind)
            acts[name] = out
            if record:
                caches[name] = cache
        return acts, caches

    def forward(self, x_nchw: np.ndarray) -> np.ndarray:
        """Logits for a batch; nothing is recorded."""
        acts, _ = self._run(x_nchw, record=False)
        return acts[self.graph.loss_layer.inputs[0]]

    def loss(self, x_nchw: np.ndarray, labels: np.ndarray) -> float:
        """Mean cross-entropy of the batch; records the tape for backward()."""
        acts, caches = self._run(x_nchw, record=True)
        logits = acts[self.graph.loss_layer.inputs[0]]
        labels = np.asarray(labels)
        if labels.shape != (logits.shape[0],):
            raise F.ShapeError("labels", (logits.shape[0],), labels.shape)
        if labels.min() < 0 or labels.max() >= logits.shape[1]:
            raise ValueError(f"labels must lie in [0, {logits.shape[1]})")
        value, loss_cache = F.softmax_ce_forward(logits, labels)
        caches[self.graph.loss_layer.name] = loss_cache
        self._tape = caches
        return value

    def backward(self, scale: float = 1.0) -> None:
        """Accumulate d(scale * loss)/d(param) into every Param.grad."""
        if self._tape is None:
            raise TapeError("backward() needs a preceding loss() call")
        caches, self._tape = self._tape, None
        loss_layer = self.graph.loss_layer
        grads = {loss_layer.inputs[0]: F.softmax_ce_backward(scale, caches[loss_layer.name])}
        for layer in reversed(self.graph.layers[:-1]):
            g = grads.pop(layer.name, None)
            if g is None:
                continue
            name, kind, cache = layer.name, layer.kind, caches[layer.name]
            params = self.layer_params.get(name)
            if kind in ("conv", "dwconv", "dense"):
                back = {"conv": F.conv2d_backward, "dwconv": F.depthwise_backward,
                        "dense": F.dense_backward}[kind]
                dx, dw, db = back(g, cache)
                params.params["weight"].grad += dw
                if db is not None:
                    params.params["bias"].grad += db
                in_grads = [dx]
            elif kind == "relu":
                in_grads = [F.relu_backward(g, cache)]
            elif kind == "maxpool":
                in_grads = [F.maxpool2_backward(g, cache)]
            elif kind == "gap":
                in_grads = [F.gap_backward(g, cache)]
            elif kind == "scale_shift":
                dx, dscale, dshift = F.scale_shift_backward(g, cache)
                params.params["scale"].grad += dscale
                params.params["shift"].grad += dshift
                in_grads = [dx]
            elif kind == "add":
                in_grads = [g] * len(layer.inputs)
            for src, dg in zip(layer.inputs, in_grads):
                if src == "input":
                    continue
                if src in grads:
                    grads[src] = grads[src] + dg
                else:
                    grads[src] = dg

    def predict(self, x_nchw: np.ndarray, batch_size: int = 256) -> np.ndarray:
        out = [self.forward(x_nchw[i:i + batch_size]).argmax(axis=1)
               for i in range(0, len(x_nchw), batch_size)]
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)
