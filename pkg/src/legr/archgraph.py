"""Architecture graphs, channel-coupling groups, the MAC cost model, and masks.

An architecture is an ordered list of layers (a topological order of the
DAG). Each layer names its inputs; ``input`` is the image. The text form is::

    format: legr-arch/1
    name: tiny
    input: 1x16x16

    layer conv1 kind=conv k=3 stride=1 pad=1 out_channels=8 inputs=input
    layer ss1 kind=scale_shift
    layer relu1 kind=relu
    layer pool kind=gap
    layer fc kind=dense out_channels=4 bias=1
    layer loss kind=softmax_ce

``inputs`` defaults to the previous layer. Prunable layers are the
convolutions (``conv`` and ``dwconv``); their output channels are grouped
with every channel they are tied to by residual adds and depthwise convs.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

KINDS = ("conv", "dwconv", "dense", "relu", "maxpool", "gap", "add", "scale_shift", "softmax_ce")
PRUNABLE = ("conv", "dwconv")
COSTED = ("conv", "dwconv", "dense")
PASSTHROUGH = ("relu", "maxpool", "gap", "scale_shift")

_KEYS = {
    "conv": {"kind", "k", "stride", "pad", "out_channels", "inputs", "bias"},
    "dwconv": {"kind", "k", "stride", "pad", "out_channels", "inputs", "bias"},
    "dense": {"kind", "out_channels", "inputs", "bias"},
    "add": {"kind", "inputs"},
}
_DEFAULT_KEYS = {"kind", "inputs"}


class SpecError(ValueError):
    """Malformed architecture text; carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.message = message
        self.line = line
        self.path = path
        where = [path] if path else []
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


class GraphError(ValueError):
    """Structurally invalid graph (cycle, channel mismatch, bad spatial sizes)."""


class FingerprintMismatch(ValueError):
    """An artifact was produced for a different architecture."""


class MaskError(ValueError):
    """Mask that does not fit the graph or breaks an invariant."""


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    inputs: tuple[str, ...]
    k: int = 1
    stride: int = 1
    pad: int = 0
    out_channels: int | None = None
    bias: bool = False
    line: int | None = None
    # resolved by build_graph
    in_channels: int = 0
    in_hw: tuple[int, int] | None = None
    out_hw: tuple[int, int] | None = None


@dataclass(frozen=True)
class CouplingGroup:
    gid: int
    members: tuple[tuple[str, int], ...]


@dataclass
class NetworkGraph:
    name: str
    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]
    groups: tuple[CouplingGroup, ...]
    # group id of each output channel, -1 for channels that can never be pruned
    channel_groups: dict[str, np.ndarray] = field(repr=False)

    def __post_init__(self):
        self._by_name = {layer.name: layer for layer in self.layers}
        self._index = {layer.name: i for i, layer in enumerate(self.layers)}

    def layer(self, name: str) -> LayerSpec:
        return self._by_name[name]

    def index(self, name: str) -> int:
        return self._index[name]

    @property
    def prunable(self) -> list[str]:
        return [layer.name for layer in self.layers if layer.kind in PRUNABLE]

    @property
    def loss_layer(self) -> LayerSpec:
        return self.layers[-1]

    @property
    def num_classes(self) -> int:
        return self.layer(self.loss_layer.inputs[0]).out_channels

    def channels(self, name: str) -> int:
        if name == "input":
            return self.input_shape[0]
        return self.layer(name).out_channels

    def fingerprint(self) -> str:
        return hashlib.sha256(format_spec(self).encode()).hexdigest()[:16]


@dataclass
class FilterMask:
    """Per prunable layer, a boolean keep-vector over its output channels."""

    keep: dict[str, np.ndarray]

    def kept_counts(self) -> dict[str, int]:
        return {name: int(v.sum()) for name, v in self.keep.items()}

    def copy(self) -> "FilterMask":
        return FilterMask({name: v.copy() for name, v in self.keep.items()})

    def __eq__(self, other) -> bool:
        if not isinstance(other, FilterMask) or self.keep.keys() != other.keep.keys():
            return False
        return all(np.array_equal(v, other.keep[n]) for n, v in self.keep.items())

    def is_subset_of(self, other: "FilterMask") -> bool:
        return all(not np.any(v & ~other.keep[n]) for n, v in self.keep.items())


# ---------------------------------------------------------------- parsing


def _parse_int(value: str, key: str, lineno: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise SpecError(f"{key} must be an integer, got {value!r}", lineno) from None


def parse_spec(text: str, path: str | None = None) -> tuple[str, tuple[int, int, int], list[LayerSpec]]:
    """Parse architecture text into (name, input_shape, unresolved layers)."""
    header: dict[str, tuple[str, int]] = {}
    layers: list[LayerSpec] = []
    prev = "input"
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("layer "):
            tokens = line.split()
            if len(tokens) < 2:
                raise SpecError("layer line needs a name", lineno, path)
            name = tokens[1]
            kv = {}
            for tok in tokens[2:]:
                if "=" not in tok:
                    raise SpecError(f"expected key=value, got {tok!r}", lineno, path)
                key, value = tok.split("=", 1)
                if key in kv:
                    raise SpecError(f"duplicate key {key!r}", lineno, path)
                kv[key] = value
            kind = kv.get("kind")
            if kind not in KINDS:
                raise SpecError(f"unknown layer kind {kind!r} for {name!r}", lineno, path)
            unknown = set(kv) - _KEYS.get(kind, _DEFAULT_KEYS)
            if unknown:
                raise SpecError(f"unknown keys for {kind} layer {name!r}: {sorted(unknown)}", lineno, path)
            inputs = tuple(kv["inputs"].split(",")) if "inputs" in kv else (prev,)
            spec = LayerSpec(
                name=name,
                kind=kind,
                inputs=inputs,
                k=_parse_int(kv.get("k", "1"), "k", lineno),
                stride=_parse_int(kv.get("stride", "1"), "stride", lineno),
                pad=_parse_int(kv.get("pad", "0"), "pad", lineno),
                out_channels=(_parse_int(kv["out_channels"], "out_channels", lineno)
                              if "out_channels" in kv else None),
                bias=kv.get("bias", "0") in ("1", "true", "yes"),
                line=lineno,
            )
            layers.append(spec)
            prev = name
        elif ":" in line:
            key, value = (s.strip() for s in line.split(":", 1))
            if key not in ("format", "name", "input"):
                raise SpecError(f"unknown header key {key!r}", lineno, path)
            header[key] = (value, lineno)
        else:
            raise SpecError(f"cannot parse line: {raw.strip()!r}", lineno, path)
    if header.get("format", ("",))[0] != "legr-arch/1":
        raise SpecError("missing or unsupported 'format: legr-arch/1' header", header.get("format", (None, None))[1], path)
    if "input" not in header:
        raise SpecError("missing 'input: CxHxW' header", None, path)
    value, lineno = header["input"]
    try:
        c, h, w = (int(v) for v in value.lower().split("x"))
    except ValueError:
        raise SpecError(f"input must look like CxHxW, got {value!r}", lineno, path) from None
    return header.get("name", ("net",))[0], (c, h, w), layers


def format_spec(graph: NetworkGraph) -> str:
    """Canonical text form; parse_spec(format_spec(g)) rebuilds g."""
    c, h, w = graph.input_shape
    lines = ["format: legr-arch/1", f"name: {graph.name}", f"input: {c}x{h}x{w}", ""]
    for layer in graph.layers:
        parts = [f"layer {layer.name}", f"kind={layer.kind}"]
        if layer.kind in ("conv", "dwconv"):
            parts += [f"k={layer.k}", f"stride={layer.stride}", f"pad={layer.pad}"]
        if layer.kind in ("conv", "dwconv", "dense"):
            parts.append(f"out_channels={layer.out_channels}")
            if layer.bias:
                parts.append("bias=1")
        parts.append("inputs=" + ",".join(layer.inputs))
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def load_graph(path: str | Path) -> NetworkGraph:
    path = Path(path)
    try:
        name, input_shape, layers = parse_spec(path.read_text(), str(path))
    except SpecError as e:
        if e.path:
            raise
        raise SpecError(e.message, e.line, str(path)) from None
    try:
        return build_graph(layers, input_shape, name)
    except GraphError as e:
        raise GraphError(f"{path}: {e}") from None


def graph_from_text(text: str) -> NetworkGraph:
    name, input_shape, layers = parse_spec(text)
    return build_graph(layers, input_shape, name)


# ------------------------------------------------------------ construction


class _UnionFind:
    def __init__(self):
        self.parent: list[int] = []

    def add(self) -> int:
        self.parent.append(len(self.parent))
        return len(self.parent) - 1

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def build_graph(layers, input_shape, name: str = "net") -> NetworkGraph:
    """Resolve channel counts and spatial sizes, and derive coupling groups.

    Channel c of both operands of an add, and channel c of a depthwise conv
    and of its input, land in one group. Channels tied to the image input or
    to a dense output are never prunable and belong to no group.
    """
    in_c, in_h, in_w = input_shape
    if min(input_shape) < 1:
        raise GraphError(f"input shape must be positive, got {input_shape}")
    uf = _UnionFind()
    fixed_atoms: set[int] = set()
    atoms: dict[str, list[int]] = {"input": [uf.add() for _ in range(in_c)]}
    fixed_atoms.update(atoms["input"])
    shapes: dict[str, tuple] = {"input": (in_c, in_h, in_w)}  # (C, H, W) or (C,)
    resolved: list[LayerSpec] = []
    seen_loss = False

    def err(layer, msg):
        where = f" (line {layer.line})" if layer.line else ""
        return GraphError(f"layer {layer.name!r}{where}: {msg}")

    names = set()
    for layer in layers:
        if layer.name in names or layer.name == "input":
            raise err(layer, "duplicate layer name")
        names.add(layer.name)
        if seen_loss:
            raise err(layer, "layers after the loss node")
        for src in layer.inputs:
            if src not in shapes:
                raise err(layer, f"input {src!r} is not defined earlier (graph must be a DAG in topological order)")
        if layer.kind != "add" and len(layer.inputs) != 1:
            raise err(layer, "expects exactly one input")
        src_shape = shapes[layer.inputs[0]]
        spatial = len(src_shape) == 3
        c = src_shape[0]
        kind = layer.kind

        if kind in ("conv", "dwconv"):
            if not spatial:
                raise err(layer, "convolution needs a spatial input")
            if layer.k < 1 or layer.stride < 1 or layer.pad < 0:
                raise err(layer, "need k >= 1, stride >= 1, pad >= 0")
            h, w = src_shape[1], src_shape[2]
            ho = (h + 2 * layer.pad - layer.k) // layer.stride + 1
            wo = (w + 2 * layer.pad - layer.k) // layer.stride + 1
            if ho < 1 or wo < 1:
                raise err(layer, f"kernel {layer.k} with pad {layer.pad} does not fit {h}x{w}")
            out_c = layer.out_channels
            if kind == "dwconv":
                if out_c not in (None, c):
                    raise err(layer, f"depthwise out_channels must equal in_channels {c}")
                out_c = c
            if out_c is None or out_c < 1:
                raise err(layer, "out_channels must be a positive integer")
            new_atoms = [uf.add() for _ in range(out_c)]
            if kind == "dwconv":
                for a, b in zip(new_atoms, atoms[layer.inputs[0]]):
                    uf.union(a, b)
            atoms[layer.name] = new_atoms
            shapes[layer.name] = (out_c, ho, wo)
            resolved.append(replace(layer, out_channels=out_c, in_channels=c,
                                    in_hw=(h, w), out_hw=(ho, wo)))
        elif kind == "dense":
            if spatial:
                raise err(layer, "dense needs a flat input (put a gap layer before it)")
            if layer.out_channels is None or layer.out_channels < 1:
                raise err(layer, "out_channels must be a positive integer")
            new_atoms = [uf.add() for _ in range(layer.out_channels)]
            fixed_atoms.update(new_atoms)
            atoms[layer.name] = new_atoms
            shapes[layer.name] = (layer.out_channels,)
            resolved.append(replace(layer, in_channels=c))
        elif kind in PASSTHROUGH:
            if kind == "gap" or kind == "maxpool":
                if not spatial:
                    raise err(layer, f"{kind} needs a spatial input")
            if kind == "gap":
                shapes[layer.name] = (c,)
            elif kind == "maxpool":
                if src_shape[1] < 2 or src_shape[2] < 2:
                    raise err(layer, "maxpool needs at least 2x2 input")
                shapes[layer.name] = (c, src_shape[1] // 2, src_shape[2] // 2)
            else:
                shapes[layer.name] = src_shape
            if kind == "scale_shift" and not spatial:
                raise err(layer, "scale_shift needs a spatial input")
            atoms[layer.name] = atoms[layer.inputs[0]]
            hw_out = tuple(shapes[layer.name][1:]) or None
            resolved.append(replace(layer, out_channels=c, in_channels=c,
                                    in_hw=tuple(src_shape[1:]) or None, out_hw=hw_out))
        elif kind == "add":
            if len(layer.inputs) < 2:
                raise err(layer, "add needs at least two inputs")
            for src in layer.inputs[1:]:
                if shapes[src] != src_shape:
                    raise err(layer, f"operand shapes differ: {layer.inputs[0]}={src_shape} vs {src}={shapes[src]}")
                for a, b in zip(atoms[layer.inputs[0]], atoms[src]):
                    uf.union(a, b)
            atoms[layer.name] = atoms[layer.inputs[0]]
            shapes[layer.name] = src_shape
            resolved.append(replace(layer, out_channels=c, in_channels=c,
                                    in_hw=tuple(src_shape[1:]) or None,
                                    out_hw=tuple(src_shape[1:]) or None))
        elif kind == "softmax_ce":
            if spatial:
                raise err(layer, "softmax_ce needs flat logits")
            shapes[layer.name] = ()
            atoms[layer.name] = []
            resolved.append(replace(layer, out_channels=c, in_channels=c))
            seen_loss = True
    if not seen_loss:
        raise GraphError("graph has no softmax_ce loss node")

    fixed_roots = {uf.find(a) for a in fixed_atoms}
    root_to_gid: dict[int, int] = {}
    members: list[list[tuple[str, int]]] = []
    channel_groups: dict[str, np.ndarray] = {}
    for layer in resolved:
        if layer.kind not in PRUNABLE:
            continue
        gids = np.empty(layer.out_channels, dtype=np.int64)
        for ch, atom in enumerate(atoms[layer.name]):
            root = uf.find(atom)
            if root in fixed_roots:
                gids[ch] = -1
                continue
            if root not in root_to_gid:
                root_to_gid[root] = len(members)
                members.append([])
            gids[ch] = root_to_gid[root]
            members[gids[ch]].append((layer.name, ch))
        channel_groups[layer.name] = gids
    # every tensor's channels map to the groups of the conv channels they carry
    for layer in resolved:
        if layer.kind in PRUNABLE or layer.kind == "softmax_ce":
            continue
        gids = np.empty(len(atoms[layer.name]), dtype=np.int64)
        for ch, atom in enumerate(atoms[layer.name]):
            gids[ch] = root_to_gid.get(uf.find(atom), -1)
        channel_groups[layer.name] = gids
    channel_groups["input"] = np.full(in_c, -1, dtype=np.int64)
    groups = tuple(CouplingGroup(gid, tuple(m)) for gid, m in enumerate(members))
    return NetworkGraph(name, tuple(input_shape), tuple(resolved), groups, channel_groups)


# -------------------------------------------------------------- cost model


def layer_cost(layer: LayerSpec, kept_in: int, kept_out: int) -> int:
    """Multiply-accumulates of one inference through ``layer``."""
    if layer.kind == "conv":
        ho, wo = layer.out_hw
        return ho * wo * layer.k * layer.k * kept_in * kept_out
    if layer.kind == "dwconv":
        ho, wo = layer.out_hw
        return ho * wo * layer.k * layer.k * kept_out
    if layer.kind == "dense":
        return kept_in * kept_out
    return 0


def full_mask(graph: NetworkGraph) -> FilterMask:
    return FilterMask({name: np.ones(graph.layer(name).out_channels, dtype=bool)
                       for name in graph.prunable})


def group_keep_from_mask(graph: NetworkGraph, mask: FilterMask) -> np.ndarray:
    validate_mask(graph, mask)
    keep = np.ones(len(graph.groups), dtype=bool)
    for name, gids in graph.channel_groups.items():
        if name in mask.keep:
            sel = gids >= 0
            keep[gids[sel]] = mask.keep[name][sel]
    return keep


def mask_from_group_keep(graph: NetworkGraph, group_keep: np.ndarray) -> FilterMask:
    keep = {}
    for name in graph.prunable:
        gids = graph.channel_groups[name]
        keep[name] = np.where(gids >= 0, group_keep[np.maximum(gids, 0)], True)
    return FilterMask(keep)


def kept_channels(graph: NetworkGraph, group_keep: np.ndarray, name: str) -> np.ndarray:
    """Boolean keep-vector over the output channels of any layer (or ``input``)."""
    gids = graph.channel_groups[name]
    return np.where(gids >= 0, group_keep[np.maximum(gids, 0)], True)


def validate_mask(graph: NetworkGraph, mask: FilterMask) -> None:
    """Raise MaskError unless the mask fits the graph, keeps a channel in every
    prunable layer, keeps every unprunable channel, and agrees within groups."""
    if set(mask.keep) != set(graph.prunable):
        raise MaskError(f"mask layers {sorted(mask.keep)} != prunable layers {sorted(graph.prunable)}")
    bits: dict[int, bool] = {}
    for name in graph.prunable:
        v = np.asarray(mask.keep[name])
        gids = graph.channel_groups[name]
        if v.dtype != bool or v.shape != gids.shape:
            raise MaskError(f"layer {name!r}: keep vector must be bool of length {len(gids)}")
        if not v.any():
            raise MaskError(f"layer {name!r}: mask removes every channel")
        if not v[gids < 0].all():
            raise MaskError(f"layer {name!r}: mask removes an unprunable channel")
        for ch in np.flatnonzero(gids >= 0):
            g = int(gids[ch])
            if bits.setdefault(g, bool(v[ch])) != bool(v[ch]):
                raise MaskError(f"layer {name!r} channel {ch}: disagrees with coupling group {g}")


class FlopCounter:
    """Running MAC total under group removals.

    Removing a group touches only the layers whose input or output tensor
    carries one of its channels, so each update is O(group size).
    """

    def __init__(self, graph: NetworkGraph, group_keep: np.ndarray | None = None):
        self.graph = graph
        self.costed = [layer for layer in graph.layers if layer.kind in COSTED]
        n_groups = len(graph.groups)
        self.group_keep = np.ones(n_groups, dtype=bool) if group_keep is None else group_keep.copy()
        self.kin = np.zeros(len(self.costed), dtype=np.int64)
        self.kout = np.zeros(len(self.costed), dtype=np.int64)
        self.in_touch: list[list[int]] = [[] for _ in range(n_groups)]
        self.out_touch: list[list[int]] = [[] for _ in range(n_groups)]
        for i, layer in enumerate(self.costed):
            gin = graph.channel_groups[layer.inputs[0]]
            gout = graph.channel_groups[layer.name]
            for g in gin[gin >= 0]:
                self.in_touch[g].append(i)
            for g in gout[gout >= 0]:
                self.out_touch[g].append(i)
            self.kin[i] = kept_channels(graph, self.group_keep, layer.inputs[0]).sum()
            self.kout[i] = kept_channels(graph, self.group_keep, layer.name).sum()
        self.costs = np.array([layer_cost(l, int(a), int(b))
                               for l, a, b in zip(self.costed, self.kin, self.kout)], dtype=np.int64)
        self.total = int(self.costs.sum())
        # kept channel count of each prunable layer, for the one-channel guard
        self.layer_kept = {name: int(kept_channels(graph, self.group_keep, name).sum())
                           for name in graph.prunable}
        self.group_layers = [sorted({m[0] for m in grp.members}) for grp in graph.groups]

    def would_empty(self, gid: int) -> bool:
        return any(self.layer_kept[name] <= 1 for name in self.group_layers[gid])

    def remove(self, gid: int) -> int:
        if not self.group_keep[gid]:
            raise MaskError(f"group {gid} already removed")
        self.group_keep[gid] = False
        for name in self.group_layers[gid]:
            self.layer_kept[name] -= 1
        touched = set()
        for i in self.in_touch[gid]:
            self.kin[i] -= 1
            touched.add(i)
        for i in self.out_touch[gid]:
            self.kout[i] -= 1
            touched.add(i)
        for i in sorted(touched):
            new = layer_cost(self.costed[i], int(self.kin[i]), int(self.kout[i]))
            self.total += new - int(self.costs[i])
            self.costs[i] = new
        return self.total


def per_layer_flops(graph: NetworkGraph, mask: FilterMask | None = None) -> list[tuple[str, int, int, int]]:
    """Rows of (layer, kept_out, total_out, MACs) for every costed layer."""
    group_keep = (np.ones(len(graph.groups), dtype=bool) if mask is None
                  else group_keep_from_mask(graph, mask))
    rows = []
    for layer in graph.layers:
        if layer.kind not in COSTED:
            continue
        kin = int(kept_channels(graph, group_keep, layer.inputs[0]).sum())
        kout = int(kept_channels(graph, group_keep, layer.name).sum())
        rows.append((layer.name, kout, layer.out_channels, layer_cost(layer, kin, kout)))
    return rows


def total_flops(graph: NetworkGraph, mask: FilterMask | None = None) -> int:
    """MAC count of one inference under ``mask`` (full network when None)."""
    return sum(row[3] for row in per_layer_flops(graph, mask))


# ----------------------------------------------------------- materialization


def apply_mask(graph: NetworkGraph, weights: dict, mask: FilterMask):
    """Physically remove pruned channels.

    Returns a smaller graph plus weights where each pruned output channel and
    the matching input slices of its consumers are gone.
    """
    validate_mask(graph, mask)
    group_keep = group_keep_from_mask(graph, mask)
    idx = {name: np.flatnonzero(kept_channels(graph, group_keep, name))
           for name in list(graph.channel_groups)}
    new_layers = []
    new_weights = {}
    for layer in graph.layers:
        src = layer.inputs[0]
        p = weights.get(layer.name)
        if layer.kind == "conv":
            new_layers.append(replace(layer, out_channels=len(idx[layer.name])))
            new_weights[layer.name] = {"weight": p["weight"][idx[layer.name]][:, idx[src]].copy()}
        elif layer.kind == "dwconv":
            new_layers.append(replace(layer, out_channels=len(idx[layer.name])))
            new_weights[layer.name] = {"weight": p["weight"][idx[layer.name]].copy()}
        elif layer.kind == "dense":
            new_layers.append(layer)
            new_weights[layer.name] = {"weight": p["weight"][:, idx[src]].copy()}
        elif layer.kind == "scale_shift":
            new_layers.append(layer)
            new_weights[layer.name] = {"scale": p["scale"][idx[src]].copy(),
                                       "shift": p["shift"][idx[src]].copy()}
        else:
            new_layers.append(layer)
        if p is not None and "bias" in p:
            out_idx = idx[layer.name] if layer.kind in PRUNABLE else slice(None)
            new_weights[layer.name]["bias"] = p["bias"][out_idx].copy()
    new_graph = build_graph(new_layers, graph.input_shape, graph.name)
    return new_graph, new_weights


# ------------------------------------------------------------- mask files


def format_mask(graph: NetworkGraph, mask: FilterMask) -> str:
    validate_mask(graph, mask)
    lines = ["format: legr-mask/1", f"graph: {graph.fingerprint()}"]
    for name in graph.prunable:
        lines.append(f"{name} " + "".join("1" if b else "0" for b in mask.keep[name]))
    return "\n".join(lines) + "\n"


def parse_mask(graph: NetworkGraph, text: str) -> FilterMask:
    lines = [l.strip() for l in text.splitlines() if l.strip()]
    if len(lines) < 2 or lines[0] != "format: legr-mask/1":
        raise MaskError("missing 'format: legr-mask/1' header")
    if lines[1] != f"graph: {graph.fingerprint()}":
        raise FingerprintMismatch(f"mask was written for a different graph ({lines[1]})")
    keep = {}
    for line in lines[2:]:
        try:
            name, bits = line.split()
        except ValueError:
            raise MaskError(f"expected '<layer> <bits>', got {line!r}") from None
        if set(bits) - {"0", "1"}:
            raise MaskError(f"layer {name!r}: bitstring may only contain 0/1")
        keep[name] = np.array([b == "1" for b in bits], dtype=bool)
    mask = FilterMask(keep)
    validate_mask(graph, mask)
    return mask
