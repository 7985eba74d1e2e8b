"""Binary checkpoints.

Layout: the 9-byte magic ``LEGRCKPT1``, a little-endian uint64 manifest
length, a UTF-8 JSON manifest, then raw little-endian float64 payloads in
manifest order. The manifest embeds the architecture text, so a pruned
checkpoint describes its own (smaller) graph.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from legr.archgraph import FingerprintMismatch, NetworkGraph, format_spec, graph_from_text
from legr.nn.model import check_weights

MAGIC = b"LEGRCKPT1"
DTYPE_TAG = "<f8"


class CheckpointError(ValueError):
    pass


def dumps(graph: NetworkGraph, weights: dict, meta: dict | None = None) -> bytes:
    check_weights(graph, weights)
    tensors, payload, offset = [], [], 0
    for name in sorted(weights):
        for pname in sorted(weights[name]):
            arr = np.ascontiguousarray(weights[name][pname], dtype=DTYPE_TAG)
            tensors.append({"name": f"{name}.{pname}", "shape": list(arr.shape),
                            "offset": offset, "nbytes": arr.nbytes})
            payload.append(arr.tobytes())
            offset += arr.nbytes
    manifest = {
        "dtype": DTYPE_TAG,
        "fingerprint": graph.fingerprint(),
        "graph": format_spec(graph),
        "meta": meta or {},
        "tensors": tensors,
    }
    head = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + struct.pack("<Q", len(head)) + head + b"".join(payload)


def loads(blob: bytes, expect_graph: NetworkGraph | None = None):
    """Returns (graph, weights, meta); checks shapes against the graph."""
    if blob[:len(MAGIC)] != MAGIC:
        raise CheckpointError("bad magic: not a LEGRCKPT1 checkpoint")
    pos = len(MAGIC)
    if len(blob) < pos + 8:
        raise CheckpointError("truncated header")
    (hlen,) = struct.unpack("<Q", blob[pos:pos + 8])
    pos += 8
    try:
        manifest = json.loads(blob[pos:pos + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt manifest: {e}") from None
    pos += hlen
    if manifest.get("dtype") != DTYPE_TAG:
        raise CheckpointError(f"unsupported dtype tag {manifest.get('dtype')!r}")
    graph = graph_from_text(manifest["graph"])
    if expect_graph is not None and expect_graph.fingerprint() != graph.fingerprint():
        raise FingerprintMismatch(
            f"checkpoint graph {graph.fingerprint()} does not match expected {expect_graph.fingerprint()}")
    weights: dict[str, dict[str, np.ndarray]] = {}
    for t in manifest["tensors"]:
        start, end = pos + t["offset"], pos + t["offset"] + t["nbytes"]
        if end > len(blob):
            raise CheckpointError(f"truncated payload for {t['name']}")
        arr = np.frombuffer(blob[start:end], dtype=DTYPE_TAG).reshape(t["shape"]).astype(np.float64)
        layer, pname = t["name"].rsplit(".", 1)
        weights.setdefault(layer, {})[pname] = arr
    try:
        check_weights(graph, weights)
    except ValueError as e:
        raise CheckpointError(f"checkpoint tensors do not match its graph: {e}") from None
    return graph, weights, manifest["meta"]


def save(path: str | Path, graph: NetworkGraph, weights: dict, meta: dict | None = None) -> None:
    Path(path).write_bytes(dumps(graph, weights, meta))


def load(path: str | Path, expect_graph: NetworkGraph | None = None):
    return loads(Path(path).read_bytes(), expect_graph)
