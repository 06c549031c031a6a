"""Model file format.

A model file is a single container::

    b"EBMODEL1"            8-byte magic
    u64 little-endian      manifest length in bytes
    manifest               indented UTF-8 JSON (nodes, attributes, shapes,
                           labels, per-tensor blob offsets, CRC32 of blob)
    blob                   little-endian tensor data, concatenated

The manifest is plain text so ``head -c 4000 model.bin`` shows the
structure without any tooling.
"""

from __future__ import annotations

import json
import os
import struct
import zlib

import numpy as np

from .errors import ChecksumMismatch, CorruptManifest, InvalidGraph
from .ir import DTYPES, Graph, Node, QuantParams, Tensor

MAGIC = b"EBMODEL1"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sQ")


def _tensor_entries(graph: Graph, dtypes=None):
    """Yield (node, name, dtype, shape, quant, tensor) in blob order."""
    for node in graph.nodes:
        for name, t in graph.weights.get(node.id, {}).items():
            dtype = t.dtype if dtypes is None else dtypes(node, name, t)
            yield node.id, name, dtype, t.shape, t.quant, t


def build_manifest(graph: Graph, dtypes=None, crc=0) -> tuple[dict, int]:
    """Manifest dict and blob size. ``dtypes(node, name, tensor)`` may
    override the stored dtype, which is how file sizes are estimated for a
    precision the graph is not in yet."""
    tensors, offset = [], 0
    for nid, name, dtype, shape, quant, _ in _tensor_entries(graph, dtypes):
        nbytes = int(np.prod(shape, dtype=np.int64)) * DTYPES[dtype].itemsize
        if dtype == "i8" and quant is None:
            quant = QuantParams(1.0, 0)
        tensors.append({
            "node": nid, "name": name, "dtype": dtype, "shape": list(shape),
            "offset": offset, "nbytes": nbytes,
            "quant": quant.to_json() if dtype == "i8" else None,
        })
        offset += nbytes
    manifest = {
        "format": "edgebin-model",
        "version": FORMAT_VERSION,
        "metadata": graph.metadata,
        "inputs": list(graph.inputs),
        "outputs": list(graph.outputs),
        "nodes": [
            {"id": n.id, "op": n.op.value, "inputs": list(n.inputs), "attrs": n.attrs,
             "shape": list(n.shape) if n.shape is not None else None}
            for n in graph.nodes
        ],
        "tensors": tensors,
        "act_quant": {str(k): v.to_json() for k, v in graph.act_quant.items()},
        "blob": {"size": offset, "crc32": crc},
    }
    return manifest, offset


def _encode_manifest(manifest) -> bytes:
    return json.dumps(manifest, indent=1).encode("utf-8")


def encode(graph: Graph) -> bytes:
    blob = b"".join(t.data.astype(t.data.dtype.newbyteorder("<"), copy=False).tobytes()
                    for *_, t in _tensor_entries(graph))
    manifest, size = build_manifest(graph, crc=zlib.crc32(blob))
    assert size == len(blob)
    text = _encode_manifest(manifest)
    return _HEADER.pack(MAGIC, len(text)) + text + blob


def encoded_size(graph: Graph, dtypes=None) -> int:
    """Exact container size without materializing the blob."""
    manifest, size = build_manifest(graph, dtypes, crc=0xFFFFFFFF)
    return _HEADER.size + len(_encode_manifest(manifest)) + size


def save(graph: Graph, path) -> None:
    from .validate import validate

    diags = validate(graph)
    if diags:
        raise InvalidGraph(diags)
    data = encode(graph)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def decode(data: bytes) -> Graph:
    if len(data) < _HEADER.size:
        raise CorruptManifest("file shorter than header")
    magic, mlen = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CorruptManifest(f"bad magic {magic!r}")
    end = _HEADER.size + mlen
    try:
        manifest = json.loads(data[_HEADER.size:end].decode("utf-8"))
        if manifest.get("format") != "edgebin-model":
            raise CorruptManifest("not an edgebin manifest")
        if manifest.get("version") != FORMAT_VERSION:
            raise CorruptManifest(f"unsupported version {manifest.get('version')}")
        blob_info = manifest["blob"]
        nodes = tuple(
            Node(n["id"], n["op"], n["inputs"], n["attrs"],
                 tuple(n["shape"]) if n["shape"] is not None else None)
            for n in manifest["nodes"]
        )
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CorruptManifest):
            raise
        raise CorruptManifest(f"unreadable manifest: {exc}") from exc
    blob = data[end:]
    if len(blob) != blob_info["size"] or zlib.crc32(blob) != blob_info["crc32"]:
        raise ChecksumMismatch(
            f"blob is {len(blob)} bytes (crc {zlib.crc32(blob):#010x}), manifest says "
            f"{blob_info['size']} bytes (crc {blob_info['crc32']:#010x})")
    weights: dict[int, dict[str, Tensor]] = {}
    try:
        for e in manifest["tensors"]:
            dt = DTYPES[e["dtype"]].newbyteorder("<")
            raw = blob[e["offset"]:e["offset"] + e["nbytes"]]
            arr = np.frombuffer(raw, dtype=dt).astype(DTYPES[e["dtype"]]).reshape(e["shape"])
            quant = QuantParams(**e["quant"]) if e["quant"] else None
            weights.setdefault(e["node"], {})[e["name"]] = Tensor(arr, quant)
        act_quant = {int(k): QuantParams(**v) for k, v in manifest["act_quant"].items()}
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptManifest(f"bad tensor table: {exc}") from exc
    return Graph(nodes, weights, tuple(manifest["inputs"]), tuple(manifest["outputs"]),
                 manifest["metadata"], act_quant)


def load(path) -> Graph:
    with open(path, "rb") as fh:
        return decode(fh.read())
