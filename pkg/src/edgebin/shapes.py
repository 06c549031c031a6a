"""Shape inference over the IR."""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from .errors import ShapeMismatch, UnknownAttribute
from .ir import FUSED_ACTIVATIONS, Graph, Node, OpKind

ALLOWED_ATTRS = {
    OpKind.INPUT: {"shape"},
    OpKind.CONV2D: {"filters", "kernel", "stride", "padding", "activation", "use_bias"},
    OpKind.DEPTHWISE_CONV2D: {"kernel", "stride", "padding", "activation", "use_bias"},
    OpKind.DENSE: {"units", "activation", "use_bias"},
    OpKind.BATCH_NORM: {"epsilon"},
    OpKind.RELU: set(),
    OpKind.RELU6: set(),
    OpKind.HARD_SWISH: set(),
    OpKind.HARD_SIGMOID: set(),
    OpKind.AVG_POOL: {"pool", "stride", "padding"},
    OpKind.MAX_POOL: {"pool", "stride", "padding"},
    OpKind.GLOBAL_AVG_POOL: set(),
    OpKind.SOFTMAX: {"host_fallback"},
    OpKind.ADD: set(),
    OpKind.MUL: set(),
    OpKind.PAD: {"pads"},
    OpKind.RESIZE: {"size"},
    OpKind.RESHAPE: {"shape"},
    OpKind.CONST: set(),
}

ARITY = {OpKind.INPUT: 0, OpKind.CONST: 0, OpKind.ADD: 2, OpKind.MUL: 2}


def arity(op: OpKind) -> int:
    return ARITY.get(op, 1)


def conv_out_extent(size: int, k: int, stride: int, padding: str) -> int:
    if padding == "same":
        return -(-size // stride)
    if padding == "valid":
        return (size - k) // stride + 1
    raise UnknownAttribute(f"padding mode {padding!r}")


def same_pads(size: int, k: int, stride: int) -> tuple[int, int]:
    """(before, after) padding for 'same' mode; the odd cell goes after."""
    out = -(-size // stride)
    total = max((out - 1) * stride + k - size, 0)
    return total // 2, total - total // 2


def spatial_pads(h, w, kernel, stride, padding):
    if padding == "same":
        return same_pads(h, kernel[0], stride[0]), same_pads(w, kernel[1], stride[1])
    return (0, 0), (0, 0)


def _expect_rank(node, shape, rank):
    if len(shape) != rank:
        raise ShapeMismatch(node.id, f"{node.op.value} expects rank-{rank} input, got {shape}")


def _spatial(node, shape, kernel, stride, padding):
    _expect_rank(node, shape, 3)
    h, w, _ = shape
    oh = conv_out_extent(h, kernel[0], stride[0], padding)
    ow = conv_out_extent(w, kernel[1], stride[1], padding)
    if oh < 1 or ow < 1:
        raise ShapeMismatch(node.id, f"window {kernel} does not fit input {shape}")
    return oh, ow


def _check_weight(node, weights, name, expected):
    t = weights.get(name)
    if t is None:
        raise ShapeMismatch(node.id, f"missing weight {name!r}")
    if t.shape != tuple(expected):
        raise ShapeMismatch(node.id, f"weight {name!r} has shape {t.shape}, expected {tuple(expected)}")


def node_output_shape(node: Node, in_shapes, weights) -> tuple[int, ...]:
    """Output shape of one node given its input shapes and weights."""
    extra = set(node.attrs) - ALLOWED_ATTRS[node.op]
    if extra:
        raise UnknownAttribute(f"node {node.id} ({node.op.value}): {sorted(extra)}")
    if len(in_shapes) != arity(node.op):
        raise ShapeMismatch(node.id, f"{node.op.value} takes {arity(node.op)} inputs, got {len(in_shapes)}")
    a = node.attrs
    op = node.op
    if "activation" in a and a["activation"] not in FUSED_ACTIVATIONS:
        raise UnknownAttribute(f"node {node.id}: activation {a['activation']!r}")

    if op is OpKind.INPUT:
        return tuple(a["shape"])
    if op is OpKind.CONST:
        return weights["value"].shape
    x = in_shapes[0] if in_shapes else None
    if op is OpKind.CONV2D:
        oh, ow = _spatial(node, x, a["kernel"], a["stride"], a["padding"])
        _check_weight(node, weights, "kernel", (*a["kernel"], x[2], a["filters"]))
        if a.get("use_bias", True):
            _check_weight(node, weights, "bias", (a["filters"],))
        return (oh, ow, a["filters"])
    if op is OpKind.DEPTHWISE_CONV2D:
        oh, ow = _spatial(node, x, a["kernel"], a["stride"], a["padding"])
        _check_weight(node, weights, "kernel", (*a["kernel"], x[2], 1))
        if a.get("use_bias", True):
            _check_weight(node, weights, "bias", (x[2],))
        return (oh, ow, x[2])
    if op is OpKind.DENSE:
        _check_weight(node, weights, "kernel", (math.prod(x), a["units"]))
        if a.get("use_bias", True):
            _check_weight(node, weights, "bias", (a["units"],))
        return (a["units"],)
    if op is OpKind.BATCH_NORM:
        for name in ("gamma", "beta", "mean", "var"):
            _check_weight(node, weights, name, (x[-1],))
        return x
    if op in (OpKind.RELU, OpKind.RELU6, OpKind.HARD_SWISH, OpKind.HARD_SIGMOID, OpKind.SOFTMAX):
        return x
    if op in (OpKind.AVG_POOL, OpKind.MAX_POOL):
        oh, ow = _spatial(node, x, a["pool"], a["stride"], a["padding"])
        return (oh, ow, x[2])
    if op is OpKind.GLOBAL_AVG_POOL:
        _expect_rank(node, x, 3)
        return (1, 1, x[2])
    if op in (OpKind.ADD, OpKind.MUL):
        try:
            return tuple(np.broadcast_shapes(in_shapes[0], in_shapes[1]))
        except ValueError:
            raise ShapeMismatch(node.id, f"cannot broadcast {in_shapes[0]} with {in_shapes[1]}") from None
    if op is OpKind.PAD:
        _expect_rank(node, x, 3)
        (t, b), (l, r) = a["pads"]
        return (x[0] + t + b, x[1] + l + r, x[2])
    if op is OpKind.RESIZE:
        _expect_rank(node, x, 3)
        h, w = a["size"]
        if h < 1 or w < 1:
            raise ShapeMismatch(node.id, f"bad resize target {a['size']}")
        return (h, w, x[2])
    if op is OpKind.RESHAPE:
        target = tuple(a["shape"])
        if math.prod(target) != math.prod(x):
            raise ShapeMismatch(node.id, f"cannot reshape {x} to {target}")
        return target
    raise ShapeMismatch(node.id, f"no shape rule for {op}")


def infer_shapes(graph: Graph) -> Graph:
    """Return a copy of ``graph`` with every node's output shape annotated."""
    from .executor import topo_order

    shapes: dict[int, tuple[int, ...]] = {}
    for nid in topo_order(graph):
        node = graph.node(nid)
        shapes[nid] = node_output_shape(
            node, [shapes[i] for i in node.inputs], graph.weights.get(nid, {})
        )
    nodes = tuple(replace(n, shape=shapes[n.id]) for n in graph.nodes)
    if nodes == graph.nodes:
        return graph
    return graph.evolve(nodes=nodes)


def is_annotated(graph: Graph) -> bool:
    return all(n.shape is not None for n in graph.nodes)
