"""Graph execution: a sequential reference interpreter and an optimized path.

Both paths walk the same topological order. The optimized path uses the
GEMM/tap kernels and, for float graphs, collapses ``conv -> BatchNorm ->
activation`` chains into one fused kernel call at plan time.

Quantized graphs execute in mixed precision: conv/depthwise/dense with i8
kernels run as integer kernels with integer accumulation and requantize
at their output; every other operator dequantizes its inputs, computes in
f32 and requantizes to its own calibrated parameters. f16 graphs store
half-precision weights that are widened to f32 at use; activations stay
f32.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .errors import CycleDetected, DTypeMismatch, ShapeMismatch, UnsupportedOp
from .ir import ACTIVATION_OPS, CONV_OPS, Graph, OpKind, QuantParams, Tensor, round_half_away
from .kernels import optimized, reference
from .shapes import infer_shapes, is_annotated

PATHS = {"ref": reference, "reference": reference, "opt": optimized, "optimized": optimized}


def _kernels(path):
    try:
        return PATHS[path]
    except KeyError:
        raise ValueError(f"unknown execution path {path!r}") from None


def _canonical_path(path):
    return "ref" if _kernels(path) is reference else "opt"


def topo_order(graph: Graph) -> list[int]:
    """Kahn's algorithm; ties are broken by listing order so that a graph
    listed in topological order keeps its order."""
    index = {n.id: i for i, n in enumerate(graph.nodes)}
    indeg = {n.id: 0 for n in graph.nodes}
    for n in graph.nodes:
        for i in n.inputs:
            if i in index:
                indeg[n.id] += 1
    heap = [index[nid] for nid, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        nid = graph.nodes[heapq.heappop(heap)].id
        order.append(nid)
        for c in graph.consumers(nid):
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(heap, index[c])
    if len(order) != len(graph.nodes):
        stuck = sorted(set(indeg) - set(order))
        raise CycleDetected(f"graph has a cycle through nodes {stuck}")
    return order


def activation_bytes(graph: Graph, node_id: int) -> int:
    node = graph.node(node_id)
    if node_id in graph.act_quant:
        itemsize = 1
    else:
        itemsize = 4
    return int(np.prod(node.shape)) * itemsize


def liveness_peak(graph: Graph, order) -> int:
    """Peak bytes of simultaneously live activations over ``order``.

    A tensor is live from the step that produces it through the step of its
    last consumer; graph outputs stay live to the end. Const tensors are
    weights and are not counted.
    """
    pos = {nid: i for i, nid in enumerate(order)}
    last_use = {}
    for nid in order:
        uses = [pos[c] for c in graph.consumers(nid)]
        end = len(order) if nid in graph.outputs else max(uses, default=pos[nid])
        last_use[nid] = end
    peak = live = 0
    freed_at: dict[int, int] = {}
    for i, nid in enumerate(order):
        if graph.node(nid).op is not OpKind.CONST:
            live += activation_bytes(graph, nid)
            freed_at[last_use[nid]] = freed_at.get(last_use[nid], 0) + activation_bytes(graph, nid)
        peak = max(peak, live)
        live -= freed_at.pop(i, 0)
    return peak


@dataclass(frozen=True)
class Step:
    nodes: tuple[int, ...]
    fused: bool = False

    @property
    def output(self) -> int:
        return self.nodes[-1]


@dataclass(frozen=True)
class ExecutionPlan:
    graph: Graph
    path: str
    order: tuple[int, ...]
    steps: tuple[Step, ...]
    buffer_bytes: dict = field(default_factory=dict)
    peak_activation_bytes: int = 0


def _fusion_groups(graph: Graph, order) -> list[Step]:
    steps, absorbed = [], set()
    for nid in order:
        if nid in absorbed:
            continue
        node = graph.node(nid)
        group = [nid]
        if (node.op in CONV_OPS and node.attrs.get("activation", "none") == "none"
                and graph.use_count(nid) == 1 and nid not in graph.act_quant):
            (bn,) = graph.consumers(nid)
            if graph.node(bn).op is OpKind.BATCH_NORM:
                group.append(bn)
                cons = graph.consumers(bn)
                if (graph.use_count(bn) == 1 and len(cons) == 1
                        and graph.node(cons[0]).op in ACTIVATION_OPS):
                    group.append(cons[0])
        absorbed.update(group)
        steps.append(Step(tuple(group), fused=len(group) > 1))
    return steps


def plan(graph: Graph, path="opt", fuse=None) -> ExecutionPlan:
    """Build a reusable plan; ``fuse`` defaults to on for the optimized path."""
    path = _canonical_path(path)
    if not is_annotated(graph):
        graph = infer_shapes(graph)
    order = tuple(topo_order(graph))
    if fuse is None:
        fuse = path == "opt"
    if fuse and graph.precision in ("f32", "f16"):
        steps = tuple(_fusion_groups(graph, order))
    else:
        steps = tuple(Step((nid,)) for nid in order)
    buffers = {nid: activation_bytes(graph, nid) for nid in order
               if graph.node(nid).op is not OpKind.CONST}
    return ExecutionPlan(graph, path, order, steps, buffers, liveness_peak(graph, order))


def _as_batch(graph: Graph, x):
    if isinstance(x, Tensor):
        x = x.to_float()
    x = np.asarray(x)
    if not np.issubdtype(x.dtype, np.floating):
        raise DTypeMismatch(f"input must be floating point, got {x.dtype}")
    expected = graph.input_shape
    batched = x.ndim == len(expected) + 1
    if x.shape[batched:] != expected:
        raise ShapeMismatch(graph.inputs[0], f"input shape {x.shape} does not match {expected}")
    x = x.astype(np.float32)
    return (x if batched else x[None]), batched


def _w(graph, nid, name):
    t = graph.weights.get(nid, {}).get(name)
    return None if t is None else t.to_float()


def _float_op(k, node, ins, graph):
    """Evaluate one node with kernel module ``k`` on float inputs."""
    a, op, nid = node.attrs, node.op, node.id
    if op is OpKind.CONV2D:
        return k.conv2d(ins[0], _w(graph, nid, "kernel"), _w(graph, nid, "bias"),
                        a["stride"], a["padding"], a.get("activation", "none"))
    if op is OpKind.DEPTHWISE_CONV2D:
        return k.depthwise_conv2d(ins[0], _w(graph, nid, "kernel"), _w(graph, nid, "bias"),
                                  a["stride"], a["padding"], a.get("activation", "none"))
    if op is OpKind.DENSE:
        return k.dense(ins[0], _w(graph, nid, "kernel"), _w(graph, nid, "bias"),
                       a.get("activation", "none"))
    if op is OpKind.BATCH_NORM:
        return k.batch_norm(ins[0], *(_w(graph, nid, n) for n in ("gamma", "beta", "mean", "var")),
                            a["epsilon"])
    return _stateless_op(k, op, a, ins)


def _stateless_op(k, op, a, ins):
    if op is OpKind.RELU:
        return k.relu(ins[0])
    if op is OpKind.RELU6:
        return k.relu6(ins[0])
    if op is OpKind.HARD_SWISH:
        return k.hard_swish(ins[0])
    if op is OpKind.HARD_SIGMOID:
        return k.hard_sigmoid(ins[0])
    if op is OpKind.AVG_POOL:
        return k.avg_pool(ins[0], a["pool"], a["stride"], a["padding"])
    if op is OpKind.MAX_POOL:
        return k.max_pool(ins[0], a["pool"], a["stride"], a["padding"])
    if op is OpKind.GLOBAL_AVG_POOL:
        return k.global_avg_pool(ins[0])
    if op is OpKind.SOFTMAX:
        return k.softmax(ins[0])
    if op is OpKind.ADD:
        return k.add(ins[0], ins[1])
    if op is OpKind.MUL:
        return k.mul(ins[0], ins[1])
    if op is OpKind.PAD:
        return k.pad(ins[0], a["pads"])
    if op is OpKind.RESIZE:
        return k.resize(ins[0], a["size"])
    if op is OpKind.RESHAPE:
        return k.reshape(ins[0], a["shape"])
    raise UnsupportedOp(f"no kernel for {op}")


def _fused_step(graph, step):
    conv, bn = graph.node(step.nodes[0]), graph.node(step.nodes[1])
    act = ACTIVATION_OPS[graph.node(step.nodes[2]).op] if len(step.nodes) == 3 else "none"
    bn_params = (*(_w(graph, bn.id, n) for n in ("gamma", "beta", "mean", "var")),
                 bn.attrs["epsilon"])
    fn = optimized.conv2d if conv.op is OpKind.CONV2D else optimized.depthwise_conv2d
    return lambda x: fn(x, _w(graph, conv.id, "kernel"), _w(graph, conv.id, "bias"),
                        conv.attrs["stride"], conv.attrs["padding"], act, bn_params)


# --- quantized execution -------------------------------------------------

def quantize_bias(bias, in_scale, w_scale):
    if bias is None:
        return None
    q = round_half_away(np.asarray(bias, np.float64) / (in_scale * w_scale))
    return np.clip(q, -(2**31), 2**31 - 1).astype(np.int64)


def requantize(acc, acc_scale, activation, out_q: QuantParams | None):
    """Map integer accumulators to the output grid (ties away from zero).

    The activation runs on the real-valued accumulator so that hard-swish
    is exact with respect to the float definition.
    """
    real = acc.astype(np.float64) * acc_scale
    real = reference.activate(real, activation)
    if out_q is None:
        return real.astype(np.float32)
    return out_q.quantize(real)


class _Value:
    """Runtime activation: an array plus its quant params (None = float)."""

    __slots__ = ("data", "quant")

    def __init__(self, data, quant=None):
        self.data = data
        self.quant = quant

    def as_float(self):
        if self.quant is None:
            return self.data
        return self.quant.dequantize(self.data)


def _int_op(k, node, x: _Value, graph, out_q):
    w = graph.weights[node.id]
    wq = w["kernel"]
    bias = w.get("bias")
    bias = None if bias is None else bias.to_float()
    if x.quant is None:
        raise DTypeMismatch(f"node {node.id}: integer kernel needs a quantized input")
    bq = quantize_bias(bias, x.quant.scale, wq.quant.scale)
    a = node.attrs
    if node.op is OpKind.CONV2D:
        acc = k.conv2d_i8(x.data, x.quant.zero_point, wq.data, bq, a["stride"], a["padding"])
    elif node.op is OpKind.DEPTHWISE_CONV2D:
        acc = k.depthwise_conv2d_i8(x.data, x.quant.zero_point, wq.data, bq, a["stride"], a["padding"])
    else:
        acc = k.dense_i8(x.data, x.quant.zero_point, wq.data, bq)
    return _Value(requantize(acc, x.quant.scale * wq.quant.scale,
                             a.get("activation", "none"), out_q), out_q)


def _is_int_node(graph, node):
    t = graph.weights.get(node.id, {}).get("kernel")
    return t is not None and t.dtype == "i8"


def execute(p: ExecutionPlan, x, keep=None):
    """Run a plan on a batch. Returns the output array, or a dict of the
    requested node outputs when ``keep`` is an iterable of ids (``keep=True``
    keeps every node)."""
    graph = p.graph
    k = _kernels(p.path)
    xb, batched = _as_batch(graph, x)
    precision = graph.precision
    values: dict[int, _Value] = {}
    remaining = {nid: len(graph.consumers(nid)) for nid in p.order}
    keep_all = keep is True
    keep_set = set() if keep in (None, True) else set(keep)
    for step in p.steps:
        node = graph.node(step.nodes[0])
        ins = [values[i] for i in node.inputs]
        out_q = graph.act_quant.get(step.output)
        if step.fused:
            val = _Value(_fused_step(graph, step)(ins[0].data))
        elif node.op is OpKind.INPUT:
            val = _Value(out_q.quantize(xb), out_q) if out_q else _Value(xb)
        elif node.op is OpKind.CONST:
            val = _Value(graph.weights[node.id]["value"].to_float()[None])
        elif precision == "i8" and _is_int_node(graph, node):
            val = _int_op(k, node, ins[0], graph, out_q)
        else:
            out = _float_op(k, node, [v.as_float() for v in ins], graph)
            val = _Value(out_q.quantize(out), out_q) if out_q else _Value(np.asarray(out, np.float32))
        values[step.output] = val
        for i in node.inputs:
            remaining[i] -= 1
            if remaining[i] == 0 and i not in graph.outputs and not keep_all and i not in keep_set:
                del values[i]
    unbatch = (lambda a: a) if batched else (lambda a: a[0])
    if keep is not None:
        ids = p.order if keep_all else keep_set
        return {i: unbatch(values[i].as_float()) for i in ids if i in values}
    return unbatch(values[graph.outputs[0]].as_float())


def run(graph: Graph, x, path="opt", output=None):
    """Run ``graph`` on one sample (H, W, C) or a batch (N, H, W, C).

    ``output`` selects an intermediate node id instead of the graph output.
    """
    if output is None:
        return execute(plan(graph, path), x)
    p = plan(graph, path, fuse=False)
    return execute(p, x, keep=[output])[output]


def run_all(graph: Graph, x, path="opt") -> dict:
    """Every node's output (dequantized to f32) for input ``x``."""
    return execute(plan(graph, path, fuse=False), x, keep=True)


def logits_node(graph: Graph) -> int:
    out = graph.node(graph.outputs[0])
    return out.inputs[0] if out.op is OpKind.SOFTMAX else out.id


def run_op(kind, attrs, inputs, weights=None, path="ref"):
    """Evaluate one float operator on batched NHWC inputs."""
    from .ir import Node

    kind = OpKind(kind)
    node = Node(0, kind, tuple(range(1, 1 + len(inputs))), attrs)
    named = {name: v if isinstance(v, Tensor) else Tensor(np.asarray(v, np.float32))
             for name, v in (weights or {}).items()}
    if kind is OpKind.CONST:
        return named["value"].to_float()[None]
    g = Graph((node,), {0: named} if named else {})
    return _float_op(_kernels(path), node, [np.asarray(i, np.float32) for i in inputs], g)
