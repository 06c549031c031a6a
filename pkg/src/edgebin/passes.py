"""Graph rewrite passes and the deployability checker.

The pipeline mirrors a KPU-style compiler front end: fold constants,
fuse conv+BN and conv+activation, then replace operators the target cannot
run. Every pass is a pure ``Graph -> (Graph, PassReport)`` function.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EdgeBinError, ExecFailure, NonAffinePattern, Unreplaceable
from .executor import run_op, topo_order
from .ir import ACTIVATION_OPS, CONV_OPS, FUSABLE_OPS, Graph, Node, OpKind, Tensor, weight_bytes
from .shapes import infer_shapes, is_annotated

ACTIVATION_KINDS = frozenset({OpKind.RELU, OpKind.RELU6, OpKind.HARD_SWISH, OpKind.HARD_SIGMOID})


@dataclass(frozen=True)
class TargetProfile:
    name: str
    allowed_kernel_sizes: frozenset | None  # None: any size
    max_model_bytes: int | None
    max_input_resolution: tuple[int, int] | None  # (w, h)
    accelerated_ops: frozenset = frozenset()


K210 = TargetProfile(
    name="k210",
    allowed_kernel_sizes=frozenset({(1, 1), (3, 3)}),
    max_model_bytes=6_000_000,
    max_input_resolution=(320, 240),
    accelerated_ops=frozenset({OpKind.CONV2D, OpKind.DEPTHWISE_CONV2D, OpKind.BATCH_NORM,
                               OpKind.AVG_POOL, OpKind.MAX_POOL} | ACTIVATION_KINDS),
)
GENERIC = TargetProfile("generic", None, None, None, frozenset(OpKind) - {OpKind.INPUT})
PROFILES = {"k210": K210, "generic": GENERIC}


@dataclass
class PassReport:
    name: str
    nodes_before: int
    nodes_after: int
    removed: int = 0
    added: int = 0
    fused: int = 0
    diagnostics: list = field(default_factory=list)

    def __post_init__(self):
        if self.nodes_after != self.nodes_before - self.removed + self.added:
            raise AssertionError(f"{self.name}: inconsistent node counts {self}")

    def to_json(self):
        return {"pass": self.name, "nodes_before": self.nodes_before,
                "nodes_after": self.nodes_after, "removed": self.removed,
                "added": self.added, "fused": self.fused,
                "diagnostics": [str(d) for d in self.diagnostics]}


def _rewire(nodes, mapping):
    """Point consumers of ``old`` ids at ``mapping[old]``."""
    return [replace(n, inputs=tuple(mapping.get(i, i) for i in n.inputs))
            if any(i in mapping for i in n.inputs) else n for n in nodes]


def _finish(graph, nodes, weights, mapping=None, **extra):
    mapping = mapping or {}
    nodes = _rewire(nodes, mapping)
    outputs = tuple(mapping.get(o, o) for o in graph.outputs)
    live = {n.id for n in nodes}
    weights = {k: v for k, v in weights.items() if k in live}
    act_quant = {k: v for k, v in graph.act_quant.items() if k in live}
    return graph.evolve(nodes=tuple(nodes), weights=weights, outputs=outputs,
                        act_quant=act_quant, **extra)


# --- constant folding ----------------------------------------------------

def fold_constants(graph: Graph) -> tuple[Graph, PassReport]:
    """Evaluate every node whose inputs are all constants and replace it by
    a Const holding the result; then drop constants nobody consumes."""
    before = len(graph.nodes)
    nodes = {n.id: n for n in graph.nodes}
    weights = dict(graph.weights)
    folded = 0
    for nid in topo_order(graph):
        node = nodes[nid]
        if node.op in (OpKind.CONST, OpKind.INPUT) or not node.inputs:
            continue
        if not all(nodes[i].op is OpKind.CONST for i in node.inputs):
            continue
        args = [weights[i]["value"].to_float()[None] for i in node.inputs]
        try:
            value = run_op(node.op, node.attrs, args, weights.get(nid), path="ref")[0]
        except (EdgeBinError, ValueError, KeyError) as exc:
            raise ExecFailure(f"folding node {nid} ({node.op.value}) failed: {exc}") from exc
        nodes[nid] = Node(nid, OpKind.CONST, (), {}, tuple(value.shape))
        weights[nid] = {"value": Tensor(np.asarray(value, np.float32))}
        folded += 1
    # dead constants: sweep until nothing changes (a Const may feed only dead Consts)
    order = [n.id for n in graph.nodes]
    dead = 0
    while True:
        used = {i for n in nodes.values() for i in n.inputs} | set(graph.outputs)
        drop = [i for i in order if i in nodes and nodes[i].op is OpKind.CONST and i not in used]
        if not drop:
            break
        for i in drop:
            del nodes[i]
        dead += len(drop)
    new_nodes = [nodes[i] for i in order if i in nodes]
    g = _finish(graph, new_nodes, weights)
    report = PassReport("fold_constants", before, len(new_nodes), removed=folded + dead,
                        added=folded, fused=0)
    return g, report


# --- conv + batch-norm fusion -------------------------------------------

def fold_bn_into_conv(kernel, bias, gamma, beta, mean, var, eps, depthwise=False):
    """w' = w * gamma / sqrt(var + eps); b' = beta + (b - mean) * gamma / sqrt(var + eps)."""
    scale = gamma.astype(np.float64) / np.sqrt(var.astype(np.float64) + eps)
    # output channels: last axis of HWIO, third axis of a (kh, kw, C, 1) depthwise kernel
    if depthwise:
        k = kernel.astype(np.float64) * scale[None, None, :, None]
    else:
        k = kernel.astype(np.float64) * scale
    b = np.zeros_like(scale) if bias is None else bias.astype(np.float64)
    b = beta + (b - mean) * scale
    return k.astype(np.float32), b.astype(np.float32)


def _to_fixpoint(sweep, name, graph):
    """Repeat a single-sweep rewrite until it stops changing the graph, so
    chains such as conv -> BN -> BN collapse in one pass invocation."""
    before, removed = len(graph.nodes), 0
    while True:
        graph, n = sweep(graph)
        removed += n
        if n == 0:
            break
    return graph, PassReport(name, before, len(graph.nodes), removed=removed, fused=removed)


def fuse_conv_bn(graph: Graph) -> tuple[Graph, PassReport]:
    """Fold every BatchNorm that directly follows a conv into its weights."""
    return _to_fixpoint(_fuse_conv_bn_sweep, "fuse_conv_bn", graph)


def _fuse_conv_bn_sweep(graph):
    nodes = list(graph.nodes)
    weights = dict(graph.weights)
    mapping, removed = {}, set()
    for node in graph.nodes:
        if node.op is not OpKind.BATCH_NORM:
            continue
        src = graph.node(node.inputs[0])
        if src.op not in CONV_OPS:
            continue
        if graph.use_count(src.id) != 1:
            raise NonAffinePattern(
                f"conv {src.id} feeds BatchNorm {node.id} and {graph.use_count(src.id) - 1} other use(s)")
        if src.attrs.get("activation", "none") != "none":
            continue  # BN after an already-activated conv is not affine in the conv output
        w, bn = graph.weights[src.id], graph.weights[node.id]
        k, b = fold_bn_into_conv(
            w["kernel"].to_float(), w["bias"].to_float() if "bias" in w else None,
            *(bn[n].to_float() for n in ("gamma", "beta", "mean", "var")), node.attrs["epsilon"],
            depthwise=src.op is OpKind.DEPTHWISE_CONV2D)
        weights[src.id] = {"kernel": Tensor(k), "bias": Tensor(b)}
        idx = next(i for i, n in enumerate(nodes) if n.id == src.id)
        nodes[idx] = replace(src, attrs={**src.attrs, "use_bias": True})
        mapping[node.id] = src.id
        removed.add(node.id)
    nodes = [n for n in nodes if n.id not in removed]
    return _finish(graph, nodes, weights, mapping), len(removed)


# --- activation fusion --------------------------------------------------

def fuse_activation(graph: Graph) -> tuple[Graph, PassReport]:
    """Absorb ReLU/ReLU6/HardSwish into the fused-activation slot of the
    conv or dense that produces its input, when that conv's output has no
    other consumer."""
    return _to_fixpoint(_fuse_activation_sweep, "fuse_activation", graph)


def _fuse_activation_sweep(graph):
    by_id = {n.id: n for n in graph.nodes}
    mapping, removed = {}, set()
    for node in graph.nodes:
        if node.op not in ACTIVATION_OPS:
            continue
        src = by_id[node.inputs[0]]
        if src.op not in FUSABLE_OPS or src.attrs.get("activation", "none") != "none":
            continue
        if graph.use_count(src.id) != 1:
            continue
        by_id[src.id] = replace(src, attrs={**src.attrs, "activation": ACTIVATION_OPS[node.op]})
        mapping[node.id] = src.id
        removed.add(node.id)
    nodes = [by_id[n.id] for n in graph.nodes if n.id not in removed]
    return _finish(graph, nodes, graph.weights, mapping), len(removed)


# --- operator replacement ------------------------------------------------

def _replace_dense(graph, node, new_id):
    """Dense over a 1x1xC activation -> 1x1 Conv2D + Reshape."""
    in_shape = graph.node(node.inputs[0]).shape
    if len(in_shape) != 3 or in_shape[:2] != (1, 1):
        return None
    w = graph.weights[node.id]
    units = node.attrs["units"]
    kernel = w["kernel"]
    k4 = Tensor(kernel.data.reshape(1, 1, in_shape[2], units), kernel.quant)
    conv_w = {"kernel": k4}
    if "bias" in w:
        conv_w["bias"] = w["bias"]
    conv = Node(new_id, OpKind.CONV2D, node.inputs, {
        "filters": units, "kernel": (1, 1), "stride": (1, 1), "padding": "valid",
        "activation": node.attrs.get("activation", "none"),
        "use_bias": node.attrs.get("use_bias", True)}, (1, 1, units))
    reshape = Node(node.id, OpKind.RESHAPE, (new_id,), {"shape": (units,)}, node.shape)
    return [conv, reshape], {new_id: conv_w}


def _replace_gap(graph, node, new_id):
    h, w, _ = graph.node(node.inputs[0]).shape
    pool = Node(node.id, OpKind.AVG_POOL, node.inputs,
                {"pool": (h, w), "stride": (1, 1), "padding": "valid"}, node.shape)
    return [pool], {}


def _tag_softmax(graph, node, new_id):
    if node.attrs.get("host_fallback"):
        return None
    return [replace(node, attrs={**node.attrs, "host_fallback": True})], {}


# op -> rewrite(graph, node, fresh_id) returning (nodes, new weights) or None
REPLACEMENTS = {
    OpKind.DENSE: _replace_dense,
    OpKind.GLOBAL_AVG_POOL: _replace_gap,
    OpKind.SOFTMAX: _tag_softmax,
}

# (op, kernel) -> rewrite for kernels the target lacks; intentionally empty:
# no exact decomposition of e.g. a 5x5 depthwise into 3x3 KPU kernels exists
KERNEL_CATALOG: dict = {}


def replace_ops(graph: Graph, profile: TargetProfile = GENERIC) -> tuple[Graph, PassReport]:
    if not is_annotated(graph):
        graph = infer_shapes(graph)
    before = len(graph.nodes)
    weights = dict(graph.weights)
    nodes, added, diags = [], 0, []
    next_id = graph.next_id()
    for node in graph.nodes:
        if node.op in CONV_OPS and profile.allowed_kernel_sizes is not None:
            k = tuple(node.attrs["kernel"])
            if k not in profile.allowed_kernel_sizes:
                rewrite = KERNEL_CATALOG.get((node.op, k))
                if rewrite is None:
                    raise Unreplaceable(node.id, f"{node.op.value} {k[0]}x{k[1]} kernel is not "
                                        f"supported by {profile.name} and has no replacement")
        rewrite = REPLACEMENTS.get(node.op)
        result = rewrite(graph, node, next_id) if rewrite else None
        if result is None:
            nodes.append(node)
            continue
        new_nodes, new_weights = result
        if node.op is OpKind.DENSE:
            weights.pop(node.id, None)
            next_id += 1
        weights.update(new_weights)
        nodes.extend(new_nodes)
        added += len(new_nodes) - 1
        diags.append(f"{node.op.value} {node.id} -> {'+'.join(n.op.value for n in new_nodes)}")
    g = _finish(graph, nodes, weights)
    return g, PassReport("replace_ops", before, len(nodes), removed=0, added=added,
                         diagnostics=diags)


# --- pipeline and deployability ------------------------------------------

PASS_GROUPS = {
    "fold": (fold_constants,),
    "fuse": (fuse_conv_bn, fuse_activation),
    "replace": ("replace",),
}


def optimize(graph: Graph, profile: TargetProfile = GENERIC, passes=("fold", "fuse", "replace")):
    """Run the named pass groups in order; returns (graph, [PassReport])."""
    reports = []
    for group in passes:
        if group not in PASS_GROUPS:
            raise ValueError(f"unknown pass {group!r}; choose from {sorted(PASS_GROUPS)}")
        for fn in PASS_GROUPS[group]:
            if fn == "replace":
                graph, rep = replace_ops(graph, profile)
            else:
                graph, rep = fn(graph)
            reports.append(rep)
    return infer_shapes(graph), reports


@dataclass
class Deployability:
    target: str
    fits: bool
    weight_bytes: int
    violations: list

    def to_json(self):
        return {"target": self.target, "fits": self.fits, "weight_bytes": self.weight_bytes,
                "violations": self.violations}


def check_target(graph: Graph, profile: TargetProfile = K210) -> Deployability:
    if not is_annotated(graph):
        graph = infer_shapes(graph)
    violations = []
    if profile.allowed_kernel_sizes is not None:
        for n in graph.nodes:
            if n.op in CONV_OPS and tuple(n.attrs["kernel"]) not in profile.allowed_kernel_sizes:
                k = n.attrs["kernel"]
                violations.append(f"kernel: node {n.id} {n.op.value} {k[0]}x{k[1]}")
    wb = weight_bytes(graph)
    if profile.max_model_bytes is not None and wb > profile.max_model_bytes:
        violations.append(f"size: {wb} weight bytes exceed {profile.max_model_bytes}")
    if profile.max_input_resolution is not None:
        h, w = graph.input_shape[:2]
        mw, mh = profile.max_input_resolution
        if w > mw or h > mh:
            violations.append(f"resolution: input {w}x{h} exceeds {mw}x{mh}")
    return Deployability(profile.name, not violations, wb, violations)
