"""Structural validation returning diagnostics instead of raising."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import EdgeBinError
from .ir import Graph, OpKind
from .shapes import ALLOWED_ATTRS, arity


class Diagnostic:
    pass


@dataclass(frozen=True)
class DanglingInput(Diagnostic):
    missing: int
    node: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class CycleDetected(Diagnostic):
    nodes: tuple[int, ...] = field(default=(), compare=False)


@dataclass(frozen=True)
class DuplicateId(Diagnostic):
    node: int


@dataclass(frozen=True)
class BadArity(Diagnostic):
    node: int
    expected: int
    got: int


@dataclass(frozen=True)
class UnknownAttr(Diagnostic):
    node: int
    names: tuple[str, ...]


@dataclass(frozen=True)
class InterfaceError(Diagnostic):
    """Classifier graphs must have exactly one input and one output."""

    message: str


@dataclass(frozen=True)
class ShapeError(Diagnostic):
    node: int | None
    message: str


@dataclass(frozen=True)
class LabelMismatch(Diagnostic):
    labels: int
    outputs: int


def _peel(ids, edges_in, edges_out):
    """Repeatedly drop nodes with no remaining in-edges (Kahn's algorithm)."""
    indeg = {n: sum(1 for i in edges_in.get(n, ()) if i in ids) for n in ids}
    ready = [n for n, d in indeg.items() if d == 0]
    left = set(ids)
    while ready:
        n = ready.pop()
        left.discard(n)
        for c in edges_out.get(n, ()):
            if c in left:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
    return left


def find_cycle_nodes(graph: Graph) -> set[int]:
    """Ids on a cycle: what survives peeling sources forwards and then
    sinks backwards (nodes merely downstream of a cycle are dropped)."""
    ids = {n.id for n in graph.nodes}
    inputs = {n.id: [i for i in n.inputs if i in ids] for n in graph.nodes}
    consumers: dict[int, list[int]] = {}
    for n in graph.nodes:
        for i in inputs[n.id]:
            consumers.setdefault(i, []).append(n.id)
    left = _peel(ids, inputs, consumers)
    return _peel(left, consumers, inputs)


def validate(graph: Graph) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    seen: set[int] = set()
    for n in graph.nodes:
        if n.id in seen:
            diags.append(DuplicateId(n.id))
        seen.add(n.id)
    for n in graph.nodes:
        for i in n.inputs:
            if i not in seen:
                diags.append(DanglingInput(i, n.id))
        if len(n.inputs) != arity(n.op):
            diags.append(BadArity(n.id, arity(n.op), len(n.inputs)))
        extra = set(n.attrs) - ALLOWED_ATTRS[n.op]
        if extra:
            diags.append(UnknownAttr(n.id, tuple(sorted(extra))))
    for i in (*graph.inputs, *graph.outputs):
        if i not in seen:
            diags.append(DanglingInput(i))
    if len(graph.inputs) != 1 or len(graph.outputs) != 1:
        diags.append(InterfaceError(
            f"expected one input and one output, got {len(graph.inputs)}/{len(graph.outputs)}"))
    elif graph.inputs[0] in seen and graph.node(graph.inputs[0]).op is not OpKind.INPUT:
        diags.append(InterfaceError("graph input is not an Input node"))
    cyc = find_cycle_nodes(graph)
    if cyc:
        diags.append(CycleDetected(tuple(sorted(cyc))))
    if diags:
        return diags

    from .shapes import infer_shapes

    try:
        annotated = infer_shapes(graph)
    except EdgeBinError as exc:
        return [ShapeError(getattr(exc, "node", None), str(exc))]
    labels = graph.class_labels
    if labels:
        out_shape = annotated.node(graph.outputs[0]).shape
        if out_shape[-1] != len(labels):
            diags.append(LabelMismatch(len(labels), out_shape[-1]))
    return diags
