"""Tensor and graph intermediate representation.

Activations are laid out NHWC (the batch axis is implicit in annotated
shapes), convolution kernels HWIO and depthwise kernels ``(kh, kw, C, 1)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Mapping

import numpy as np

BIN_LABELS = ("cardboard", "glass", "paper", "plastic", "metal", "hand", "empty")
RECYCLING_LABELS = BIN_LABELS[:5]

DTYPES = {"f32": np.dtype(np.float32), "f16": np.dtype(np.float16), "i8": np.dtype(np.int8)}
_DTYPE_NAMES = {v: k for k, v in DTYPES.items()}


def round_half_away(x):
    """Round to nearest integer, ties away from zero."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True)
class QuantParams:
    """Per-tensor affine map ``real = scale * (q - zero_point)``."""

    scale: float
    zero_point: int = 0

    def __post_init__(self):
        if not (self.scale > 0 and np.isfinite(self.scale)):
            raise ValueError(f"scale must be positive and finite, got {self.scale}")
        if not -128 <= self.zero_point <= 127:
            raise ValueError(f"zero_point {self.zero_point} outside [-128, 127]")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "zero_point", int(self.zero_point))

    def quantize(self, x, qmin=-128, qmax=127) -> np.ndarray:
        q = round_half_away(np.asarray(x, dtype=np.float64) / self.scale) + self.zero_point
        return np.clip(q, qmin, qmax).astype(np.int8)

    def dequantize(self, q, dtype=np.float32) -> np.ndarray:
        real = self.scale * (np.asarray(q, dtype=np.float64) - self.zero_point)
        return real.astype(dtype)

    def to_json(self):
        return {"scale": self.scale, "zero_point": self.zero_point}


@dataclass(frozen=True, eq=False)
class Tensor:
    """A typed weight buffer; ``quant`` is present exactly when dtype is i8."""

    data: np.ndarray
    quant: QuantParams | None = None

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.dtype not in _DTYPE_NAMES:
            arr = arr.astype(np.float32)
        if (arr.dtype == np.int8) != (self.quant is not None):
            raise ValueError("quant params must be given iff dtype is i8")
        arr = np.array(arr, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def dtype(self) -> str:
        return _DTYPE_NAMES[self.data.dtype]

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def nbytes(self) -> int:
        return int(self.data.nbytes)

    def to_float(self) -> np.ndarray:
        if self.quant is not None:
            return self.quant.dequantize(self.data)
        return self.data.astype(np.float32)

    def same_as(self, other: "Tensor") -> bool:
        return (
            self.data.dtype == other.data.dtype
            and self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
            and self.quant == other.quant
        )


class OpKind(str, enum.Enum):
    INPUT = "Input"
    CONV2D = "Conv2D"
    DEPTHWISE_CONV2D = "DepthwiseConv2D"
    DENSE = "Dense"
    BATCH_NORM = "BatchNorm"
    RELU = "ReLU"
    RELU6 = "ReLU6"
    HARD_SWISH = "HardSwish"
    HARD_SIGMOID = "HardSigmoid"
    AVG_POOL = "AvgPool"
    MAX_POOL = "MaxPool"
    GLOBAL_AVG_POOL = "GlobalAvgPool"
    SOFTMAX = "Softmax"
    ADD = "Add"
    MUL = "Mul"
    PAD = "Pad"
    RESIZE = "Resize"
    RESHAPE = "Reshape"
    CONST = "Const"


CONV_OPS = frozenset({OpKind.CONV2D, OpKind.DEPTHWISE_CONV2D})
FUSABLE_OPS = frozenset({OpKind.CONV2D, OpKind.DEPTHWISE_CONV2D, OpKind.DENSE})
ACTIVATION_OPS = {OpKind.RELU: "relu", OpKind.RELU6: "relu6", OpKind.HARD_SWISH: "hswish"}
FUSED_ACTIVATIONS = ("none", "relu", "relu6", "hswish")


def _freeze(value):
    if isinstance(value, (list, tuple)):
        return tuple(_freeze(v) for v in value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


@dataclass(frozen=True)
class Node:
    id: int
    op: OpKind
    inputs: tuple[int, ...] = ()
    attrs: Mapping[str, Any] = field(default_factory=dict)
    shape: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "op", OpKind(self.op))
        object.__setattr__(self, "id", int(self.id))
        object.__setattr__(self, "inputs", tuple(int(i) for i in self.inputs))
        object.__setattr__(self, "attrs", {k: _freeze(v) for k, v in dict(self.attrs).items()})
        if self.shape is not None:
            object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))


@dataclass(frozen=True)
class Graph:
    """Immutable DAG of operator nodes plus per-node named weight tensors.

    ``act_quant`` holds activation quantization parameters keyed by the id
    of the producing node; it is empty for float graphs.
    """

    nodes: tuple[Node, ...]
    weights: Mapping[int, Mapping[str, Tensor]] = field(default_factory=dict)
    inputs: tuple[int, ...] = ()
    outputs: tuple[int, ...] = ()
    metadata: Mapping[str, Any] = field(default_factory=dict)
    act_quant: Mapping[int, QuantParams] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "inputs", tuple(int(i) for i in self.inputs))
        object.__setattr__(self, "outputs", tuple(int(i) for i in self.outputs))
        object.__setattr__(
            self, "weights", {int(k): dict(v) for k, v in dict(self.weights).items() if v}
        )
        object.__setattr__(self, "act_quant", {int(k): v for k, v in dict(self.act_quant).items()})
        object.__setattr__(self, "metadata", dict(self.metadata))

    @cached_property
    def by_id(self) -> dict[int, Node]:
        return {n.id: n for n in self.nodes}

    def node(self, node_id: int) -> Node:
        return self.by_id[node_id]

    @cached_property
    def consumer_map(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {n.id: [] for n in self.nodes}
        for n in self.nodes:
            for i in n.inputs:
                out.setdefault(i, []).append(n.id)
        return out

    def consumers(self, node_id: int) -> list[int]:
        return self.consumer_map.get(node_id, [])

    def use_count(self, node_id: int) -> int:
        """Consumers plus one if the node is a graph output."""
        return len(self.consumers(node_id)) + (node_id in self.outputs)

    @property
    def precision(self) -> str:
        return self.metadata.get("precision", "f32")

    @property
    def class_labels(self) -> tuple[str, ...]:
        return tuple(self.metadata.get("class_labels", ()))

    @property
    def input_shape(self) -> tuple[int, ...]:
        return tuple(self.node(self.inputs[0]).attrs["shape"])

    def next_id(self) -> int:
        return max((n.id for n in self.nodes), default=-1) + 1

    def evolve(self, **changes) -> "Graph":
        return replace(self, **changes)

    def same_as(self, other: "Graph") -> bool:
        """Structural equality plus bitwise weight equality."""
        if (
            self.nodes != other.nodes
            or self.inputs != other.inputs
            or self.outputs != other.outputs
            or self.metadata != other.metadata
            or self.act_quant != other.act_quant
            or self.weights.keys() != other.weights.keys()
        ):
            return False
        for nid, named in self.weights.items():
            theirs = other.weights[nid]
            if named.keys() != theirs.keys():
                return False
            if not all(t.same_as(theirs[k]) for k, t in named.items()):
                return False
        return True


def weight_bytes(graph: Graph) -> int:
    return sum(t.nbytes for named in graph.weights.values() for t in named.values())


class GraphBuilder:
    """Incremental graph construction with shape tracking and seeded init.

    Each method returns the new node id. Kernels default to He-uniform,
    biases to zero and batch-norm to the identity statistics; any of them
    can be overridden with explicit arrays.
    """

    def __init__(self, name="graph", seed=0, class_labels=None):
        self.name = name
        self.rng = np.random.default_rng(seed)
        self.nodes: list[Node] = []
        self.weights: dict[int, dict[str, Tensor]] = {}
        self.shapes: dict[int, tuple[int, ...]] = {}
        self.input_ids: list[int] = []
        self.class_labels = list(class_labels) if class_labels is not None else None

    def _add(self, op, inputs=(), attrs=None, weights=None) -> int:
        from .shapes import node_output_shape

        nid = len(self.nodes)
        node = Node(nid, op, tuple(inputs), attrs or {})
        named = {k: v if isinstance(v, Tensor) else Tensor(np.asarray(v, np.float32))
                 for k, v in (weights or {}).items()}
        shape = node_output_shape(node, [self.shapes[i] for i in node.inputs], named)
        self.nodes.append(replace(node, shape=shape))
        if named:
            self.weights[nid] = named
        self.shapes[nid] = shape
        return nid

    def _he_uniform(self, shape, fan_in):
        limit = np.sqrt(6.0 / fan_in)
        return self.rng.uniform(-limit, limit, size=shape).astype(np.float32)

    def input(self, shape) -> int:
        nid = self._add(OpKind.INPUT, (), {"shape": tuple(shape)})
        self.input_ids.append(nid)
        return nid

    def const(self, value) -> int:
        return self._add(OpKind.CONST, (), {}, {"value": np.asarray(value, np.float32)})

    def conv2d(self, x, filters, kernel=3, stride=1, padding="same", activation="none",
               use_bias=True, weights=None) -> int:
        k = _pair(kernel)
        cin = self.shapes[x][-1]
        w = dict(weights or {})
        w.setdefault("kernel", self._he_uniform((*k, cin, filters), k[0] * k[1] * cin))
        if use_bias:
            w.setdefault("bias", np.zeros(filters, np.float32))
        attrs = {"filters": filters, "kernel": k, "stride": _pair(stride), "padding": padding,
                 "activation": activation, "use_bias": use_bias}
        return self._add(OpKind.CONV2D, (x,), attrs, w)

    def depthwise_conv2d(self, x, kernel=3, stride=1, padding="same", activation="none",
                         use_bias=True, weights=None) -> int:
        k = _pair(kernel)
        c = self.shapes[x][-1]
        w = dict(weights or {})
        w.setdefault("kernel", self._he_uniform((*k, c, 1), k[0] * k[1]))
        if use_bias:
            w.setdefault("bias", np.zeros(c, np.float32))
        attrs = {"kernel": k, "stride": _pair(stride), "padding": padding,
                 "activation": activation, "use_bias": use_bias}
        return self._add(OpKind.DEPTHWISE_CONV2D, (x,), attrs, w)

    def dense(self, x, units, activation="none", use_bias=True, weights=None) -> int:
        fan_in = int(np.prod(self.shapes[x]))
        w = dict(weights or {})
        w.setdefault("kernel", self._he_uniform((fan_in, units), fan_in))
        if use_bias:
            w.setdefault("bias", np.zeros(units, np.float32))
        attrs = {"units": units, "activation": activation, "use_bias": use_bias}
        return self._add(OpKind.DENSE, (x,), attrs, w)

    def batch_norm(self, x, epsilon=1e-3, gamma=None, beta=None, mean=None, var=None) -> int:
        c = self.shapes[x][-1]
        w = {
            "gamma": np.ones(c, np.float32) if gamma is None else gamma,
            "beta": np.zeros(c, np.float32) if beta is None else beta,
            "mean": np.zeros(c, np.float32) if mean is None else mean,
            "var": np.ones(c, np.float32) if var is None else var,
        }
        return self._add(OpKind.BATCH_NORM, (x,), {"epsilon": float(epsilon)}, w)

    def relu(self, x):
        return self._add(OpKind.RELU, (x,))

    def relu6(self, x):
        return self._add(OpKind.RELU6, (x,))

    def hard_swish(self, x):
        return self._add(OpKind.HARD_SWISH, (x,))

    def hard_sigmoid(self, x):
        return self._add(OpKind.HARD_SIGMOID, (x,))

    def activation(self, x, name):
        ops = {"relu": self.relu, "relu6": self.relu6, "hswish": self.hard_swish,
               "hsigmoid": self.hard_sigmoid}
        return ops[name](x)

    def avg_pool(self, x, pool=2, stride=None, padding="valid"):
        return self._add(OpKind.AVG_POOL, (x,), {"pool": _pair(pool),
                         "stride": _pair(stride or pool), "padding": padding})

    def max_pool(self, x, pool=2, stride=None, padding="valid"):
        return self._add(OpKind.MAX_POOL, (x,), {"pool": _pair(pool),
                         "stride": _pair(stride or pool), "padding": padding})

    def global_avg_pool(self, x):
        return self._add(OpKind.GLOBAL_AVG_POOL, (x,))

    def softmax(self, x):
        return self._add(OpKind.SOFTMAX, (x,))

    def add(self, a, b):
        return self._add(OpKind.ADD, (a, b))

    def mul(self, a, b):
        return self._add(OpKind.MUL, (a, b))

    def pad(self, x, pads):
        return self._add(OpKind.PAD, (x,), {"pads": pads})

    def resize(self, x, size_hw):
        return self._add(OpKind.RESIZE, (x,), {"size": tuple(size_hw)})

    def reshape(self, x, shape):
        return self._add(OpKind.RESHAPE, (x,), {"shape": tuple(shape)})

    def build(self, output=None, **metadata) -> Graph:
        out = len(self.nodes) - 1 if output is None else output
        meta = {"name": self.name, "precision": "f32"}
        if self.class_labels is not None:
            meta["class_labels"] = list(self.class_labels)
        meta.update(metadata)
        return Graph(tuple(self.nodes), self.weights, tuple(self.input_ids), (out,), meta)


def _pair(v):
    if isinstance(v, (tuple, list)):
        return (int(v[0]), int(v[1]))
    return (int(v), int(v))
