"""MobileNet V1 / V3 graph builders with seeded initialization.

Layer schedules follow the canonical published architectures without the
ImageNet top: conv layers carry no bias and are followed by BatchNorm
(epsilon 1e-3). Every model ends in GlobalAvgPool -> Dense -> Softmax.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import UnsupportedAlpha
from .ir import BIN_LABELS, Graph, GraphBuilder

FAMILIES = ("mobilenet_v1", "mobilenet_v3_large", "mobilenet_v3_small")
ALPHAS = (0.25, 0.5, 0.75, 1.0)
BN_EPS = 1e-3

# (pointwise filters, depthwise stride) for the 13 depthwise-separable blocks
V1_BLOCKS = [(64, 1), (128, 2), (128, 1), (256, 2), (256, 1), (512, 2),
             (512, 1), (512, 1), (512, 1), (512, 1), (512, 1), (1024, 2), (1024, 1)]

# (kernel, expansion ratio, out filters, squeeze-excite, stride, activation)
V3_LARGE = [
    (3, 1, 16, False, 1, "relu"),
    (3, 4, 24, False, 2, "relu"),
    (3, 3, 24, False, 1, "relu"),
    (5, 3, 40, True, 2, "relu"),
    (5, 3, 40, True, 1, "relu"),
    (5, 3, 40, True, 1, "relu"),
    (3, 6, 80, False, 2, "hswish"),
    (3, 2.5, 80, False, 1, "hswish"),
    (3, 2.3, 80, False, 1, "hswish"),
    (3, 2.3, 80, False, 1, "hswish"),
    (3, 6, 112, True, 1, "hswish"),
    (3, 6, 112, True, 1, "hswish"),
    (5, 6, 160, True, 2, "hswish"),
    (5, 6, 160, True, 1, "hswish"),
    (5, 6, 160, True, 1, "hswish"),
]
V3_SMALL = [
    (3, 1, 16, True, 2, "relu"),
    (3, 72 / 16, 24, False, 2, "relu"),
    (3, 88 / 24, 24, False, 1, "relu"),
    (5, 4, 40, True, 2, "hswish"),
    (5, 6, 40, True, 1, "hswish"),
    (5, 6, 40, True, 1, "hswish"),
    (5, 3, 48, True, 1, "hswish"),
    (5, 3, 48, True, 1, "hswish"),
    (5, 6, 96, True, 2, "hswish"),
    (5, 6, 96, True, 1, "hswish"),
    (5, 6, 96, True, 1, "hswish"),
]
SE_RATIO = 0.25


@dataclass(frozen=True)
class ModelSpec:
    family: str = "mobilenet_v1"
    alpha: float = 1.0
    input_resolution: tuple[int, int] = (224, 224)  # (w, h)
    num_classes: int = 7
    resize_front: tuple[int, int] | None = None  # (w, h) the base model sees

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.alpha not in ALPHAS:
            raise UnsupportedAlpha(f"alpha {self.alpha} not in {ALPHAS}")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")

    @property
    def name(self) -> str:
        w, h = self.input_resolution
        return f"{self.family}_a{self.alpha:g}_{w}x{h}_c{self.num_classes}"


def make_divisible(v, divisor=8):
    """Round channel counts to a multiple of ``divisor`` (never down >10%)."""
    new_v = max(divisor, int(v + divisor / 2) // divisor * divisor)
    if new_v < 0.9 * v:
        new_v += divisor
    return new_v


def _conv_bn(b, x, filters, kernel, stride, act):
    x = b.conv2d(x, filters, kernel, stride, use_bias=False)
    x = b.batch_norm(x, BN_EPS)
    return b.activation(x, act) if act else x


def _dw_bn(b, x, kernel, stride, act):
    x = b.depthwise_conv2d(x, kernel, stride, use_bias=False)
    x = b.batch_norm(x, BN_EPS)
    return b.activation(x, act) if act else x


def _v1_base(b, x, alpha):
    x = _conv_bn(b, x, int(32 * alpha), 3, 2, "relu6")
    for filters, stride in V1_BLOCKS:
        x = _dw_bn(b, x, 3, stride, "relu6")
        x = _conv_bn(b, x, int(filters * alpha), 1, 1, "relu6")
    return x


def _squeeze_excite(b, x, filters):
    s = b.global_avg_pool(x)
    s = b.conv2d(s, make_divisible(filters * SE_RATIO), 1, 1)
    s = b.relu(s)
    s = b.conv2d(s, filters, 1, 1)
    s = b.hard_sigmoid(s)
    return b.mul(x, s)


def _v3_base(b, x, alpha, table, last_mult=6):
    x = _conv_bn(b, x, 16, 3, 2, "hswish")
    for i, (k, expansion, filters, se, stride, act) in enumerate(table):
        shortcut = x
        infilters = b.shapes[x][-1]
        expanded = make_divisible(infilters * expansion)
        if i:
            x = _conv_bn(b, x, expanded, 1, 1, act)
        x = _dw_bn(b, x, k, stride, act)
        if se:
            x = _squeeze_excite(b, x, expanded)
        out = make_divisible(filters * alpha)
        x = _conv_bn(b, x, out, 1, 1, None)
        if stride == 1 and infilters == out:
            x = b.add(shortcut, x)
    return _conv_bn(b, x, make_divisible(b.shapes[x][-1] * last_mult), 1, 1, "hswish")


def build(spec: ModelSpec, seed: int = 0) -> Graph:
    labels = BIN_LABELS if spec.num_classes == 7 else tuple(f"class_{i}" for i in range(spec.num_classes))
    b = GraphBuilder(spec.name, seed=seed, class_labels=labels)
    w, h = spec.input_resolution
    x = b.input((h, w, 3))
    if spec.resize_front is not None:
        rw, rh = spec.resize_front
        x = b.resize(x, (rh, rw))
    if spec.family == "mobilenet_v1":
        x = _v1_base(b, x, spec.alpha)
    elif spec.family == "mobilenet_v3_large":
        x = _v3_base(b, x, spec.alpha, V3_LARGE)
    else:
        x = _v3_base(b, x, spec.alpha, V3_SMALL)
    x = b.global_avg_pool(x)
    x = b.dense(x, spec.num_classes)
    x = b.softmax(x)
    return b.build(family=spec.family, alpha=spec.alpha, seed=seed)


def param_count(graph: Graph) -> int:
    return sum(t.size for named in graph.weights.values() for t in named.values())


def estimate_file_size(graph: Graph, dtype: str = "f32") -> int:
    """Bytes of the model file if stored at ``dtype``.

    For i8 only conv/dense kernels shrink; biases and norm parameters stay
    f32, matching what ``quantizer.quantize`` produces.
    """
    from .modelio import encoded_size
    from .quantizer import QUANT_KERNEL_OPS

    def dtypes(node, name, t):
        if t.dtype != "f32":
            return t.dtype
        if dtype == "f16":
            return "f16"
        if dtype == "i8" and name == "kernel" and node.op in QUANT_KERNEL_OPS:
            return "i8"
        return "f32"

    return encoded_size(graph, dtypes)
