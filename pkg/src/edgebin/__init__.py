"""edgebin: a small NHWC inference stack for on-device waste classification.

Graph IR, rewrite passes, post-training quantization, reference and
optimized executors, MobileNet builders, dataset utilities, evaluation
metrics, the bin controller state machine, a solar power planner and a
benchmark harness.
"""

from .errors import EdgeBinError
from .ir import BIN_LABELS, RECYCLING_LABELS, Graph, GraphBuilder, Node, OpKind, QuantParams, Tensor

__version__ = "0.1.0"

__all__ = [
    "BIN_LABELS", "RECYCLING_LABELS", "EdgeBinError", "Graph", "GraphBuilder", "Node",
    "OpKind", "QuantParams", "Tensor", "__version__",
]
