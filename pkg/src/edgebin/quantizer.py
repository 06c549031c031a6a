"""Post-training quantization to f16 and i8.

i8 uses symmetric per-tensor scales for conv/dense kernels (stored range
[-127, 127], zero point 0) and asymmetric per-tensor affine parameters for
activations, derived from calibration min/max. Biases, batch-norm
parameters and constants stay f32; at run time biases are folded into the
int32 accumulator with scale ``input_scale * weight_scale``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import EmptyDataset, MissingStats
from .executor import run_all
from .ir import FUSABLE_OPS, Graph, OpKind, QuantParams, Tensor, round_half_away

log = logging.getLogger(__name__)

QUANT_KERNEL_OPS = FUSABLE_OPS


@dataclass(frozen=True)
class TensorStats:
    min: float
    max: float
    samples: int = 1

    def merge(self, other: "TensorStats") -> "TensorStats":
        return TensorStats(min(self.min, other.min), max(self.max, other.max),
                           self.samples + other.samples)


class CalibrationStats(dict):
    """node id -> TensorStats; merging is associative and commutative."""

    def merge(self, other: "CalibrationStats") -> "CalibrationStats":
        out = CalibrationStats(self)
        for k, v in other.items():
            out[k] = out[k].merge(v) if k in out else v
        return out


def _stat_nodes(graph: Graph):
    # Softmax output stays float (host-side), constants are weights
    return [n.id for n in graph.nodes if n.op not in (OpKind.CONST, OpKind.SOFTMAX)]


def calibrate(graph: Graph, dataset, path="ref") -> CalibrationStats:
    """Running min/max of every activation over ``dataset`` (list of inputs),
    computed by executing the float graph."""
    dataset = list(dataset)
    if not dataset:
        raise EmptyDataset("calibration needs at least one input")
    ids = _stat_nodes(graph)
    stats = CalibrationStats()
    for x in dataset:
        acts = run_all(graph, x, path)
        one = CalibrationStats({
            i: TensorStats(float(np.min(acts[i])), float(np.max(acts[i])), 1) for i in ids})
        stats = stats.merge(one)
    return stats


def activation_params(lo: float, hi: float) -> tuple[QuantParams, bool]:
    """Asymmetric i8 params for [lo, hi] widened to include 0 so that zero
    is exactly representable. Returns (params, degenerate)."""
    lo, hi = min(lo, 0.0), max(hi, 0.0)
    if hi == lo:
        # only reachable for an all-zero tensor after widening
        return QuantParams(1.0, int(np.clip(round_half_away(lo), -128, 127))), True
    scale = (hi - lo) / 255.0
    zp = int(np.clip(round_half_away(-128 - lo / scale), -128, 127))
    return QuantParams(scale, zp), False


def quantize_symmetric(x) -> Tensor:
    """Symmetric per-tensor i8: scale = max|x| / 127, stored in [-127, 127]."""
    x = np.asarray(x, dtype=np.float64)
    amax = float(np.max(np.abs(x))) if x.size else 0.0
    if amax == 0.0:
        log.warning("degenerate all-zero weight tensor; scale forced to 1.0")
        qp = QuantParams(1.0, 0)
    else:
        qp = QuantParams(amax / 127.0, 0)
    return Tensor(qp.quantize(x, qmin=-127, qmax=127), qp)


def quantize(graph: Graph, stats: CalibrationStats | None = None, scheme="i8") -> Graph:
    """Return a new graph in precision ``scheme`` (``"f16"`` or ``"i8"``)."""
    if graph.precision != "f32":
        raise ValueError(f"graph is already {graph.precision}; dequantize first")
    meta = {**graph.metadata, "precision": scheme}
    if scheme == "f16":
        weights = {nid: {k: Tensor(t.data.astype(np.float16)) for k, t in named.items()}
                   for nid, named in graph.weights.items()}
        return graph.evolve(weights=weights, metadata=meta)
    if scheme != "i8":
        raise ValueError(f"unknown scheme {scheme!r}")
    stats = stats or CalibrationStats()
    act_quant = {}
    for nid in _stat_nodes(graph):
        if nid not in stats:
            raise MissingStats(nid)
        qp, degenerate = activation_params(stats[nid].min, stats[nid].max)
        if degenerate:
            log.warning("node %d: degenerate activation range [%g, %g]", nid,
                        stats[nid].min, stats[nid].max)
        act_quant[nid] = qp
    weights = {}
    for node in graph.nodes:
        named = graph.weights.get(node.id)
        if not named:
            continue
        if node.op in QUANT_KERNEL_OPS:
            named = {**named, "kernel": quantize_symmetric(named["kernel"].to_float())}
        weights[node.id] = named
    return graph.evolve(weights=weights, act_quant=act_quant, metadata=meta)


def dequantize(graph: Graph) -> Graph:
    """Map every stored value back to f32 (``scale * (q - zero_point)``)."""
    weights = {nid: {k: Tensor(t.to_float()) for k, t in named.items()}
               for nid, named in graph.weights.items()}
    return graph.evolve(weights=weights, act_quant={},
                        metadata={**graph.metadata, "precision": "f32"})


def weight_bytes_by_scheme(graph: Graph, scheme: str) -> int:
    """Stored weight bytes if ``graph`` were quantized to ``scheme``."""
    total = 0
    for node in graph.nodes:
        for name, t in graph.weights.get(node.id, {}).items():
            if scheme == "f16":
                total += t.size * 2
            elif scheme == "i8" and name == "kernel" and node.op in QUANT_KERNEL_OPS:
                total += t.size
            else:
                total += t.size * 4
    return total
