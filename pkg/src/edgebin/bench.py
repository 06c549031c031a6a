"""Latency, throughput and memory measurement for the executor paths."""

from __future__ import annotations

import time
from contextlib import nullcontext
from dataclasses import asdict, dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ShapeMismatch
from .executor import _canonical_path, execute, plan
from .ir import Graph, weight_bytes
from .shapes import infer_shapes, is_annotated


def ips_from_latency(mean_s: float) -> float:
    """Inferences per second for a mean per-inference latency in seconds."""
    return 1.0 / mean_s


@dataclass(frozen=True)
class BenchReport:
    model: str
    path: str
    iterations: int
    warmup: int
    mean_s: float
    p50_s: float
    p95_s: float
    ips: float
    weight_bytes: int
    peak_activation_bytes: int
    input_shape: tuple
    deterministic: bool
    threads: int | None = 1
    preprocess_mean_s: float | None = None

    def to_json(self):
        d = asdict(self)
        d["input_shape"] = list(self.input_shape)
        d["latency"] = {"mean": self.mean_s, "p50": self.p50_s, "p95": self.p95_s}
        return d


def memory_estimate(graph: Graph) -> dict:
    """Stored weight bytes and the liveness peak of activation buffers."""
    if not is_annotated(graph):
        graph = infer_shapes(graph)
    p = plan(graph, "ref", fuse=False)
    return {"weight_bytes": weight_bytes(graph), "peak_activation_bytes": p.peak_activation_bytes}


def measure(graph: Graph, x, path="opt", iterations=100, warmup=10, threads=1,
            preprocess=None) -> BenchReport:
    """Time ``iterations`` inferences after ``warmup`` untimed ones.

    ``threads=1`` pins BLAS to one thread; ``None`` leaves the pool alone.
    If ``preprocess`` is given it is timed separately on ``x`` and its
    result is what the model sees.
    """
    if iterations < 10:
        raise ValueError("iterations must be >= 10")
    if warmup < 1:
        raise ValueError("warmup must be >= 1")
    p = plan(graph, path)
    limit = threadpool_limits(limits=threads) if threads is not None else nullcontext()
    pre_times = []
    with limit:
        if preprocess is not None:
            for _ in range(3):
                t0 = time.perf_counter()
                sample = preprocess(x)
                pre_times.append(time.perf_counter() - t0)
        else:
            sample = x
        for _ in range(warmup):
            first = execute(p, sample)
        times = np.empty(iterations)
        deterministic = True
        for i in range(iterations):
            t0 = time.perf_counter()
            out = execute(p, sample)
            times[i] = time.perf_counter() - t0
            deterministic &= np.array_equal(out, first)
    mean = float(times.mean())
    return BenchReport(
        model=str(graph.metadata.get("name", "model")),
        path=_canonical_path(path),
        iterations=iterations,
        warmup=warmup,
        mean_s=mean,
        p50_s=float(np.percentile(times, 50)),
        p95_s=float(np.percentile(times, 95)),
        ips=ips_from_latency(mean),
        weight_bytes=weight_bytes(p.graph),
        peak_activation_bytes=p.peak_activation_bytes,
        input_shape=tuple(np.shape(sample)),
        deterministic=bool(deterministic),
        threads=threads,
        preprocess_mean_s=float(np.mean(pre_times)) if pre_times else None,
    )


def compare(a: BenchReport, b: BenchReport) -> dict:
    """``speedup > 1`` means ``b`` is faster than ``a``."""
    if tuple(a.input_shape) != tuple(b.input_shape):
        raise ShapeMismatch("input", f"cannot compare {a.input_shape} with {b.input_shape}")
    return {"speedup": a.mean_s / b.mean_s, "ips_ratio": b.ips / a.ips}
