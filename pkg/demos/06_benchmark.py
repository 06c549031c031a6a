"""
Latency and throughput on the host
==================================

Warmup runs are discarded; BLAS is pinned to one thread. The full-frame
512x384 model is slower than the 224x224 one of the same family.
"""

import numpy as np

from edgebin.bench import compare, measure, memory_estimate
from edgebin.zoo import ModelSpec, build

rng = np.random.default_rng(0)
g = build(ModelSpec("mobilenet_v1", 0.25, (224, 224)))
x = rng.random((224, 224, 3), dtype=np.float32)
ref = measure(g, x, "ref", iterations=10, warmup=2)
opt = measure(g, x, "opt", iterations=10, warmup=2)
for r in (ref, opt):
    print(f"{r.path}: mean {r.mean_s * 1e3:.1f} ms  p95 {r.p95_s * 1e3:.1f} ms  {r.ips:.1f} IPS")
print("optimized speedup", compare(ref, opt)["speedup"])
print(memory_estimate(g))

big = build(ModelSpec("mobilenet_v1", 0.25, (512, 384)))
r = measure(big, rng.random((384, 512, 3), dtype=np.float32), iterations=10, warmup=2)
print(f"512x384: {r.ips:.1f} IPS vs 224x224: {opt.ips:.1f} IPS")
