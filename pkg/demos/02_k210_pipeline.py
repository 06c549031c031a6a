"""
Fitting MobileNet V1 onto a K210-class accelerator
==================================================

Fold constants, fuse BN and activations into the convolutions, replace the
dense head with a 1x1 convolution, quantize to int8 and check the target
constraints. MobileNet V3 Large cannot be mapped: its 5x5 depthwise
kernels have no replacement.
"""

import numpy as np

from edgebin.errors import Unreplaceable
from edgebin.passes import K210, check_target, optimize
from edgebin.quantizer import calibrate, quantize
from edgebin.zoo import ModelSpec, build

g = build(ModelSpec("mobilenet_v1", 0.75, (224, 224)), seed=1)
print("f32 graph:", check_target(g, K210).to_json())

opt, reports = optimize(g, K210)
for r in reports:
    print(f"  {r.name:16s} {r.nodes_before:4d} -> {r.nodes_after:4d} nodes")

# a handful of random frames stands in for a calibration set
rng = np.random.default_rng(0)
stats = calibrate(opt, [rng.random((224, 224, 3), dtype=np.float32) for _ in range(4)], path="opt")
q = quantize(opt, stats)
print("i8 graph:", check_target(q, K210).to_json())

try:
    optimize(build(ModelSpec("mobilenet_v3_large", 1.0, (224, 224))), K210)
except Unreplaceable as exc:
    print("V3 Large:", exc)
