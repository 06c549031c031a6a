"""
Post-training quantization fidelity
===================================

Weights go to int8 with one symmetric scale per tensor; activations get an
affine scale and zero point from calibration min/max. The f16 scheme stores
half-precision weights.
"""

import numpy as np

from edgebin.executor import logits_node, run
from edgebin.quantizer import calibrate, quantize, quantize_symmetric
from edgebin.zoo import ModelSpec, build

t = quantize_symmetric([-1.0, 0.0, 1.0])
print("stored", t.data.tolist(), "scale", t.quant.scale)

g = build(ModelSpec("mobilenet_v1", 0.25, (96, 96)), seed=0)
rng = np.random.default_rng(1)
stats = calibrate(g, [rng.random((96, 96, 3), dtype=np.float32) for _ in range(8)], path="opt")
q, h = quantize(g, stats), quantize(g, scheme="f16")

x = rng.random((20, 96, 96, 3), dtype=np.float32)
a = run(g, x, output=logits_node(g)).ravel()
b = run(q, x, output=logits_node(q)).ravel()
print("i8 logits cosine", a @ b / np.linalg.norm(a) / np.linalg.norm(b))
print("f16 top-1 agreement", (run(h, x).argmax(-1) == run(g, x).argmax(-1)).mean())
