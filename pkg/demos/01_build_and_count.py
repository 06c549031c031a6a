"""
Building the classifier families and counting parameters
========================================================

Each builder returns a plain graph: typed nodes plus a named weight store.
Parameter totals include biases and BatchNorm vectors.
"""

from edgebin.zoo import ModelSpec, build, estimate_file_size, param_count

# the three families at full width, seven output classes
for family in ("mobilenet_v3_large", "mobilenet_v3_small", "mobilenet_v1"):
    g = build(ModelSpec(family, 1.0, (224, 224)), seed=0)
    print(f"{family:20s} {param_count(g) / 1e6:6.3f} M params  "
          f"f32 {estimate_file_size(g) / 1e6:6.2f} MB  i8 {estimate_file_size(g, 'i8') / 1e6:5.2f} MB")

# the width multiplier scales every channel count
for alpha in (0.25, 0.5, 0.75, 1.0):
    g = build(ModelSpec("mobilenet_v1", alpha, (224, 224)))
    print(f"V1 alpha={alpha:<4} {param_count(g):>9,d} params")

# a front resize lets the camera's 512x384 frames feed a 224x224 base
g = build(ModelSpec("mobilenet_v1", 0.75, (512, 384), resize_front=(224, 224)))
print("input", g.input_shape, "->", g.nodes[1].shape)
