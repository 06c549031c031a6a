"""
Splitting the dataset, augmenting frames, scoring predictions
=============================================================

Splits are stratified per class with largest-remainder rounding.
Augmentation draws flips, rotation, shift, zoom and shear from seeded
bounds. Metrics come from the confusion matrix.
"""

import numpy as np

from edgebin.datapipe import BIN_AUGMENT, augment, split, synthetic_manifest
from edgebin.evalkit import confusion, format_table

trashnet = synthetic_manifest({"cardboard": 403, "glass": 501, "paper": 594, "plastic": 482, "metal": 410})
train, val, test = split(trashnet, (0.72, 0.18, 0.10), seed=0)
print("train/val/test", len(train), len(val), len(test))
print("test per class", test.counts())

rng = np.random.default_rng(0)
frame = rng.random((384, 512, 3), dtype=np.float32)
views = [augment(frame, BIN_AUGMENT, k) for k in range(4)]
print("augmented", [v.shape for v in views], "range", min(v.min() for v in views), max(v.max() for v in views))

# a classifier that confuses some paper for cardboard
truths = [e.label for e in test]
preds = [("cardboard" if t == "paper" and rng.random() < 0.2 else t) for t in truths]
print(format_table(confusion(preds, truths)))
