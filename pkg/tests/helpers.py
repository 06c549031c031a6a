"""Shared builders for the test-suite: random graph corpus and small nets."""

import numpy as np

from edgebin.ir import BIN_LABELS, Graph, GraphBuilder, OpKind, Tensor


def randomize_bn(graph: Graph, seed=0) -> Graph:
    """Give every BatchNorm non-trivial statistics so fusion is exercised."""
    rng = np.random.default_rng(seed)
    weights = dict(graph.weights)
    for n in graph.nodes:
        if n.op is OpKind.BATCH_NORM:
            c = n.shape[-1]
            weights[n.id] = {
                "gamma": Tensor(rng.uniform(0.5, 1.5, c).astype(np.float32)),
                "beta": Tensor(rng.normal(0, 0.1, c).astype(np.float32)),
                "mean": Tensor(rng.normal(0, 0.1, c).astype(np.float32)),
                "var": Tensor(rng.uniform(0.5, 1.5, c).astype(np.float32)),
            }
    return graph.evolve(weights=weights)


def _bn(b, x, rng):
    c = b.shapes[x][-1]
    return b.batch_norm(x, float(rng.choice([1e-3, 1e-5])),
                        gamma=rng.uniform(0.5, 1.5, c).astype(np.float32),
                        beta=rng.normal(0, 0.2, c).astype(np.float32),
                        mean=rng.normal(0, 0.2, c).astype(np.float32),
                        var=rng.uniform(0.5, 2.0, c).astype(np.float32))


def random_graph(seed: int, classes=7) -> Graph:
    """A small random classifier mixing every pass-relevant pattern:
    conv/depthwise + BN (+ activation), residual adds, squeeze-excite
    style Mul, pooling, padding, constant subgraphs and a dense head."""
    rng = np.random.default_rng(seed)
    b = GraphBuilder(f"random_{seed}", seed=seed,
                     class_labels=BIN_LABELS if classes == 7 else [f"c{i}" for i in range(classes)])
    h, w = (int(v) for v in rng.integers(6, 13, size=2))
    x = b.input((h, w, 3))
    if rng.random() < 0.3:
        x = b.resize(x, (h + 2, w + 1))
    acts = ["relu", "relu6", "hswish", None]
    for _ in range(int(rng.integers(2, 5))):
        kind = rng.integers(6)
        c = b.shapes[x][-1]
        if kind == 0:
            filters, kernel, stride = int(rng.integers(3, 9)), int(rng.choice([1, 3, 5])), int(rng.choice([1, 2]))
            padding = str(rng.choice(["same", "valid"])) if min(b.shapes[x][:2]) >= 5 else "same"
            x = b.conv2d(x, filters, kernel, stride, padding, use_bias=bool(rng.random() < 0.5))
            x = _bn(b, x, rng)
            act = acts[rng.integers(4)]
            if act:
                x = b.activation(x, act)
        elif kind == 1:
            x = b.depthwise_conv2d(x, int(rng.choice([3, 5])), int(rng.choice([1, 2])),
                                   use_bias=bool(rng.random() < 0.5))
            x = _bn(b, x, rng)
            x = b.activation(x, str(rng.choice(["relu", "relu6", "hswish"])))
        elif kind == 2:
            # residual block with a constant bias branch that folds away
            y = b.conv2d(x, c, 3, 1, activation=str(rng.choice(["none", "relu"])))
            k = b.const(rng.normal(0, 0.1, b.shapes[y]).astype(np.float32))
            k = b.relu(k)
            k2 = b.mul(k, b.const(np.float32(rng.uniform(0.5, 2.0)) * np.ones(b.shapes[y], np.float32)))
            y = b.add(y, k2)
            x = b.add(x, y)
        elif kind == 3:
            s = b.global_avg_pool(x)
            s = b.conv2d(s, max(1, c // 2), 1, 1)
            s = b.relu(s)
            s = b.conv2d(s, c, 1, 1)
            s = b.hard_sigmoid(s)
            x = b.mul(x, s)
        elif kind == 4 and min(b.shapes[x][:2]) >= 4:
            pool = b.max_pool if rng.random() < 0.5 else b.avg_pool
            x = pool(x, 2, int(rng.choice([1, 2])), str(rng.choice(["same", "valid"])))
        else:
            x = b.pad(x, ((1, 0), (0, 1)))
            x = b.conv2d(x, int(rng.integers(3, 9)), 3, 1, "valid", activation=str(rng.choice(["none", "relu6"])))
    x = b.global_avg_pool(x)
    if rng.random() < 0.5:
        x = b.dense(x, int(rng.integers(4, 9)))
        x = b.activation(x, str(rng.choice(["relu", "hswish"])))
    x = b.dense(x, classes)
    x = b.softmax(x)
    return b.build()


def tiny_net(seed=0, classes=7, size=8) -> Graph:
    """conv-BN-ReLU6 -> depthwise-BN-ReLU -> GAP -> Dense -> Softmax."""
    b = GraphBuilder("tiny", seed=seed, class_labels=BIN_LABELS if classes == 7 else None)
    x = b.input((size, size, 3))
    x = b.conv2d(x, 6, 3, 2, use_bias=False)
    x = b.batch_norm(x)
    x = b.relu6(x)
    x = b.depthwise_conv2d(x, 3, 1, use_bias=False)
    x = b.batch_norm(x)
    x = b.relu(x)
    x = b.global_avg_pool(x)
    x = b.dense(x, classes)
    x = b.softmax(x)
    return randomize_bn(b.build(), seed)
