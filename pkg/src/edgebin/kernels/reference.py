"""Naive reference kernels.

Every spatial operator walks output positions one at a time over an
explicit window. These are slow on purpose: they serve as the oracle the
optimized kernels are checked against, so they share no code with them
beyond the padding arithmetic. All inputs are batched NHWC arrays.
"""

import numpy as np

from ..shapes import conv_out_extent, spatial_pads


def _pad(x, kernel, stride, padding, value=0.0):
    (t, b), (l, r) = spatial_pads(x.shape[1], x.shape[2], kernel, stride, padding)
    return np.pad(x, ((0, 0), (t, b), (l, r), (0, 0)), constant_values=value)


def _out_hw(x, kernel, stride, padding):
    return (conv_out_extent(x.shape[1], kernel[0], stride[0], padding),
            conv_out_extent(x.shape[2], kernel[1], stride[1], padding))


def conv2d(x, kernel, bias, stride, padding, activation="none"):
    kh, kw, _, cout = kernel.shape
    oh, ow = _out_hw(x, (kh, kw), stride, padding)
    xp = _pad(x, (kh, kw), stride, padding)
    out = np.zeros((x.shape[0], oh, ow, cout), dtype=np.result_type(x, kernel))
    for oy in range(oh):
        for ox in range(ow):
            y0, x0 = oy * stride[0], ox * stride[1]
            win = xp[:, y0:y0 + kh, x0:x0 + kw, :]
            out[:, oy, ox, :] = np.tensordot(win, kernel, axes=([1, 2, 3], [0, 1, 2]))
    if bias is not None:
        out = out + bias
    return activate(out, activation)


def depthwise_conv2d(x, kernel, bias, stride, padding, activation="none"):
    kh, kw = kernel.shape[:2]
    k = kernel[:, :, :, 0]
    oh, ow = _out_hw(x, (kh, kw), stride, padding)
    xp = _pad(x, (kh, kw), stride, padding)
    out = np.zeros((x.shape[0], oh, ow, x.shape[3]), dtype=np.result_type(x, kernel))
    for oy in range(oh):
        for ox in range(ow):
            y0, x0 = oy * stride[0], ox * stride[1]
            win = xp[:, y0:y0 + kh, x0:x0 + kw, :]
            out[:, oy, ox, :] = (win * k).sum(axis=(1, 2))
    if bias is not None:
        out = out + bias
    return activate(out, activation)


def dense(x, kernel, bias, activation="none"):
    flat = x.reshape(x.shape[0], -1)
    out = np.zeros((x.shape[0], kernel.shape[1]), dtype=np.result_type(x, kernel))
    for j in range(kernel.shape[1]):
        out[:, j] = flat @ kernel[:, j]
    if bias is not None:
        out = out + bias
    return activate(out, activation)


def batch_norm(x, gamma, beta, mean, var, epsilon):
    return ((x - mean) / np.sqrt(var + epsilon) * gamma + beta).astype(x.dtype)


def relu(x):
    return np.maximum(x, 0)


def relu6(x):
    return np.minimum(np.maximum(x, 0), 6)


def hard_sigmoid(x):
    return relu6(x + 3) / 6


def hard_swish(x):
    return x * relu6(x + 3) / 6


def activate(x, name):
    if name == "none":
        return x
    return {"relu": relu, "relu6": relu6, "hswish": hard_swish}[name](x).astype(x.dtype)


def _pool(x, pool, stride, padding, reduce):
    oh, ow = _out_hw(x, pool, stride, padding)
    (t, _), (l, _) = spatial_pads(x.shape[1], x.shape[2], pool, stride, padding)
    out = np.zeros((x.shape[0], oh, ow, x.shape[3]), dtype=x.dtype)
    for oy in range(oh):
        for ox in range(ow):
            # window clipped to the unpadded input: padded cells never count
            y0, x0 = oy * stride[0] - t, ox * stride[1] - l
            ys, xs = max(y0, 0), max(x0, 0)
            ye, xe = min(y0 + pool[0], x.shape[1]), min(x0 + pool[1], x.shape[2])
            out[:, oy, ox, :] = reduce(x[:, ys:ye, xs:xe, :], axis=(1, 2))
    return out


def avg_pool(x, pool, stride, padding):
    return _pool(x, pool, stride, padding, np.mean)


def max_pool(x, pool, stride, padding):
    return _pool(x, pool, stride, padding, np.max)


def global_avg_pool(x):
    total = np.zeros((x.shape[0], 1, 1, x.shape[3]), dtype=np.float64)
    for i in range(x.shape[1]):
        for j in range(x.shape[2]):
            total[:, 0, 0, :] += x[:, i, j, :]
    return (total / (x.shape[1] * x.shape[2])).astype(x.dtype)


def softmax(x):
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return (e / e.sum(axis=-1, keepdims=True)).astype(x.dtype)


def add(a, b):
    return a + b


def mul(a, b):
    return a * b


def pad(x, pads):
    (t, b), (l, r) = pads
    return np.pad(x, ((0, 0), (t, b), (l, r), (0, 0)))


def resize(x, size):
    """Bilinear, half-pixel centres, edge-clamped."""
    n, h, w, c = x.shape
    oh, ow = size
    out = np.zeros((n, oh, ow, c), dtype=np.float64)
    for oy in range(oh):
        sy = min(max((oy + 0.5) * h / oh - 0.5, 0.0), h - 1)
        y0 = int(np.floor(sy))
        y1 = min(y0 + 1, h - 1)
        fy = sy - y0
        for ox in range(ow):
            sx = min(max((ox + 0.5) * w / ow - 0.5, 0.0), w - 1)
            x0 = int(np.floor(sx))
            x1 = min(x0 + 1, w - 1)
            fx = sx - x0
            out[:, oy, ox, :] = ((1 - fy) * (1 - fx) * x[:, y0, x0, :]
                                 + (1 - fy) * fx * x[:, y0, x1, :]
                                 + fy * (1 - fx) * x[:, y1, x0, :]
                                 + fy * fx * x[:, y1, x1, :])
    return out.astype(x.dtype)


def reshape(x, shape):
    return x.reshape((x.shape[0], *shape))


# int8 accumulators: centred integer inputs, int32 products and sums

def conv2d_i8(xq, x_zero_point, wq, bias_q, stride, padding):
    xc = xq.astype(np.int32) - x_zero_point
    acc = conv2d(xc, wq.astype(np.int32), None, stride, padding)
    return acc + bias_q.astype(np.int32) if bias_q is not None else acc


def depthwise_conv2d_i8(xq, x_zero_point, wq, bias_q, stride, padding):
    xc = xq.astype(np.int32) - x_zero_point
    acc = depthwise_conv2d(xc, wq.astype(np.int32), None, stride, padding)
    return acc + bias_q.astype(np.int32) if bias_q is not None else acc


def dense_i8(xq, x_zero_point, wq, bias_q):
    xc = xq.astype(np.int32) - x_zero_point
    acc = dense(xc, wq.astype(np.int32), None)
    return acc + bias_q.astype(np.int32) if bias_q is not None else acc
