"""Optimized kernels: blocked im2col GEMM, tap-accumulated depthwise and
pooling, and an epilogue that folds batch-norm and activation into the
convolution output while it is still hot."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..shapes import conv_out_extent, spatial_pads

# im2col rows per block; bounds the patch matrix to ~8 MB of f32
BLOCK_ELEMS = 1 << 21


def _pad(x, kernel, stride, padding, value=0):
    (t, b), (l, r) = spatial_pads(x.shape[1], x.shape[2], kernel, stride, padding)
    if t == b == l == r == 0:
        return x
    return np.pad(x, ((0, 0), (t, b), (l, r), (0, 0)), constant_values=value)


def _windows(xp, kernel, stride, oh, ow):
    """(N, OH, OW, C, kh, kw) strided view of all sliding windows."""
    v = sliding_window_view(xp, kernel, axis=(1, 2))
    return v[:, : (oh - 1) * stride[0] + 1 : stride[0], : (ow - 1) * stride[1] + 1 : stride[1]]


def _epilogue(y, bias, bn, activation):
    if bias is not None:
        y += bias
    if bn is not None:
        gamma, beta, mean, var, eps = bn
        scale = (gamma / np.sqrt(var + eps)).astype(y.dtype)
        y *= scale
        y += (beta - mean * scale).astype(y.dtype)
    if activation == "relu":
        np.maximum(y, 0, out=y)
    elif activation == "relu6":
        np.clip(y, 0, 6, out=y)
    elif activation == "hswish":
        y *= np.clip(y + 3, 0, 6) / 6
    return y


def _gemm_conv(x, kernel, stride, padding, acc_dtype):
    kh, kw, cin, cout = kernel.shape
    n = x.shape[0]
    oh = conv_out_extent(x.shape[1], kh, stride[0], padding)
    ow = conv_out_extent(x.shape[2], kw, stride[1], padding)
    w2 = kernel.reshape(kh * kw * cin, cout).astype(acc_dtype, copy=False)
    if kh == kw == 1:
        # 1x1 windows never need padding under either mode
        xs = x[:, :: stride[0], :: stride[1], :][:, :oh, :ow, :]
        y = xs.reshape(-1, cin).astype(acc_dtype, copy=False) @ w2
        return y.reshape(n, oh, ow, cout)
    xp = _pad(x, (kh, kw), stride, padding)
    win = _windows(xp, (kh, kw), stride, oh, ow)
    out = np.empty((n, oh, ow, cout), dtype=acc_dtype)
    rows = max(1, BLOCK_ELEMS // max(1, n * ow * kh * kw * cin))
    for r0 in range(0, oh, rows):
        blk = win[:, r0 : r0 + rows]
        # (N, R, OW, C, kh, kw) -> (N, R, OW, kh, kw, C) to match HWIO
        cols = blk.transpose(0, 1, 2, 4, 5, 3).reshape(-1, kh * kw * cin)
        out[:, r0 : r0 + rows] = (cols.astype(acc_dtype, copy=False) @ w2).reshape(
            n, -1, ow, cout)
    return out


def conv2d(x, kernel, bias, stride, padding, activation="none", bn=None):
    y = _gemm_conv(x, kernel, stride, padding, np.result_type(x, kernel))
    return _epilogue(y, bias, bn, activation)


def _taps_depthwise(x, kernel, stride, padding, acc_dtype):
    kh, kw = kernel.shape[:2]
    oh = conv_out_extent(x.shape[1], kh, stride[0], padding)
    ow = conv_out_extent(x.shape[2], kw, stride[1], padding)
    xp = _pad(x, (kh, kw), stride, padding).astype(acc_dtype, copy=False)
    k = kernel[:, :, :, 0].astype(acc_dtype, copy=False)
    out = np.zeros((x.shape[0], oh, ow, x.shape[3]), dtype=acc_dtype)
    sh, sw = stride
    for i in range(kh):
        for j in range(kw):
            out += xp[:, i : i + (oh - 1) * sh + 1 : sh, j : j + (ow - 1) * sw + 1 : sw, :] * k[i, j]
    return out


def depthwise_conv2d(x, kernel, bias, stride, padding, activation="none", bn=None):
    y = _taps_depthwise(x, kernel, stride, padding, np.result_type(x, kernel))
    return _epilogue(y, bias, bn, activation)


def dense(x, kernel, bias, activation="none"):
    y = x.reshape(x.shape[0], -1) @ kernel
    return _epilogue(y, bias, None, activation)


def batch_norm(x, gamma, beta, mean, var, epsilon):
    scale = (gamma / np.sqrt(var + epsilon)).astype(x.dtype)
    return x * scale + (beta - mean * scale).astype(x.dtype)


def relu(x):
    return np.maximum(x, 0)


def relu6(x):
    return np.clip(x, 0, 6)


def hard_sigmoid(x):
    return np.clip(x + 3, 0, 6) / 6


def hard_swish(x):
    return x * (np.clip(x + 3, 0, 6) / 6)


def activate(x, name):
    return _epilogue(np.array(x, copy=True), None, None, name)


def avg_pool(x, pool, stride, padding):
    oh = conv_out_extent(x.shape[1], pool[0], stride[0], padding)
    ow = conv_out_extent(x.shape[2], pool[1], stride[1], padding)
    xp = _pad(x, pool, stride, padding)
    ones = _pad(np.ones((1, x.shape[1], x.shape[2], 1), x.dtype), pool, stride, padding)
    total = np.zeros((x.shape[0], oh, ow, x.shape[3]), dtype=x.dtype)
    count = np.zeros((1, oh, ow, 1), dtype=x.dtype)
    sh, sw = stride
    for i in range(pool[0]):
        for j in range(pool[1]):
            sl = (slice(None), slice(i, i + (oh - 1) * sh + 1, sh), slice(j, j + (ow - 1) * sw + 1, sw))
            total += xp[sl]
            count += ones[sl]
    return total / count


def max_pool(x, pool, stride, padding):
    oh = conv_out_extent(x.shape[1], pool[0], stride[0], padding)
    ow = conv_out_extent(x.shape[2], pool[1], stride[1], padding)
    xp = _pad(x, pool, stride, padding, value=-np.inf)
    out = np.full((x.shape[0], oh, ow, x.shape[3]), -np.inf, dtype=x.dtype)
    sh, sw = stride
    for i in range(pool[0]):
        for j in range(pool[1]):
            np.maximum(out, xp[:, i : i + (oh - 1) * sh + 1 : sh, j : j + (ow - 1) * sw + 1 : sw], out=out)
    return out


def global_avg_pool(x):
    return x.mean(axis=(1, 2), keepdims=True, dtype=np.float64).astype(x.dtype)


def softmax(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    e /= e.sum(axis=-1, keepdims=True)
    return e


def add(a, b):
    return a + b


def mul(a, b):
    return a * b


def pad(x, pads):
    (t, b), (l, r) = pads
    return np.pad(x, ((0, 0), (t, b), (l, r), (0, 0)))


def _axis_weights(size, out):
    src = np.clip((np.arange(out) + 0.5) * size / out - 0.5, 0.0, size - 1)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, size - 1)
    return lo, hi, src - lo


def resize(x, size):
    """Bilinear, half-pixel centres, edge-clamped."""
    oh, ow = size
    y0, y1, fy = _axis_weights(x.shape[1], oh)
    x0, x1, fx = _axis_weights(x.shape[2], ow)
    xd = x.astype(np.float64, copy=False)
    fy = fy[None, :, None, None]
    fx = fx[None, None, :, None]
    rows = xd[:, y0] * (1 - fy) + xd[:, y1] * fy
    out = rows[:, :, x0] * (1 - fx) + rows[:, :, x1] * fx
    return out.astype(x.dtype)


def reshape(x, shape):
    return x.reshape((x.shape[0], *shape))


# int8 accumulators. The GEMM runs in float64, which is exact for these
# integer operands: |x - zp| <= 255, |w| <= 127, and K <= 2**20 keeps
# every partial sum far below 2**53.

def conv2d_i8(xq, x_zero_point, wq, bias_q, stride, padding):
    xc = xq.astype(np.float64) - x_zero_point
    acc = _gemm_conv(xc, wq.astype(np.float64), stride, padding, np.float64)
    acc = np.rint(acc).astype(np.int64)
    return acc + bias_q if bias_q is not None else acc


def depthwise_conv2d_i8(xq, x_zero_point, wq, bias_q, stride, padding):
    xc = xq.astype(np.float64) - x_zero_point
    acc = np.rint(_taps_depthwise(xc, wq.astype(np.float64), stride, padding, np.float64))
    acc = acc.astype(np.int64)
    return acc + bias_q if bias_q is not None else acc


def dense_i8(xq, x_zero_point, wq, bias_q):
    xc = xq.reshape(xq.shape[0], -1).astype(np.float64) - x_zero_point
    acc = np.rint(xc @ wq.astype(np.float64)).astype(np.int64)
    return acc + bias_q if bias_q is not None else acc
