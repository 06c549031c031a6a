"""Optimized kernels against the naive reference kernels.

Each op gets 100 seeded random cases; float ops must agree to 1e-5 and the
int8 accumulators must agree exactly.
"""

import zlib

import numpy as np
import pytest
from scipy.signal import correlate2d

from edgebin.kernels import optimized as opt
from edgebin.kernels import reference as ref
from edgebin.shapes import same_pads

CASES = 100
TOL = 1e-5


def _case_rng(op, i):
    return np.random.default_rng([zlib.crc32(op.encode()), i])


def _conv_case(rng, depthwise=False):
    n = int(rng.integers(1, 3))
    h, w = (int(v) for v in rng.integers(1, 10, size=2))
    c = int(rng.integers(1, 6))
    kh, kw = (int(v) for v in rng.choice([1, 2, 3, 5], size=2))
    stride = tuple(int(v) for v in rng.choice([1, 2, 3], size=2))
    padding = "same" if (kh > h or kw > w or rng.random() < 0.5) else "valid"
    x = rng.normal(size=(n, h, w, c)).astype(np.float32)
    f = c if depthwise else int(rng.integers(1, 7))
    k = rng.normal(size=(kh, kw, c, 1 if depthwise else f)).astype(np.float32)
    bias = rng.normal(size=f).astype(np.float32) if rng.random() < 0.5 else None
    act = str(rng.choice(["none", "relu", "relu6", "hswish"]))
    return x, k, bias, stride, padding, act


def _close(a, b):
    assert a.shape == b.shape
    np.testing.assert_allclose(a, b, atol=TOL, rtol=TOL)


@pytest.mark.parametrize("i", range(CASES))
def test_conv2d(i):
    x, k, bias, stride, padding, act = _conv_case(_case_rng("conv", i))
    _close(opt.conv2d(x, k, bias, stride, padding, act), ref.conv2d(x, k, bias, stride, padding, act))


@pytest.mark.parametrize("i", range(CASES))
def test_depthwise_conv2d(i):
    x, k, bias, stride, padding, act = _conv_case(_case_rng("dw", i), depthwise=True)
    _close(opt.depthwise_conv2d(x, k, bias, stride, padding, act),
           ref.depthwise_conv2d(x, k, bias, stride, padding, act))


@pytest.mark.parametrize("i", range(CASES))
def test_fused_conv_bn_activation(i):
    rng = _case_rng("fused", i)
    depthwise = bool(rng.random() < 0.5)
    x, k, bias, stride, padding, act = _conv_case(rng, depthwise)
    c = k.shape[2] if depthwise else k.shape[3]
    bn = (rng.uniform(0.5, 1.5, c).astype(np.float32), rng.normal(size=c).astype(np.float32),
          rng.normal(size=c).astype(np.float32), rng.uniform(0.5, 1.5, c).astype(np.float32), 1e-3)
    fn_opt = opt.depthwise_conv2d if depthwise else opt.conv2d
    fn_ref = ref.depthwise_conv2d if depthwise else ref.conv2d
    want = ref.activate(ref.batch_norm(fn_ref(x, k, bias, stride, padding), *bn), act)
    _close(fn_opt(x, k, bias, stride, padding, act, bn), want)


@pytest.mark.parametrize("i", range(CASES))
def test_dense(i):
    rng = _case_rng("dense", i)
    shape = tuple(int(v) for v in rng.integers(1, 5, size=3))
    x = rng.normal(size=(2, *shape)).astype(np.float32)
    units = int(rng.integers(1, 9))
    k = rng.normal(size=(int(np.prod(shape)), units)).astype(np.float32)
    bias = rng.normal(size=units).astype(np.float32)
    act = str(rng.choice(["none", "relu", "hswish"]))
    _close(opt.dense(x, k, bias, act), ref.dense(x, k, bias, act))


def _act_input(rng):
    return (rng.normal(size=(2, *rng.integers(1, 6, size=3))) * 5).astype(np.float32)


@pytest.mark.parametrize("op", ["relu", "relu6", "hard_sigmoid", "hard_swish", "softmax",
                                "global_avg_pool"])
def test_unary_ops(op):
    for i in range(CASES):
        x = _act_input(_case_rng(op, i))
        _close(getattr(opt, op)(x), getattr(ref, op)(x))


@pytest.mark.parametrize("op", ["avg_pool", "max_pool"])
def test_pools(op):
    for i in range(CASES):
        rng = _case_rng(op, i)
        x = _act_input(rng)
        pool = tuple(int(v) for v in rng.integers(1, 4, size=2))
        stride = tuple(int(v) for v in rng.integers(1, 4, size=2))
        padding = "valid" if pool[0] <= x.shape[1] and pool[1] <= x.shape[2] and rng.random() < 0.5 else "same"
        _close(getattr(opt, op)(x, pool, stride, padding), getattr(ref, op)(x, pool, stride, padding))


def test_batch_norm():
    for i in range(CASES):
        rng = _case_rng("bn", i)
        x = _act_input(rng)
        c = x.shape[-1]
        p = (rng.normal(size=c), rng.normal(size=c), rng.normal(size=c), rng.uniform(0.1, 2, c))
        p = [v.astype(np.float32) for v in p]
        _close(opt.batch_norm(x, *p, 1e-3), ref.batch_norm(x, *p, 1e-3))


@pytest.mark.parametrize("op", ["add", "mul"])
def test_binary_ops(op):
    for i in range(CASES):
        rng = _case_rng(op, i)
        a = _act_input(rng)
        # second operand either full-shape or channel-broadcast (squeeze-excite)
        b = rng.normal(size=a.shape if rng.random() < 0.5 else (a.shape[0], 1, 1, a.shape[3]))
        b = b.astype(np.float32)
        _close(getattr(opt, op)(a, b), getattr(ref, op)(a, b))


def test_pad_resize_reshape():
    for i in range(CASES):
        rng = _case_rng("misc", i)
        x = _act_input(rng)
        pads = tuple(tuple(int(v) for v in rng.integers(0, 3, size=2)) for _ in range(2))
        _close(opt.pad(x, pads), ref.pad(x, pads))
        size = tuple(int(v) for v in rng.integers(1, 9, size=2))
        _close(opt.resize(x, size), ref.resize(x, size))
        shape = (int(np.prod(x.shape[1:])),)
        _close(opt.reshape(x, shape), ref.reshape(x, shape))


# --- int8 accumulators: exact -------------------------------------------------

def _i8_case(rng, depthwise=False):
    x, k, _, stride, padding, _ = _conv_case(rng, depthwise)
    xq = rng.integers(-128, 128, size=x.shape).astype(np.int8)
    wq = rng.integers(-127, 128, size=k.shape).astype(np.int8)
    zp = int(rng.integers(-128, 128))
    f = k.shape[2] if depthwise else k.shape[3]
    bq = rng.integers(-10_000, 10_000, size=f).astype(np.int64) if rng.random() < 0.5 else None
    return xq, zp, wq, bq, stride, padding


@pytest.mark.parametrize("i", range(CASES))
def test_conv2d_i8_exact(i):
    args = _i8_case(_case_rng("conv_i8", i))
    np.testing.assert_array_equal(opt.conv2d_i8(*args), ref.conv2d_i8(*args))


@pytest.mark.parametrize("i", range(CASES))
def test_depthwise_conv2d_i8_exact(i):
    args = _i8_case(_case_rng("dw_i8", i), depthwise=True)
    np.testing.assert_array_equal(opt.depthwise_conv2d_i8(*args), ref.depthwise_conv2d_i8(*args))


def test_dense_i8_exact():
    for i in range(CASES):
        rng = _case_rng("dense_i8", i)
        fan_in, units = int(rng.integers(1, 40)), int(rng.integers(1, 9))
        xq = rng.integers(-128, 128, size=(2, 1, 1, fan_in)).astype(np.int8)
        wq = rng.integers(-127, 128, size=(fan_in, units)).astype(np.int8)
        bq = rng.integers(-1000, 1000, size=units).astype(np.int64)
        zp = int(rng.integers(-128, 128))
        np.testing.assert_array_equal(opt.dense_i8(xq, zp, wq, bq), ref.dense_i8(xq, zp, wq, bq))


def test_i8_worst_case_accumulator_is_exact():
    # 5x5x512 window of extreme values: |sum| ~ 255 * 127 * 12800
    xq = np.full((1, 5, 5, 512), -128, np.int8)
    wq = np.full((5, 5, 512, 2), -127, np.int8)
    got = opt.conv2d_i8(xq, 127, wq, None, (1, 1), "valid")
    assert got.dtype.kind == "i"
    assert int(got[0, 0, 0, 0]) == 255 * 127 * 5 * 5 * 512


# --- definitions ------------------------------------------------------------------

def _naive_depthwise(x, k, stride, padding):
    """Per-channel scipy correlation of the explicitly padded image."""
    n, h, w, c = x.shape
    kh, kw = k.shape[:2]
    if padding == "same":
        (pt, pb), (pl, pr) = same_pads(h, kh, stride[0]), same_pads(w, kw, stride[1])
    else:
        pt = pb = pl = pr = 0
    out = []
    for ch in range(c):
        plane = np.pad(x[0, :, :, ch].astype(np.float64), ((pt, pb), (pl, pr)))
        full = correlate2d(plane, k[:, :, ch, 0].astype(np.float64), mode="valid")
        out.append(full[::stride[0], ::stride[1]])
    return np.stack(out, axis=-1)[None]


def test_depthwise_matches_scipy_sliding_window(rng):
    for padding in ("same", "valid"):
        for stride in ((1, 1), (2, 2)):
            x = rng.normal(size=(1, 8, 8, 4)).astype(np.float32)
            k = rng.normal(size=(3, 3, 4, 1)).astype(np.float32)
            want = _naive_depthwise(x, k, stride, padding)
            np.testing.assert_allclose(ref.depthwise_conv2d(x, k, None, stride, padding), want, atol=1e-6)
            np.testing.assert_allclose(opt.depthwise_conv2d(x, k, None, stride, padding), want, atol=1e-6)


def test_all_ones_conv_is_nine():
    x = np.ones((1, 3, 3, 1), np.float32)
    k = np.ones((3, 3, 1, 1), np.float32)
    for mod in (ref, opt):
        assert mod.conv2d(x, k, None, (1, 1), "valid").reshape(-1).tolist() == [9.0]


def test_activation_definitions():
    for mod in (ref, opt):
        assert mod.relu6(np.array([7.0, -1.0])).tolist() == [6.0, 0.0]
        assert mod.hard_swish(np.array([3.0, -3.0])).tolist() == [3.0, 0.0]
        assert mod.hard_sigmoid(np.array([0.0])).tolist() == [0.5]


def test_avg_pool_2x2():
    x = np.array([[1.0, 2.0], [3.0, 4.0]], np.float32).reshape(1, 2, 2, 1)
    for mod in (ref, opt):
        assert mod.avg_pool(x, (2, 2), (2, 2), "valid").item() == 2.5


def test_softmax_of_equal_logits():
    for mod in (ref, opt):
        np.testing.assert_array_equal(mod.softmax(np.zeros((1, 2), np.float32)), [[0.5, 0.5]])


def test_softmax_extreme_logits_stay_normalized(rng):
    x = (rng.normal(size=(50, 7)) * 1e4).astype(np.float32)
    for mod in (ref, opt):
        p = mod.softmax(x)
        assert np.all((p >= 0) & (p <= 1))
        np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-5)


def test_bilinear_2x2_to_4x4_hand_values():
    # half-pixel centres: output columns sample x = -0.25, 0.25, 0.75, 1.25,
    # clamped to [0, 1], giving interpolation weights 0, 0.25, 0.75, 1
    x = np.array([[0.0, 1.0], [1.0, 0.0]], np.float32).reshape(1, 2, 2, 1)
    w = np.array([0.0, 0.25, 0.75, 1.0])
    want = np.empty((4, 4))
    for i in range(4):
        for j in range(4):
            top = (1 - w[j]) * 0.0 + w[j] * 1.0
            bottom = (1 - w[j]) * 1.0 + w[j] * 0.0
            want[i, j] = (1 - w[i]) * top + w[i] * bottom
    for mod in (ref, opt):
        np.testing.assert_allclose(mod.resize(x, (4, 4))[0, :, :, 0], want, atol=1e-7)


def test_resize_same_size_is_identity(rng):
    x = rng.random((1, 5, 7, 3)).astype(np.float32)
    for mod in (ref, opt):
        np.testing.assert_array_equal(mod.resize(x, (5, 7)), x)
