import numpy as np
import pytest

from edgebin.errors import NonAffinePattern, Unreplaceable
from edgebin.executor import logits_node, run
from edgebin.ir import GraphBuilder, OpKind
from edgebin.passes import (GENERIC, K210, PassReport, check_target, fold_bn_into_conv, fold_constants,
                            fuse_activation, fuse_conv_bn, optimize, replace_ops)
from edgebin.quantizer import calibrate, quantize
from edgebin.zoo import ModelSpec, build

from helpers import random_graph, randomize_bn, tiny_net


def _inputs(graph, n=100, seed=0):
    return np.random.default_rng(seed).random((n, *graph.input_shape), dtype=np.float32)


def _max_dev(a, b, x, node_a=None, node_b=None):
    return float(np.abs(run(a, x, "ref", output=node_a) - run(b, x, "ref", output=node_b)).max())


def _count(graph, op):
    return sum(n.op is op for n in graph.nodes)


# --- constant folding ---------------------------------------------------------

def test_add_of_constants_folds_to_five():
    b = GraphBuilder()
    x = b.input((1, 1, 1))
    s = b.add(b.const(np.full((1, 1, 1), 2.0)), b.const(np.full((1, 1, 1), 3.0)))
    b.add(x, s)
    g, rep = fold_constants(b.build())
    consts = [n for n in g.nodes if n.op is OpKind.CONST]
    assert len(consts) == 1
    assert g.weights[consts[0].id]["value"].data.item() == 5.0
    assert rep.removed == 3 and rep.added == 1 and len(g.nodes) == 3


def test_fold_without_constants_is_identity():
    g = tiny_net()
    g2, rep = fold_constants(g)
    assert g2.same_as(g)
    assert rep.removed == 0 and rep.nodes_after == rep.nodes_before


def test_fold_leaves_no_all_constant_node():
    for seed in range(20):
        g, _ = fold_constants(random_graph(seed))
        for n in g.nodes:
            if n.inputs:
                assert not all(g.node(i).op is OpKind.CONST for i in n.inputs)


def test_fold_preserves_outputs_on_constant_branch():
    g = next(random_graph(s) for s in range(100) if _count(random_graph(s), OpKind.CONST))
    folded, rep = fold_constants(g)
    assert rep.removed > 0
    x = _inputs(g)
    assert _max_dev(g, folded, x, logits_node(g), logits_node(folded)) <= 1e-6


# --- conv + BN ----------------------------------------------------------------

def test_fold_bn_identity():
    w = np.random.default_rng(0).normal(size=(3, 3, 2, 4)).astype(np.float32)
    k, b = fold_bn_into_conv(w, None, np.ones(4), np.zeros(4), np.zeros(4), np.ones(4), 0.0)
    np.testing.assert_array_equal(k, w)
    np.testing.assert_array_equal(b, np.zeros(4))


def test_fold_bn_scalar_example():
    k, b = fold_bn_into_conv(np.ones((1, 1, 1, 1)), None, np.array([2.0]), np.array([1.0]),
                             np.array([0.0]), np.array([1.0]), 0.0)
    assert k.item() == 2.0 and b.item() == 1.0


def test_fuse_conv_bn_random_pair(rng):
    for depthwise in (False, True):
        b = GraphBuilder(seed=3)
        x = b.input((9, 9, 4))
        y = b.depthwise_conv2d(x, 3, 2) if depthwise else b.conv2d(x, 5, 3, 2)
        b.batch_norm(y)
        g = randomize_bn(b.build(), 1)
        fused, rep = fuse_conv_bn(g)
        assert _count(fused, OpKind.BATCH_NORM) == 0 and rep.fused == 1
        assert _max_dev(g, fused, _inputs(g)) <= 1e-5


def test_fuse_conv_bn_rejects_shared_conv_output():
    b = GraphBuilder()
    x = b.input((4, 4, 2))
    c = b.conv2d(x, 2, 1)
    n = b.batch_norm(c)
    b.add(n, c)
    with pytest.raises(NonAffinePattern):
        fuse_conv_bn(b.build())


@pytest.mark.parametrize("family", ["mobilenet_v1", "mobilenet_v3_large", "mobilenet_v3_small"])
def test_fuse_conv_bn_removes_every_conv_adjacent_bn(family):
    g = build(ModelSpec(family, 1.0, (96, 96)))
    fused, rep = fuse_conv_bn(g)
    assert rep.fused == _count(g, OpKind.BATCH_NORM)
    assert _count(fused, OpKind.BATCH_NORM) == 0


# --- activation fusion ---------------------------------------------------------

def test_conv_relu6_fuses():
    b = GraphBuilder()
    x = b.input((4, 4, 2))
    b.relu6(b.conv2d(x, 3, 3))
    g, rep = fuse_activation(b.build())
    assert len(g.nodes) == 2 and rep.removed == 1
    assert g.nodes[1].attrs["activation"] == "relu6"


def test_activation_not_fused_when_conv_output_is_shared():
    b = GraphBuilder()
    x = b.input((4, 4, 2))
    c = b.conv2d(x, 2, 3)
    r = b.relu(c)
    b.add(r, c)
    g, rep = fuse_activation(b.build())
    assert rep.removed == 0 and _count(g, OpKind.RELU) == 1


def test_activation_with_two_consumers_of_its_own_output_fuses():
    b = GraphBuilder()
    x = b.input((4, 4, 2))
    r = b.relu(b.conv2d(x, 2, 3))
    b.add(r, b.relu6(r))
    g0 = b.build()
    g, rep = fuse_activation(g0)
    assert rep.removed == 1
    assert _max_dev(g0, g, _inputs(g0, 10)) == 0.0


def test_fuse_activation_on_mobilenet_v1():
    g, _ = fuse_conv_bn(randomize_bn(build(ModelSpec("mobilenet_v1", 0.25, (96, 96))), 2))
    standalone = sum(n.op in (OpKind.RELU, OpKind.RELU6, OpKind.HARD_SWISH) for n in g.nodes)
    fused, rep = fuse_activation(g)
    assert len(g.nodes) - len(fused.nodes) == standalone == rep.removed
    assert _max_dev(g, fused, _inputs(g, 20)) <= 1e-6


# --- replacement ---------------------------------------------------------------

def test_dense_after_gap_becomes_pointwise_conv():
    b = GraphBuilder(seed=2)
    x = b.input((5, 5, 1024))
    b.dense(b.global_avg_pool(x), 7)
    g = b.build()
    r, rep = replace_ops(g)
    assert _count(r, OpKind.DENSE) == 0 and _count(r, OpKind.GLOBAL_AVG_POOL) == 0
    conv = next(n for n in r.nodes if n.op is OpKind.CONV2D)
    assert conv.attrs["filters"] == 7 and conv.attrs["kernel"] == (1, 1)
    pool = next(n for n in r.nodes if n.op is OpKind.AVG_POOL)
    assert pool.attrs["pool"] == (5, 5)
    assert _max_dev(g, r, _inputs(g, 10)) <= 1e-6


def test_conforming_graph_unchanged():
    b = GraphBuilder()
    x = b.input((6, 6, 3))
    b.relu(b.conv2d(x, 4, 3))
    g = b.build()
    r, rep = replace_ops(g, K210)
    assert r.same_as(g) and rep.added == 0 and rep.diagnostics == []


def test_softmax_tagged_host_fallback():
    r, _ = replace_ops(tiny_net(), K210)
    sm = next(n for n in r.nodes if n.op is OpKind.SOFTMAX)
    assert sm.attrs["host_fallback"] is True
    assert OpKind.SOFTMAX not in K210.accelerated_ops


def test_v3_large_unreplaceable_on_k210():
    g = build(ModelSpec("mobilenet_v3_large", 1.0, (224, 224)))
    with pytest.raises(Unreplaceable) as exc:
        optimize(g, K210)
    first_5x5 = next(n for n in g.nodes if n.op is OpKind.DEPTHWISE_CONV2D and n.attrs["kernel"] == (5, 5))
    assert exc.value.node == first_5x5.id
    assert "5x5" in exc.value.reason


# --- pipeline properties ------------------------------------------------------------

CORPUS = list(range(24))


@pytest.mark.parametrize("seed", CORPUS)
def test_each_pass_preserves_semantics(seed):
    g = random_graph(seed)
    x = _inputs(g, 100, seed)
    ref_out = run(g, x, "ref")
    for fn in (fold_constants, fuse_conv_bn, fuse_activation, lambda h: replace_ops(h, GENERIC)):
        g2, _ = fn(g)
        assert float(np.abs(run(g2, x, "ref") - ref_out).max()) <= 1e-5


@pytest.mark.parametrize("seed", CORPUS)
def test_reports_are_consistent(seed):
    g = random_graph(seed)
    _, reports = optimize(g, GENERIC)
    before = len(g.nodes)
    for r in reports:
        assert isinstance(r, PassReport)
        assert r.nodes_before == before
        before = r.nodes_after


@pytest.mark.parametrize("seed", CORPUS)
def test_pipeline_is_confluent(seed):
    once, _ = optimize(random_graph(seed), GENERIC)
    twice, reports = optimize(once, GENERIC)
    assert twice.same_as(once)
    assert all(r.removed == r.added == 0 for r in reports)


def test_inconsistent_report_rejected():
    with pytest.raises(AssertionError):
        PassReport("x", 10, 9, removed=0, added=0)


# --- deployability --------------------------------------------------------------------

def test_int8_v1_075_fits_k210(rng):
    g = build(ModelSpec("mobilenet_v1", 0.75, (224, 224)), seed=1)
    opt, _ = optimize(g, K210)
    stats = calibrate(opt, [rng.random((224, 224, 3), dtype=np.float32) for _ in range(2)], path="opt")
    rep = check_target(quantize(opt, stats), K210)
    assert rep.fits, rep.violations
    assert rep.weight_bytes < 6_000_000


def test_f32_v3_large_too_big_for_k210():
    rep = check_target(build(ModelSpec("mobilenet_v3_large", 1.0, (224, 224))), K210)
    assert not rep.fits
    assert any(v.startswith("size:") for v in rep.violations)


def test_resolution_limit():
    b = GraphBuilder()
    x = b.input((288, 352, 3))
    b.conv2d(x, 2, 3, 2)
    rep = check_target(b.build(), K210)
    assert not rep.fits
    assert any(v.startswith("resolution:") for v in rep.violations)
    assert check_target(b.build(), GENERIC).fits
