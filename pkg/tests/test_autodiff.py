import numpy as np
import pytest

from mural_restore import checks, ops
from mural_restore.autodiff import (VJP, NonDeterministicError, Tape, TapeError, detach,
                               finite_diff_check, finite_diff_report, zero_grads)
from mural_restore.losses import ssim_loss, total_loss
from mural_restore.mauds import MAUS
from mural_restore.nn import Conv2d
from mural_restore.tensor import Parameter, Tensor


def grad_of(f, params):
    with Tape() as tape:
        loss = f()
    tape.backward(loss, params)
    return [p.grad.copy() for p in params]


def test_sum_gives_ones_and_square_gives_2p(rng):
    p = Parameter(rng.standard_normal((3, 4)))
    (g,) = grad_of(lambda: ops.sum(p), [p])
    assert np.array_equal(g, np.ones((3, 4)))
    (g,) = grad_of(lambda: ops.sum(ops.mul(p, p)), [p])
    assert np.array_equal(g, 2 * p.data)


def test_toy_two_channel_model_matches_finite_differences(rng):
    c1 = Conv2d(3, 2, 3, rng, "double")
    c2 = Conv2d(2, 3, 3, rng, "double")
    x = Tensor(rng.uniform(0, 1, (1, 8, 8, 3)))
    target = Tensor(rng.uniform(0, 1, (1, 8, 8, 3)))

    def f():
        return ops.mean(ops.square(ops.sub(c2(ops.gelu(c1(x))), target)))
    params = c1.parameters() + c2.parameters()
    assert finite_diff_check(f, params) < 1e-4

    # the full objective needs an 11x11 SSIM window; pad the toy input up to 16x16
    x16 = Tensor(rng.uniform(0, 1, (1, 16, 16, 3)))
    t16 = Tensor(rng.uniform(0, 1, (1, 16, 16, 3)))
    assert finite_diff_check(lambda: total_loss(t16, c2(ops.gelu(c1(x16)))), params,
                             h=1e-4, max_entries=24) < 1e-4


def test_finite_diff_on_quadratic(rng):
    p = Parameter(rng.standard_normal(4))
    assert finite_diff_check(lambda: ops.sum(ops.mul(p, p)), [p]) < 1e-9


def test_finite_diff_ssim_and_maus(rng):
    img = Parameter(rng.uniform(0, 1, (1, 16, 16, 1)))
    tgt = Tensor(rng.uniform(0, 1, (1, 16, 16, 1)))
    assert finite_diff_check(lambda: ssim_loss(tgt, img), [img], h=1e-4) < 1e-4
    block = MAUS(4, rng, "double")
    x = Parameter(rng.uniform(-1, 1, (1, 4, 4, 4)))
    m = Tensor((rng.random((1, 4, 4, 1)) < 0.4).astype(float))
    w = Tensor(rng.standard_normal((1, 8, 8, 2)))
    assert finite_diff_check(lambda: ops.sum(ops.mul(block(x, m), w)),
                             [x] + block.parameters(), h=1e-4) < 1e-4


def test_nondeterministic_function_is_rejected():
    p = Parameter(np.ones(2))
    counter = iter(range(100))
    with pytest.raises(NonDeterministicError):
        finite_diff_report(lambda: ops.mul(ops.sum(p), float(next(counter))), [p])


def test_tape_errors(rng):
    p = Parameter(rng.standard_normal(3))
    with Tape() as tape:
        vec = ops.mul(p, 2.0)
        loss = ops.sum(vec)
    with pytest.raises(TapeError, match="scalar"):
        tape.backward(vec)
    tape.backward(loss)
    with pytest.raises(TapeError, match="already"):
        tape.backward(loss)
    with Tape() as fresh:
        ops.sum(p)
    with Tape():
        foreign = ops.sum(p)
    with pytest.raises(TapeError, match="not produced"):
        fresh.backward(foreign)


def test_unreached_parameters_get_zero_grad(rng):
    p, q = Parameter(rng.standard_normal(3)), Parameter(rng.standard_normal(3))
    q.grad = np.full(3, 7.0)
    grad_of(lambda: ops.sum(p), [p, q])
    assert not q.grad.any()


def test_zero_then_constant_loss_keeps_grads_zero(rng):
    p = Parameter(rng.standard_normal(3))
    zero_grads([p])
    (g,) = grad_of(lambda: ops.add(ops.mul(ops.sum(p), 0.0), 1.0), [p])
    assert not g.any()


def test_detach_cuts_the_graph(rng):
    p = Parameter(rng.standard_normal(3))
    (g,) = grad_of(lambda: ops.add(ops.sum(ops.mul(detach(p), p)), ops.sum(detach(p))), [p])
    assert np.array_equal(g, p.data)


def test_mask_inputs_are_untouched(rng):
    block = MAUS(4, rng, "double")
    x = Parameter(rng.standard_normal((1, 4, 4, 4)))
    m = Tensor((rng.random((1, 4, 4, 1)) < 0.5).astype(float))
    before = m.data.copy()
    grad_of(lambda: ops.sum(block(x, m)), [x])
    assert np.array_equal(m.data, before)
    assert all(p is not m for p in block.parameters())


@pytest.mark.parametrize("a", [2.0, -1.0])
def test_gradient_linearity(rng, a):
    p = Parameter(rng.standard_normal((1, 4, 4, 2)))
    f = lambda: ops.mean(ops.square(ops.gelu(p)))
    (g,) = grad_of(f, [p])
    (ga,) = grad_of(lambda: ops.mul(f(), a), [p])
    assert np.allclose(ga, a * g, rtol=1e-14, atol=0)


def test_backward_is_deterministic(rng):
    block = MAUS(4, rng, "double")
    x = Parameter(rng.standard_normal((1, 4, 4, 4)))
    m = Tensor((rng.random((1, 4, 4, 1)) < 0.5).astype(float))
    f = lambda: ops.sum(ops.square(block(x, m)))
    first = grad_of(f, block.parameters())
    second = grad_of(f, block.parameters())
    assert all(np.array_equal(a, b) for a, b in zip(first, second))


def test_backward_nodes_run_in_reverse_order(rng, monkeypatch):
    p = Parameter(rng.standard_normal(3))
    seen = []
    for op in ("mul", "sum", "gelu"):
        orig = VJP[op]

        def spy(g, node, orig=orig, op=op):
            seen.append(op)
            return orig(g, node)
        monkeypatch.setitem(VJP, op, spy)
    with Tape() as tape:
        loss = ops.sum(ops.gelu(ops.mul(p, 3.0)))
    tape.backward(loss)
    assert seen == ["sum", "gelu", "mul"]


def test_sign_flip_in_a_backward_rule_is_caught(monkeypatch):
    orig = VJP["gelu"]
    monkeypatch.setitem(VJP, "gelu", lambda g, node: tuple(-x for x in orig(g, node)))
    results = checks.grad_suite(names={"ffn", "layer_norm"})
    by_name = {r.name: r for r in results}
    assert not by_name["grad:ffn"].passed
    assert by_name["grad:layer_norm"].passed
    assert "FAIL  grad:ffn" in by_name["grad:ffn"].line()
