import numpy as np
import pytest
from hypothesis import given, strategies as st

from mural_restore import ops, oracles
from mural_restore.cfa import CFA, CFFB, SFFB, cfa_forward, cffb, frequency_descriptor, sffb
from mural_restore.tensor import Tensor


def T(a):
    return Tensor(np.asarray(a, dtype=np.float64))


def test_cffb_zero_input_zero_bias_gives_half(rng):
    blk = CFFB(8, rng)
    blk.fc1.b.data[...] = 0
    blk.fc2.b.data[...] = 0
    gate = cffb(T(np.zeros((1, 8, 8, 8))), blk).data
    assert gate.shape == (1, 1, 1, 8) and np.all(gate == 0.5)


def test_cffb_gate_broadcast_keeps_shape(rng):
    x = T(rng.standard_normal((1, 8, 8, 12)))
    assert ops.mul(x, CFFB(12, rng)(x)).shape == (1, 8, 8, 12)


def test_constant_channel_has_no_frequency_term():
    x = np.ones((1, 8, 8, 3)) * np.array([0.2, -1.0, 4.0])
    d = frequency_descriptor(T(x)).data
    assert np.max(np.abs(d)) < 1e-12


def test_frequency_descriptor_matches_direct_dft(rng):
    x = rng.standard_normal((1, 4, 4, 2))
    spec = np.abs(oracles.dft2(x)).reshape(16, 2)[1:]
    ref = spec.mean(axis=0) / 4.0
    assert np.allclose(frequency_descriptor(T(x)).data.ravel(), ref, atol=1e-6)


def test_sffb_highpass_of_constant_is_zero():
    hp = SFFB.highpass_map(T(np.full((1, 8, 8, 3), 2.0))).data
    assert np.max(np.abs(hp)) < 1e-15


@given(seed=st.integers(0, 100))
def test_gates_inside_unit_interval(seed):
    r = np.random.default_rng(seed)
    x = T(r.standard_normal((1, 8, 8, 4)))
    g = sffb(x, SFFB(r)).data
    assert g.shape == (1, 8, 8, 1) and np.all((g > 0) & (g < 1))
    g = CFFB(4, r)(x).data
    assert np.all((g > 0) & (g < 1))


def test_sffb_mean_and_max_maps_match_loop_oracle(rng):
    x = rng.standard_normal((1, 4, 4, 5))
    d = SFFB(rng).descriptor(T(x)).data
    mean, mx = oracles.channel_reductions(x)
    assert np.allclose(d[..., :1], mean, atol=1e-15) and np.array_equal(d[..., 1:2], mx)


def test_cfa_shape_and_zero_init_identity(rng):
    blk = CFA(8, 1, rng, window=4)
    x = rng.standard_normal((1, 8, 8, 8))
    m = T((rng.random((1, 8, 8, 1)) < 0.3).astype(float))
    assert cfa_forward(T(x), m, blk).shape == (1, 8, 8, 8)
    blk.reduce_rgb.weight.data[...] = 0
    blk.reduce_rgb.bias.data[...] = 0
    assert np.array_equal(blk(T(x), m).data, x)


def test_cfa_equals_hand_chained_composition(rng):
    blk = CFA(4, 1, rng, window=4)
    x = T(rng.standard_normal((1, 8, 8, 4)))
    m = T((rng.random((1, 8, 8, 1)) < 0.3).astype(float))
    f1 = blk.maxvit1(blk.project(ops.concat_channels(x, m)))
    f2 = blk.maxvit2(f1)

    def focus(pair, f):
        mid = ops.mul(f, pair.cffb(f))
        return ops.mul(mid, pair.sffb(mid))
    f_rgb = blk.reduce_rgb(focus(blk.focus_rgb, ops.concat_channels(f1, f2, x)))
    f_mask = blk.reduce_mask(focus(blk.focus_mask, ops.concat_channels(f1, f2, m)))
    ref = ops.add(ops.mul(f_rgb, ops.sigmoid(f_mask)), x)
    assert np.array_equal(blk(x, m).data, ref.data)


@pytest.mark.parametrize("fill", ["zeros", "ones", "random"])
def test_cfa_finite_for_any_mask(rng, fill):
    blk = CFA(4, 1, rng, window=4)
    shape = (2, 8, 8, 1)
    m = {"zeros": np.zeros(shape), "ones": np.ones(shape),
         "random": (rng.random(shape) < 0.5).astype(float)}[fill]
    out = blk(T(rng.standard_normal((2, 8, 8, 4))), T(m)).data
    assert np.all(np.isfinite(out))


def test_cfa_weights_are_independent(rng):
    blk = CFA(4, 1, rng, window=4)
    assert not np.array_equal(blk.maxvit1.block_attn.wq.data, blk.maxvit2.block_attn.wq.data)
    names = [n for n, _ in blk.named_parameters()]
    assert len(names) == len(set(names))
