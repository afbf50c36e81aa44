import numpy as np
import pytest
from hypothesis import given, strategies as st

from mural_restore import ops, oracles
from mural_restore.fft import fft2_raw, is_power_of_two
from mural_restore.tensor import ComplexTensor, Parameter, ShapeError, Tensor


def T(a, dtype=np.float64):
    return Tensor(np.asarray(a, dtype=dtype))


def test_tensor_keeps_float_precision_and_promotes_ints():
    assert Tensor(np.zeros(3, np.float32)).dtype == np.float32
    assert Tensor(np.zeros(3, np.float64)).dtype == np.float64
    assert Tensor(np.arange(3)).dtype == np.float64


def test_parameter_grad_matches_shape():
    p = Parameter(np.ones((2, 3)), name="w")
    assert p.grad.shape == p.shape and not p.grad.any()


# ---------------------------------------------------------------- elementwise

def test_sigmoid_of_zero_is_half():
    assert ops.sigmoid(T([0.0])).data[0] == 0.5


def test_mul_by_ones_is_identity(rng):
    x = T(rng.standard_normal((2, 3, 3, 4)))
    assert np.array_equal(ops.mul(x, T(np.ones(x.shape))).data, x.data)


def test_add_matches_loop_oracle(rng):
    a, b = rng.standard_normal((2, 2, 3)), rng.standard_normal((2, 2, 3))
    assert np.array_equal(ops.add(T(a), T(b)).data, oracles.elementwise_add(a, b))


def test_channel_and_spatial_gate_broadcasts(rng):
    x = T(rng.standard_normal((1, 4, 4, 3)))
    assert ops.mul(x, T(rng.random((1, 1, 1, 3)))).shape == x.shape
    assert ops.mul(x, T(rng.random((1, 4, 4, 1)))).shape == x.shape


def test_unresolvable_broadcast_raises(rng):
    with pytest.raises(ShapeError):
        ops.add(T(np.zeros((1, 4, 4, 3))), T(np.zeros((1, 4, 4, 2))))


# beyond |v| ~ 36.7 the exact value rounds to 1.0 in double precision
@given(st.floats(-30, 30))
def test_sigmoid_in_open_unit_interval(v):
    s = ops.sigmoid(T([v])).data[0]
    assert 0.0 < s < 1.0


def test_gelu_closed_form():
    x = T([-1.0, 0.0, 2.0])
    from scipy.special import erf
    ref = 0.5 * x.data * (1 + erf(x.data / np.sqrt(2)))
    assert np.allclose(ops.gelu(x).data, ref, atol=1e-15)


# -------------------------------------------------------------------- conv2d

def test_identity_pointwise_conv(rng):
    x = T(rng.standard_normal((1, 5, 5, 3)))
    w = np.eye(3).reshape(3, 3, 1, 1)
    assert np.array_equal(ops.conv2d(x, T(w), T(np.zeros(3))).data, x.data)


def test_depthwise_ones_kernel_on_constant():
    x = T(np.full((1, 6, 6, 2), 0.5))
    out = ops.conv2d(x, T(np.ones((2, 1, 3, 3))), None, pad=1, groups=2).data
    assert np.all(out[0, 1:-1, 1:-1] == 4.5)


def test_grouped_conv_matches_nested_loops_single(rng):
    x = rng.standard_normal((1, 6, 6, 4)).astype(np.float32)
    w = rng.standard_normal((4, 2, 3, 3)).astype(np.float32)
    b = rng.standard_normal(4).astype(np.float32)
    got = ops.conv2d(Tensor(x), Tensor(w), Tensor(b), 1, 1, 2).data
    assert np.max(np.abs(got - oracles.conv2d(x, w, b, 1, 1, 2))) < 1e-6


def test_conv_errors():
    x = T(np.zeros((1, 4, 4, 3)))
    with pytest.raises(ShapeError):
        ops.conv2d(x, T(np.zeros((2, 1, 3, 3))), None, groups=2)
    with pytest.raises(ShapeError):
        ops.conv2d(T(np.zeros((1, 2, 2, 1))), T(np.zeros((1, 1, 5, 5))), None)


@given(h=st.integers(1, 6), cin=st.sampled_from([1, 2, 4]), k=st.sampled_from([1, 3]),
       stride=st.sampled_from([1, 2]), seed=st.integers(0, 99))
def test_conv_oracle_property(h, cin, k, stride, seed):
    r = np.random.default_rng(seed)
    pad = k // 2
    x = r.standard_normal((1, h, h, cin))
    w = r.standard_normal((2, cin, k, k))
    got = ops.conv2d(T(x), T(w), None, stride, pad).data
    assert np.allclose(got, oracles.conv2d(x, w, None, stride, pad), rtol=0, atol=1e-12)


# -------------------------------------------------------------------- matmul

def test_matmul_identity_and_oracles(rng):
    a = rng.standard_normal((3, 3))
    assert np.array_equal(ops.matmul(T(a), T(np.eye(3))).data, a)
    a, b = rng.standard_normal((2, 3)), rng.standard_normal((3, 2))
    assert np.allclose(ops.matmul(T(a), T(b)).data, oracles.matmul(a, b), atol=1e-14)
    a, b = rng.standard_normal((4, 5, 6)), rng.standard_normal((4, 6, 2))
    assert np.allclose(ops.matmul(T(a), T(b)).data, oracles.matmul(a, b), atol=1e-13)


def test_matmul_inner_mismatch():
    with pytest.raises(ShapeError):
        ops.matmul(T(np.zeros((2, 3))), T(np.zeros((2, 3))))


# ----------------------------------------------------------- pixel shuffles

def test_pixel_shuffle_index_formula():
    x = np.arange(1, 17, dtype=float).reshape(1, 2, 2, 4)
    out = ops.pixel_shuffle(T(x), 2).data
    assert out.shape == (1, 4, 4, 1)
    assert np.array_equal(out, oracles.pixel_shuffle(x, 2))
    assert out[0, 1, 0, 0] == x[0, 0, 0, 2]  # dy=1, dx=0 -> channel 2


def test_pixel_shuffle_constant_stays_constant():
    out = ops.pixel_shuffle(T(np.full((1, 3, 3, 8), 2.5)), 2).data
    assert out.shape == (1, 6, 6, 2) and np.all(out == 2.5)


def test_pixel_shuffle_inverse_pair_exhaustive():
    r = np.random.default_rng(0)
    for h in range(2, 9, 2):
        for w in range(2, 9, 2):
            for c in range(1, 9):
                x = r.standard_normal((1, h, w, c))
                assert np.array_equal(ops.pixel_shuffle(ops.pixel_unshuffle(T(x), 2), 2).data, x)
                if c % 4 == 0:
                    assert np.array_equal(
                        ops.pixel_unshuffle(ops.pixel_shuffle(T(x), 2), 2).data, x)


def test_pixel_shuffle_divisibility_errors():
    with pytest.raises(ShapeError):
        ops.pixel_shuffle(T(np.zeros((1, 2, 2, 3))), 2)
    with pytest.raises(ShapeError):
        ops.pixel_unshuffle(T(np.zeros((1, 3, 2, 1))), 2)


# ------------------------------------------------------------ channel shuffle

def test_channel_shuffle_order():
    x = T(np.arange(6, dtype=float).reshape(1, 1, 1, 6))
    assert list(ops.channel_shuffle(x, 2).data.ravel()) == [0, 3, 1, 4, 2, 5]
    assert oracles.channel_shuffle_order(6, 2) == [0, 3, 1, 4, 2, 5]


@given(c=st.sampled_from([1, 2, 4, 6, 8, 12]), seed=st.integers(0, 50))
def test_channel_shuffle_is_permutation(c, seed):
    x = np.random.default_rng(seed).standard_normal((1, 3, 3, c))
    for g in (1, c):
        assert np.array_equal(ops.channel_shuffle(T(x), g).data, x)
    if c % 2 == 0:
        y = ops.channel_shuffle(T(x), 2).data
        planes = lambda a: sorted(a[..., i].tobytes() for i in range(c))
        assert planes(y) == planes(x)


def test_channel_shuffle_divisibility():
    with pytest.raises(ShapeError):
        ops.channel_shuffle(T(np.zeros((1, 1, 1, 5))), 2)


# ----------------------------------------------------------------------- fft

def test_fft_impulse_and_constant():
    x = np.zeros((1, 4, 8, 1))
    x[0, 0, 0, 0] = 1
    z = ops.fft2(T(x))
    assert np.array_equal(z.re.data, np.ones_like(x)) and not z.im.data.any()
    z = ops.fft2(T(np.full((1, 4, 4, 1), 3.0))).to_numpy()
    assert z[0, 0, 0, 0] == 48
    assert np.allclose(np.delete(z.ravel(), 0), 0, atol=1e-12)


def test_fft_random_8x8_oracle_and_parseval(rng):
    x = rng.standard_normal((1, 8, 8, 1))
    z = ops.fft2(T(x)).to_numpy()
    assert np.max(np.abs(z - oracles.dft2(x))) < 1e-10
    assert abs(np.sum(x ** 2) - np.sum(np.abs(z) ** 2) / 64) < 1e-10
    assert abs(z[0, 3, 5, 0] - oracles.dft_bin(x[0, :, :, 0], 3, 5)) < 1e-10


def test_fft_roundtrip_tolerances(rng):
    for dt, tol in ((np.float32, 1e-5), (np.float64, 1e-11)):
        for s in (1, 2, 4, 8, 16):
            x = rng.standard_normal((2, s, s, 3)).astype(dt)
            y = ops.ifft2(ops.fft2(Tensor(x))).data
            assert y.dtype == dt and np.max(np.abs(y - x)) < tol


def test_fft_rejects_non_power_of_two():
    assert not is_power_of_two(6) and is_power_of_two(1)
    with pytest.raises(ShapeError):
        ops.fft2(T(np.zeros((1, 6, 4, 1))))


def test_ifft_rejects_non_hermitian_spectrum():
    z = ComplexTensor(T(np.zeros((1, 4, 4, 1))), T(np.zeros((1, 4, 4, 1))))
    z.re.data[0, 1, 0, 0] = 1.0
    z.im.data[0, 1, 0, 0] = 1.0
    with pytest.raises(ValueError, match="imaginary"):
        ops.ifft2(z)


def test_fft_matches_numpy_reference(rng):
    x = rng.standard_normal((2, 16, 8, 3))
    assert np.allclose(fft2_raw(x), np.fft.fft2(x, axes=(1, 2)), atol=1e-12)


# ----------------------------------------------------------------- structural

def test_concat_split_select_interleave(rng):
    a, b = rng.standard_normal((1, 2, 2, 3)), rng.standard_normal((1, 2, 2, 2))
    p, q = ops.split_channels(ops.concat_channels(T(a), T(b)), [3, 2])
    assert np.array_equal(p.data, a) and np.array_equal(q.data, b)
    assert np.array_equal(ops.select_channels(T(a), [0, 1, 2]).data, a)
    la = T(np.array([10.0, 11.0]).reshape(1, 1, 1, 2))
    lb = T(np.array([20.0, 21.0]).reshape(1, 1, 1, 2))
    assert list(ops.interleave_channels(la, lb).data.ravel()) == [10, 20, 11, 21]


def test_pad_crop_inverse(rng):
    x = rng.standard_normal((1, 3, 4, 2))
    p = ops.pad(T(x), 2)
    assert p.shape == (1, 7, 8, 2) and p.data[0, 0].sum() == 0
    assert np.array_equal(ops.crop(p, 2, 2, 3, 4).data, x)


def test_reductions_match_loop_oracle(rng):
    x = rng.standard_normal((2, 3, 3, 5))
    mean, mx = oracles.channel_reductions(x)
    assert np.allclose(ops.mean_channels(T(x)).data, mean, atol=1e-15)
    assert np.array_equal(ops.max_channels(T(x)).data, mx)
    assert np.allclose(ops.mean_spatial(T(x)).data, x.mean(axis=(1, 2), keepdims=True))


def test_concat_axis_mismatch():
    with pytest.raises(ShapeError):
        ops.concat_channels(T(np.zeros((1, 2, 2, 1))), T(np.zeros((1, 3, 2, 1))))


# ---------------------------------------------------------------- finiteness

finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(st.lists(finite, min_size=16, max_size=16))
def test_public_ops_stay_finite(vals):
    x = T(np.array(vals).reshape(1, 2, 2, 4))
    outs = [ops.sigmoid(x), ops.gelu(x), ops.softmax(x), ops.pixel_shuffle(x, 2),
            ops.layer_norm(x, T(np.ones(4)), T(np.zeros(4))), ops.magnitude(ops.fft2(x)),
            ops.ifft2(ops.fft2(x)), ops.mul(x, x), ops.channel_shuffle(x, 2)]
    for o in outs:
        assert np.all(np.isfinite(o.data))
