import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mural_restore import oracles
from mural_restore.optim import AdamW, ScheduleConfig, adamw_step, cosine_lr
from mural_restore.tensor import Parameter


def named(data, name="p"):
    return Parameter(np.asarray(data, dtype=np.float64), name=name)


def test_zero_grad_zero_decay_is_a_no_op():
    p = named(np.arange(4.0))
    opt = AdamW([p], weight_decay=0.0)
    p.grad = np.zeros(4)
    opt.step()
    assert np.array_equal(p.data, np.arange(4.0))


@pytest.mark.parametrize("steps", [1, 5, 30])
def test_scalar_recurrence_oracle(steps):
    p = named([0.7])
    opt = AdamW([p], lr=1e-2)
    for _ in range(steps):
        p.grad = np.array([0.3])
        opt.step()
    assert p.data[0] == pytest.approx(oracles.adamw_scalar(0.7, 0.3, steps, 1e-2), abs=1e-14)


def test_first_step_moves_by_lr_times_one_plus_decay():
    p = named([2.0])
    opt = AdamW([p], lr=1e-3, weight_decay=0.01)
    p.grad = np.array([5.0])
    opt.step()
    assert 2.0 - p.data[0] == pytest.approx(1e-3 * (5.0 / (5.0 + 1e-8) + 0.01 * 2.0), rel=1e-12)


def test_bit_identical_trajectories():
    def run():
        r = np.random.default_rng(3)
        p = named(r.standard_normal(5))
        opt = AdamW([p])
        traj = []
        for _ in range(10):
            p.grad = np.sin(p.data * 3)
            opt.step()
            traj.append(p.data.copy())
        return traj
    assert all(np.array_equal(a, b) for a, b in zip(run(), run()))


def test_converges_on_convex_quadratic():
    target = np.array([0.5, -1.5, 2.0])
    scale = np.array([1.0, 4.0, 0.25])
    p = named(np.zeros(3))
    opt = AdamW([p], lr=0.05, weight_decay=0.0)
    sched = ScheduleConfig(2000, 0.05, 0.0)
    for t in range(2000):
        p.grad = 2 * scale * (p.data - target)
        opt.step(cosine_lr(t, sched))
    assert np.max(np.abs(p.data - target)) < 1e-6


def test_step_errors():
    with pytest.raises(ValueError):
        AdamW([]).step()
    p = named([1.0])
    opt = AdamW([p])
    with pytest.raises(ValueError):
        adamw_step([named([1.0], "q")], opt)
    with pytest.raises(ValueError):
        AdamW([named([1.0], "a"), named([1.0], "a")])


def test_cosine_schedule_points():
    cfg = ScheduleConfig(100)
    assert cosine_lr(0, cfg) == 2e-4
    assert cosine_lr(100, cfg) == pytest.approx(1e-6, abs=1e-18)
    assert cosine_lr(50, cfg) == pytest.approx((2e-4 + 1e-6) / 2, rel=1e-12)
    with pytest.raises(ValueError):
        cosine_lr(101, cfg)
    with pytest.raises(ValueError):
        cosine_lr(-1, cfg)


@given(total=st.integers(1, 2000))
def test_cosine_schedule_non_increasing_and_bounded(total):
    cfg = ScheduleConfig(total)
    lrs = [cosine_lr(t, cfg) for t in range(total + 1)]
    assert all(a >= b for a, b in zip(lrs, lrs[1:]))
    assert all(0 <= v <= cfg.lr0 for v in lrs)
