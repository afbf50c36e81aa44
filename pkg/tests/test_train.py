import numpy as np
import pytest
from hypothesis import given, strategies as st

from mural_restore import checkpoint as ckpt_io
from mural_restore.data import gen_clean, gen_mask
from mural_restore.model import ModelConfig, RestorationModel
from mural_restore.train import (AugmentParams, NonFiniteLossError, TrainConfig, augment,
                            batch_indices, make_batch, metric_rows, new_state, resume_state,
                            train_checkpoint, train_loop, train_step)

SMALL = ModelConfig(base_channels=4, input_size=16, precision="double")


def tiny_data(n=3, size=16):
    clean = np.stack([gen_clean(i, size) for i in range(n)])
    mask = np.stack([gen_mask(i, size=size) for i in range(n)])
    return clean, mask


def snapshot(model):
    return {n: p.data.copy() for n, p in model.named_parameters()}


def test_zero_lr_step_leaves_parameters_unchanged():
    clean, mask = tiny_data()
    cfg = TrainConfig(steps=1, batch_size=2, lr=0.0, lr_min=0.0)
    state = new_state(RestorationModel(SMALL, 0), cfg)
    before = snapshot(state.model)
    rec = train_step(state, cfg, clean, mask)
    assert np.isfinite(rec["total"]) and rec["lr"] == 0.0
    assert all(np.array_equal(before[n], p.data) for n, p in state.model.named_parameters())


def test_loss_records_have_the_logged_fields():
    clean, mask = tiny_data()
    cfg = TrainConfig(steps=2, batch_size=2)
    state = train_loop(new_state(RestorationModel(SMALL, 0), cfg), cfg, clean, mask)
    assert [r["step"] for r in state.records] == [1, 2]
    assert set(state.records[0]) == {"step", "lr", "mse", "ssim_loss", "total"}
    r = state.records[0]
    assert r["total"] == r["mse"] + 0.4 * r["ssim_loss"]


def test_resume_reproduces_uninterrupted_run_bitwise():
    clean, mask = tiny_data()
    cfg = TrainConfig(steps=4, batch_size=2, augment=True)
    full = train_loop(new_state(RestorationModel(SMALL, 1), cfg), cfg, clean, mask)

    half = train_loop(new_state(RestorationModel(SMALL, 1), cfg), cfg, clean, mask, until=2)
    ck = ckpt_io.decode(ckpt_io.encode(train_checkpoint(half)))
    resumed = train_loop(resume_state(ck, cfg), cfg, clean, mask)

    assert [r["total"] for r in half.records] + [r["total"] for r in resumed.records] == \
        [r["total"] for r in full.records]
    for (n, a), (_, b) in zip(full.model.named_parameters(), resumed.model.named_parameters()):
        assert np.array_equal(a.data, b.data), n


def test_resume_needs_a_training_checkpoint():
    ck = ckpt_io.model_checkpoint(RestorationModel(SMALL, 0))
    with pytest.raises(ckpt_io.CheckpointError):
        resume_state(ck, TrainConfig())


def test_non_finite_loss_names_the_first_bad_tensor():
    clean, mask = tiny_data()
    cfg = TrainConfig(steps=1, batch_size=1)
    state = new_state(RestorationModel(SMALL, 0), cfg)
    state.model.head.weight.data[0, 0, 0, 0] = np.nan
    with pytest.raises(NonFiniteLossError, match="first non-finite tensor: output of 'conv2d'") as e:
        train_step(state, cfg, clean, mask)
    assert "head.weight" in str(e.value)


def test_empty_dataset_rejected():
    cfg = TrainConfig(steps=1)
    with pytest.raises(ValueError):
        train_loop(new_state(RestorationModel(SMALL, 0), cfg), cfg,
                   np.zeros((0, 16, 16, 3)), np.zeros((0, 16, 16, 1)))


def test_batch_order_is_a_deterministic_epoch_permutation():
    a = [batch_indices(3, s, 4, 8) for s in range(4)]
    assert a == [batch_indices(3, s, 4, 8) for s in range(4)]
    assert sorted(a[0] + a[1]) == list(range(8))
    assert batch_indices(3, 0, 4, 8) != batch_indices(4, 0, 4, 8)


def test_batch_degraded_zeroes_masked_pixels():
    clean, mask = tiny_data()
    c, m, d = make_batch(TrainConfig(batch_size=2), 0, clean, mask)
    assert np.all(d[m[..., 0] > 0.5] == 0) and np.array_equal(d[m[..., 0] == 0], c[m[..., 0] == 0])


# --------------------------------------------------------------- augmentation

def test_identity_draw_leaves_pair_unchanged():
    img, mask = gen_clean(0, 16), gen_mask(0, size=16)
    p = AugmentParams()
    assert np.array_equal(p.apply(img, 16), img) and np.array_equal(p.apply(mask, 16), mask)


def test_horizontal_flip_is_an_involution():
    img = gen_clean(1, 16)
    p = AugmentParams(flip_h=True)
    assert np.array_equal(p.apply(p.apply(img, 16), 16), img)


@given(seed=st.integers(0, 10_000))
def test_paired_transform_preserves_counts_and_histograms(seed):
    img, mask = gen_clean(seed % 7, 16), gen_mask(seed % 5, size=16)
    a_img, a_mask = augment(img, mask, seed)
    assert a_mask.sum() == mask.sum()
    assert set(np.unique(a_mask)) <= {0.0, 1.0}
    assert np.array_equal(np.sort(a_img, axis=None), np.sort(img, axis=None))
    # the same transform moved both: the damaged pixels carry the same colors
    assert np.array_equal(np.sort(a_img[a_mask[..., 0] > 0], axis=0),
                          np.sort(img[mask[..., 0] > 0], axis=0))


def test_crop_contract():
    img, mask = gen_clean(0, 16), gen_mask(0, size=16)
    a, m = augment(img, mask, 5, crop=8)
    assert a.shape == (8, 8, 3) and m.shape == (8, 8, 1)
    with pytest.raises(ValueError, match="crop"):
        augment(img, mask, 5, crop=32)
    with pytest.raises(ValueError):
        augment(img[:, :8], mask[:, :8], 5)


def test_metric_rows_clean_vs_clean():
    clean, _ = tiny_data(2)
    rows, agg = metric_rows(clean, clean.copy(), ["a", "b"])
    assert [r["id"] for r in rows] == ["a", "b"]
    assert agg == {"id": "mean", "psnr": 100.0, "ssim": 1.0, "mae": 0.0}
