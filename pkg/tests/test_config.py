import dataclasses

import pytest
from hypothesis import given, strategies as st

from mural_restore.config import ConfigError, RunConfig, known_keys, load, parse
from mural_restore.model import ModelConfig


def test_defaults_and_model_keys_cover_every_field():
    cfg = parse("")
    assert cfg == RunConfig()
    assert set(known_keys()["model"]) == {f.name for f in dataclasses.fields(ModelConfig)}


def test_values_parse_into_the_right_objects():
    cfg = parse("""
[model]
base_channels = 4
stage_depths = 1 2 1
heads = 1, 1, 2
enable_cfa = no
[schedule]
steps = 20
lr = 1e-3
[optim]
beta2 = 0.99
[loss]
ssim_weight = 0  # mse only
[mask]
kind = cracks
[train]
seed = 3
holdout = 2
""")
    assert cfg.model == ModelConfig(base_channels=4, stage_depths=(1, 2, 1), heads=(1, 1, 2),
                                    enable_cfa=False)
    t = cfg.train
    assert (t.steps, t.lr, t.betas, t.ssim_weight, t.seed) == (20, 1e-3, (0.9, 0.99), 0.0, 3)
    assert cfg.mask.kind == "cracks" and cfg.holdout == 2


@pytest.mark.parametrize("text,match", [
    ("[modle]\nx = 1\n", "unknown section"),
    ("[model]\nchannels = 8\n", "unknown key"),
    ("[model]\nbase_channels = eight\n", "base_channels"),
    ("[model]\nbase_channels = 7\n", "even"),
    ("[schedule]\nsteps = 0\n", "steps"),
    ("[mask]\nkind = rain\n", "kind"),
    ("[train]\naugment = maybe\n", "boolean"),
    ("[train]\ncrop = 16\n", "crop"),
    ("no header\n", "section"),
])
def test_invalid_configs(text, match):
    with pytest.raises(ConfigError, match=match):
        parse(text)


@given(c=st.sampled_from([4, 8, 16]), steps=st.integers(1, 10_000),
       lr=st.floats(1e-6, 1e-2), seed=st.integers(0, 2**31), augment=st.booleans(),
       cfa=st.booleans(), weight=st.floats(0, 2))
def test_resolved_config_roundtrips(c, steps, lr, seed, augment, cfa, weight):
    text = (f"[model]\nbase_channels = {c}\nenable_cfa = {cfa}\n"
            f"[schedule]\nsteps = {steps}\nlr = {lr!r}\nlr_min = 0\n"
            f"[loss]\nssim_weight = {weight!r}\n[train]\nseed = {seed}\naugment = {augment}\n")
    cfg = parse(text)
    again = parse(cfg.to_ini())
    assert again == cfg and again.digest() == cfg.digest()


def test_load_logs_resolved_config(tmp_path, caplog):
    p = tmp_path / "run.ini"
    p.write_text("[schedule]\nsteps = 5\n")
    with caplog.at_level("INFO", logger="mural_restore.config"):
        cfg = load(p)
    assert cfg.train.steps == 5
    assert "steps = 5" in caplog.text and "heads = auto" in caplog.text
    with pytest.raises(ConfigError, match="cannot read"):
        load(tmp_path / "missing.ini")
