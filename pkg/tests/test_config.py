import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simfle.config import (
    ConfigError,
    TrainConfig,
    apply_overrides,
    derive_patch_grid,
    load_config,
    paper_config,
    save_config,
)
from simfle.rng import RNGStream, streams


def test_load_gamma(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("gamma = 0.75\n")
    assert load_config(p).mask_ratio == 0.75


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "empty.cfg"
    p.write_text("")
    assert load_config(p) == TrainConfig()


def test_gamma_out_of_range_names_key(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("gamma = 1.5\n")
    with pytest.raises(ConfigError, match="gamma") as exc:
        load_config(p)
    assert "0 < gamma < 1" in str(exc.value)


def test_unknown_key_rejected(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("warp_speed = 9\n")
    with pytest.raises(ConfigError, match="warp_speed"):
        load_config(p)


def test_missing_file():
    with pytest.raises(ConfigError, match="not found"):
        load_config("/nonexistent/nope.cfg")


def test_env_seed_override(tmp_path, monkeypatch):
    p = tmp_path / "run.cfg"
    p.write_text("seed = 3\n")
    monkeypatch.setenv("SIMFLE_SEED", "99")
    assert load_config(p).seed == 99


def test_round_trip(tmp_path):
    cfg = TrainConfig(mask_ratio=0.6, num_groups=4, seed=17, lr=0.011)
    p = tmp_path / "out.cfg"
    save_config(cfg, p)
    loaded = load_config(p)
    assert loaded == cfg
    # save(load(p)) == load(p) field-by-field
    p2 = tmp_path / "again.cfg"
    save_config(loaded, p2)
    assert load_config(p2) == loaded


def test_paper_profile_values():
    cfg = paper_config()
    assert (cfg.image_size_gfl, cfg.image_size_ffl) == (224, 112)
    assert (cfg.num_groups, cfg.patch_size) == (32, 16)
    assert cfg.mask_ratio == 0.75
    assert cfg.distill_temp == 4.0
    assert (cfg.alpha, cfg.beta) == (0.3, 0.03)
    assert (cfg.lr, cfg.momentum, cfg.weight_decay) == (0.05, 0.9, 1e-4)
    assert (cfg.batch_size, cfg.epochs) == (256, 100)
    assert derive_patch_grid(cfg) == (49, 37)


def test_patch_grid_desk_paper_sizes():
    assert derive_patch_grid(TrainConfig(image_size_ffl=112, patch_size=16)) == (49, 37)
    assert derive_patch_grid(TrainConfig(image_size_ffl=32, patch_size=16)) == (4, 3)


def test_patch_grid_divisibility_error():
    with pytest.raises(ConfigError, match="does not divide"):
        TrainConfig(image_size_ffl=30, patch_size=16)


def test_degenerate_mask_count_rejected():
    # 2x2 grid at gamma=0.95 would mask all four patches
    with pytest.raises(ConfigError, match="at least one"):
        TrainConfig(image_size_ffl=32, patch_size=16, mask_ratio=0.95)


def test_invalid_enum_named():
    with pytest.raises(ConfigError, match="ffl_connection"):
        TrainConfig(ffl_connection="telepathy")


def test_apply_overrides():
    cfg = apply_overrides(TrainConfig(), ["gamma=0.5", "num_groups=4"])
    assert cfg.mask_ratio == 0.5 and cfg.num_groups == 4
    with pytest.raises(ConfigError, match="nope"):
        apply_overrides(TrainConfig(), ["nope=1"])


@given(
    size_exp=st.integers(2, 5),
    patch_exp=st.integers(0, 3),
    gamma=st.floats(0.01, 0.99),
)
@settings(max_examples=200, deadline=None)
def test_mask_count_always_interior(size_exp, patch_exp, gamma):
    # every valid config leaves at least one masked and one visible patch,
    # or construction fails outright
    size = 2**size_exp * 8
    patch = 2**patch_exp * 4
    if size % patch != 0:
        return
    try:
        cfg = TrainConfig(image_size_ffl=size, patch_size=patch, mask_ratio=gamma)
    except ConfigError:
        return
    n_p, n_m = derive_patch_grid(cfg)
    assert 1 <= n_m <= n_p - 1


def test_rng_streams_bit_identical():
    a = RNGStream(7, "augment").generator().integers(0, 2**31, 64)
    b = RNGStream(7, "augment").generator().integers(0, 2**31, 64)
    assert (a == b).all()


def test_rng_streams_distinct():
    a = RNGStream(7, "augment").generator().integers(0, 2**31, 64)
    b = RNGStream(7, "data").generator().integers(0, 2**31, 64)
    c = RNGStream(8, "augment").generator().integers(0, 2**31, 64)
    assert not (a == b).all()
    assert not (a == c).all()


def test_rng_substreams():
    s = RNGStream(7, "data")
    step0 = s.generator(0).integers(0, 2**31, 16)
    step0_again = s.generator(0).integers(0, 2**31, 16)
    step1 = s.generator(1).integers(0, 2**31, 16)
    assert (step0 == step0_again).all()
    assert not (step0 == step1).all()


def test_rng_rejects_unknown_stream():
    with pytest.raises(ValueError, match="stream_id"):
        RNGStream(0, "coffee")


def test_all_streams_present():
    assert set(streams(0)) == {"data", "augment", "model-init", "group-select"}


def test_config_immutable():
    cfg = TrainConfig()
    with pytest.raises(dataclasses.FrozenInstanceError):
        cfg.seed = 5
