from pathlib import Path

import pytest

from bokehornot.config import load_config, parse_config_text
from bokehornot.errors import ConfigError


def test_defaults():
    cfg = parse_config_text("")
    assert cfg.data is None and cfg.seed == 0
    assert [s.name for s in cfg.stages] == ["precise_detecting", "global_transformation"]
    assert cfg.model.base_channels == 48


def test_full_file(tmp_path):
    text = """
    # toy run
    data = synth
    output_dir = out
    seed = 7
    base_channels = 16
    level_blocks = 1,1,1,1
    refinement_blocks = 0
    precise_detecting.crop = 64
    precise_detecting.lr = 1e-3
    global_transformation.iterations = 5
    """
    cfg = parse_config_text(text, tmp_path)
    assert cfg.data == tmp_path / "synth" and cfg.output_dir == tmp_path / "out"
    assert cfg.model.level_blocks == (1, 1, 1, 1) and cfg.model.refinement_blocks == 0
    s1, s2 = cfg.stages
    assert (s1.crop, s1.lr, s1.batch) == (64, 1e-3, 4)
    assert s2.iterations == 5 and s2.loss == "alpha_masked"


def test_stage_subset():
    cfg = parse_config_text("stages = global_transformation")
    assert [s.name for s in cfg.stages] == ["global_transformation"]


def test_all_errors_reported_together():
    text = "seed = x\nbogus = 1\nprecise_detecting.crop = 60\nnot a pair\nstages = warmup,precise_detecting\n"
    with pytest.raises(ConfigError) as info:
        parse_config_text(text)
    msg = str(info.value)
    for fragment in ("seed", "bogus", "multiple of 8", "line 4", "warmup"):
        assert fragment in msg


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.cfg")


def test_relative_paths_default_to_cwd(tmp_path):
    (tmp_path / "run.cfg").write_text("data = d\n")
    assert load_config(tmp_path / "run.cfg").data == Path("d")
