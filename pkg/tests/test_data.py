import filecmp
import shutil

import numpy as np
import pytest

from bokehornot.data import (
    SynthConfig, TrainingPair, defocus, disk_kernel, generate_synthetic, load_dataset,
    paired_random_crop, read_rgb, render_view, sample_scene, write_gray, write_rgb,
)
from bokehornot.errors import DatasetError, ValidationError
from bokehornot.lens_meta import LensSpec, MetaTuple, write_meta_file
from bokehornot.loss_metrics import psnr


def make_fixture(root, n=3, size=16):
    rng = np.random.default_rng(0)
    for sub in ("source", "target", "alpha"):
        (root / sub).mkdir(parents=True)
    metas = []
    for i in range(n):
        rid = f"{i:05d}"
        write_rgb(root / "source" / f"{rid}.png", rng.random((3, size, size)))
        write_rgb(root / "target" / f"{rid}.png", rng.random((3, size, size)))
        write_gray(root / "alpha" / f"{rid}.png", rng.random((1, size, size)))
        metas.append(MetaTuple(rid, LensSpec("Sony", 50, 16.0), LensSpec("Canon", 50, 1.4), float(i)))
    write_meta_file(root / "meta.txt", metas)
    return metas


def test_load_fixture(tmp_path):
    metas = make_fixture(tmp_path)
    recs = load_dataset(tmp_path)
    assert [r.meta for r in recs] == metas
    pair = recs[1].load()
    assert pair.source.shape == (3, 16, 16) and pair.alpha.shape == (1, 16, 16)
    for img in (pair.source, pair.target, pair.alpha):
        assert img.min() >= 0 and img.max() <= 1
        levels = img.astype(np.float64) * 255
        np.testing.assert_allclose(levels, np.round(levels), atol=1e-4)


def test_missing_alpha_names_id(tmp_path):
    make_fixture(tmp_path)
    (tmp_path / "alpha" / "00001.png").unlink()
    with pytest.raises(DatasetError, match="00001"):
        load_dataset(tmp_path)


def test_count_mismatch(tmp_path):
    make_fixture(tmp_path)
    shutil.copy(tmp_path / "source" / "00000.png", tmp_path / "source" / "99999.png")
    with pytest.raises(ValidationError, match="3 metadata records but 4"):
        load_dataset(tmp_path)


def test_missing_meta(tmp_path):
    with pytest.raises(DatasetError, match="meta.txt"):
        load_dataset(tmp_path)


def _pair(h=40, w=56):
    rng = np.random.default_rng(1)
    meta = MetaTuple("1", LensSpec("Sony", 50, 16.0), LensSpec("Sony", 50, 1.8), 1.0)
    src = rng.random((3, h, w)).astype(np.float32)
    return TrainingPair(src, src + 1, src[:1] * 0.5, meta)


def test_paired_crop_alignment():
    pair = _pair()
    crop = paired_random_crop(pair, 24, np.random.default_rng(3))
    assert crop.source.shape == (3, 24, 24) and crop.alpha.shape == (1, 24, 24)
    np.testing.assert_array_equal(crop.target, crop.source + 1)
    np.testing.assert_array_equal(crop.alpha, crop.source[:1] * 0.5)
    assert crop.meta is pair.meta


def test_paired_crop_identity_and_determinism():
    pair = _pair(32, 32)
    whole = paired_random_crop(pair, 32, np.random.default_rng(0))
    np.testing.assert_array_equal(whole.source, pair.source)
    a = paired_random_crop(pair, 8, np.random.default_rng(9))
    b = paired_random_crop(pair, 8, np.random.default_rng(9))
    np.testing.assert_array_equal(a.source, b.source)
    with pytest.raises(ValidationError):
        paired_random_crop(pair, 33, np.random.default_rng(0))


def test_crop_of_full_resolution_pair():
    meta = MetaTuple("1", LensSpec("Sony", 50, 16.0), LensSpec("Sony", 50, 1.8), 1.0)
    big = TrainingPair(np.zeros((3, 1440, 1920), np.float32), np.ones((3, 1440, 1920), np.float32),
                       np.zeros((1, 1440, 1920), np.float32), meta)
    crop = paired_random_crop(big, 256, np.random.default_rng(0))
    assert crop.source.shape == crop.target.shape == (3, 256, 256)
    assert crop.alpha.shape == (1, 256, 256)


def test_pair_shape_invariant():
    meta = MetaTuple("1", LensSpec("Sony", 50, 16.0), LensSpec("Sony", 50, 1.8), 1.0)
    with pytest.raises(ValidationError):
        TrainingPair(np.zeros((3, 8, 8)), np.zeros((3, 8, 9)), np.zeros((1, 8, 8)), meta)


def test_blur_radius_model():
    cfg = SynthConfig()
    assert cfg.blur_radius(1.4, 0) == pytest.approx(8.0)
    assert cfg.blur_radius(16.0, 0) == pytest.approx(8.0 * 1.4 / 16.0)
    assert cfg.blur_radius(16.0, 0) < 1.0
    assert cfg.blur_radius(1.4, 4) == pytest.approx(16.0)
    radii = [cfg.blur_radius(f, 2) for f in (1.4, 1.8, 16.0)]
    assert radii == sorted(radii, reverse=True)


def test_disk_kernel():
    k = disk_kernel(3.0)
    assert k.shape == (9, 9)
    assert k.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(k, k.T)
    img = np.random.default_rng(0).random((3, 20, 20))
    np.testing.assert_array_equal(defocus(img, 0.3, "Canon"), img)
    assert not np.allclose(defocus(img, 3.0, "Canon"), defocus(img, 3.0, "Sony"))


def test_generate_determinism_and_layout(tmp_path):
    cfg = SynthConfig(image_size=(32, 48), num_pairs=4, seed=11)
    m1 = generate_synthetic(cfg, tmp_path / "a")
    m2 = generate_synthetic(cfg, tmp_path / "b")
    assert m1 == m2
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert not cmp.diff_files
    for sub in ("source", "target", "alpha"):
        files = sorted(p.name for p in (tmp_path / "a" / sub).iterdir())
        assert files == [f"{i:05d}.png" for i in range(4)]
        for name in files:
            assert filecmp.cmp(tmp_path / "a" / sub / name, tmp_path / "b" / sub / name, shallow=False)
    assert (tmp_path / "a" / "synth_config.txt").read_text() == cfg.describe()
    assert read_rgb(tmp_path / "a" / "source" / "00000.png").shape == (3, 32, 48)


def test_metadata_round_trip(synth_root):
    recs = load_dataset(synth_root)
    regenerated = generate_synthetic(SynthConfig(image_size=(64, 64), num_pairs=6, seed=3),
                                     synth_root.parent / "again")
    assert [r.meta for r in recs] == regenerated


def test_foreground_identical_across_views(synth_pairs):
    for pair in synth_pairs:
        fg = pair.alpha[0] == 1.0
        assert fg.any()
        np.testing.assert_array_equal(pair.source[:, fg], pair.target[:, fg])
        assert pair.meta.is_transformation
        assert pair.meta.source.f_number != pair.meta.target.f_number


def test_directions_alternate(synth_pairs):
    for i, pair in enumerate(synth_pairs):
        sharp_to_blur = pair.meta.source.f_number > pair.meta.target.f_number
        assert sharp_to_blur == (i % 2 == 0)


def test_crop_keeps_pairing(synth_pairs):
    rng = np.random.default_rng(5)
    for pair in synth_pairs:
        crop = paired_random_crop(pair, 24, rng)
        fg = crop.alpha[0] == 1.0
        np.testing.assert_array_equal(crop.source[:, fg], crop.target[:, fg])


def test_psnr_falls_with_aperture_gap():
    cfg = SynthConfig(image_size=(64, 64))
    scene = sample_scene(np.random.default_rng(4), cfg)
    sharp = render_view(scene, LensSpec("Sony", 50, 16.0), 2.0, cfg)
    mid = render_view(scene, LensSpec("Sony", 50, 1.8), 2.0, cfg)
    wide = render_view(scene, LensSpec("Sony", 50, 1.4), 2.0, cfg)
    # |delta 1/f|: 1.8->1.4 is 0.159, 16->1.8 is 0.493, 16->1.4 is 0.652
    values = [psnr(mid, wide), psnr(sharp, mid), psnr(sharp, wide)]
    assert all(np.isfinite(values))
    assert values[0] > values[1] > values[2]


def test_config_validation():
    with pytest.raises(ValidationError):
        SynthConfig(num_pairs=0)
    with pytest.raises(ValidationError):
        SynthConfig(image_size=(8, 8))
