import logging
import math

import numpy as np
import pytest
from PIL import Image

from cdgnet.data.blur import BlurField, line_kernel, procedural_texture, synth_blur, synth_dataset
from cdgnet.data.dataset import ImagePair, list_pairs, load_paired_dataset, random_crop
from cdgnet.data.diagnostics import (
    HISTOGRAM_BINS,
    diagnose,
    format_diagnostics,
    fourier_spectrum,
    gradient_histogram,
)
from cdgnet.data.io import (
    denormalize,
    load_image,
    load_mask,
    normalize,
    save_gray,
    save_image,
    to_uint8,
)
from cdgnet.errors import ImageFormatError, InputError
from cdgnet.training.supervision import luma


# io


def test_png_roundtrip_is_exact_on_the_8bit_grid(tmp_path, rng):
    levels = rng.integers(0, 256, size=(3, 5, 7))
    path = tmp_path / "image.png"
    save_image(levels / 255.0, path)
    loaded = load_image(path)
    assert loaded.dtype == np.float32
    assert loaded.shape == (3, 5, 7)
    np.testing.assert_array_equal(to_uint8(loaded), levels.astype(np.uint8))


def test_to_uint8_rounds_half_up_and_clamps():
    values = np.array([-0.2, 0.0, 0.6 / 255.0, 1.4 / 255.0, 1.6 / 255.0, 1.0, 3.0])
    np.testing.assert_array_equal(to_uint8(values), [0, 0, 1, 1, 2, 255, 255])


def test_sixteen_bit_png_is_rejected(tmp_path):
    path = tmp_path / "deep.png"
    Image.fromarray(np.full((4, 4), 40000, dtype=np.uint16)).save(path)
    with pytest.raises(ImageFormatError):
        load_image(path)


def test_non_rgb_and_non_png_inputs_are_rejected(tmp_path):
    gray = tmp_path / "gray.png"
    Image.fromarray(np.zeros((4, 4), dtype=np.uint8)).save(gray)
    with pytest.raises(ImageFormatError):
        load_image(gray)

    jpeg = tmp_path / "photo.jpg"
    Image.fromarray(np.zeros((4, 4, 3), dtype=np.uint8)).save(jpeg)
    with pytest.raises(ImageFormatError):
        load_image(jpeg)

    with pytest.raises(InputError):
        load_image(tmp_path / "missing.png")


def test_mask_must_be_binary(tmp_path):
    path = tmp_path / "mask.png"
    levels = np.zeros((3, 4), dtype=np.uint8)
    levels[1, 2] = 255
    Image.fromarray(levels).save(path)
    mask = load_mask(path)
    assert mask.shape == (1, 3, 4)
    assert mask.sum() == 1.0

    levels[0, 0] = 128
    Image.fromarray(levels).save(path)
    with pytest.raises(ImageFormatError):
        load_mask(path)


def test_save_gray_writes_single_channel(tmp_path):
    path = tmp_path / "map.png"
    save_gray(np.linspace(0, 1, 12).reshape(3, 4), path)
    with Image.open(path) as image:
        assert image.mode == "L"
        assert image.size == (4, 3)


def test_normalization_is_a_half_shift():
    image = np.array([0.0, 0.25, 1.0], dtype=np.float32)
    np.testing.assert_array_equal(normalize(image), [-0.5, -0.25, 0.5])
    np.testing.assert_array_equal(denormalize(np.array([-0.7, 0.0, 0.7])), [0.0, 0.5, 1.0])


# dataset


def test_loads_sorted_pairs_with_proxy_masks(dataset_dir):
    pairs = load_paired_dataset(dataset_dir)
    assert [p.name for p in pairs] == ["0000.png", "0001.png", "0002.png"]
    pair = pairs[0]
    assert pair.blurry.shape == pair.sharp.shape == (1, 3, 16, 16)
    assert pair.mask.shape == (1, 1, 16, 16)
    assert pair.blurry.min() >= -0.5 and pair.blurry.max() <= 0.5
    assert set(np.unique(pair.mask)) <= {0.0, 1.0}


def test_unpaired_files_are_skipped_with_a_warning(dataset_dir, caplog):
    save_image(np.zeros((3, 16, 16)), dataset_dir / "blur" / "extra.png")
    with caplog.at_level(logging.WARNING, logger="cdgnet.data"):
        names = list_pairs(dataset_dir)
    assert "extra.png" not in names
    assert "extra.png" in caplog.text


def test_external_mask_overrides_the_proxy(dataset_dir):
    (dataset_dir / "mask").mkdir()
    Image.fromarray(np.full((16, 16), 255, dtype=np.uint8)).save(dataset_dir / "mask" / "0001.png")
    pairs = {p.name: p for p in load_paired_dataset(dataset_dir)}
    assert pairs["0001.png"].mask.all()


def test_missing_directories_are_an_input_error(tmp_path):
    with pytest.raises(InputError):
        list_pairs(tmp_path)


def test_pair_extents_must_agree():
    with pytest.raises(InputError):
        ImagePair("x", np.zeros((1, 3, 4, 4)), np.zeros((1, 3, 4, 5)), np.zeros((1, 1, 4, 4)))


def _coordinate_pair(height, width):
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float32)
    blurry = np.stack([yy, xx, np.zeros_like(yy)])[None]
    return ImagePair("grid", blurry, blurry.copy(), np.ones((1, 1, height, width), np.float32))


def test_full_size_crop_is_identity(rng):
    pair = _coordinate_pair(8, 8)
    np.testing.assert_array_equal(random_crop(pair, 8, rng).blurry, pair.blurry)


def test_crop_is_reproducible_and_shared_across_arrays():
    pair = _coordinate_pair(20, 24)
    a = random_crop(pair, 8, np.random.default_rng(5))
    b = random_crop(pair, 8, np.random.default_rng(5))
    np.testing.assert_array_equal(a.blurry, b.blurry)
    np.testing.assert_array_equal(a.blurry, a.sharp)


def test_crop_offsets_cover_the_valid_range():
    pair = _coordinate_pair(720, 1280)
    rng = np.random.default_rng(0)
    tops, lefts = [], []
    for _ in range(300):
        crop = random_crop(pair, 256, rng)
        tops.append(crop.blurry[0, 0, 0, 0])
        lefts.append(crop.blurry[0, 1, 0, 0])
    assert min(tops) >= 0 and max(tops) <= 464
    assert min(lefts) >= 0 and max(lefts) <= 1024
    assert max(tops) > 400 and max(lefts) > 900


def test_oversized_crop_is_rejected(rng):
    with pytest.raises(InputError):
        random_crop(_coordinate_pair(8, 8), 12, rng)


# blur synthesis


def test_line_kernels():
    box = line_kernel(5, 0.0)
    assert box.shape == (5, 5)
    np.testing.assert_allclose(box[2], np.full(5, 0.2))
    assert box.sum() == pytest.approx(1.0)
    vertical = line_kernel(5, math.pi / 2)
    np.testing.assert_allclose(vertical[:, 2], np.full(5, 0.2))
    assert line_kernel(1, 0.7).shape == (1, 1)
    with pytest.raises(ValueError):
        line_kernel(0, 0.0)


def _field(size, large, small, alpha=1.0):
    return BlurField(large, 0.0, small, 0.0, alpha=np.full((size, size), alpha), noise_sigma=0.0)


def test_delta_kernels_leave_the_image_unchanged(rng):
    sharp = procedural_texture(24, rng)
    np.testing.assert_array_equal(synth_blur(sharp, _field(24, 1, 1), rng), sharp)


def test_constant_image_is_invariant_to_blur(rng):
    sharp = np.full((3, 20, 20), 0.4, dtype=np.float32)
    np.testing.assert_allclose(synth_blur(sharp, _field(20, 13, 3, 0.5), rng), sharp, atol=1e-6)


def test_box_blur_of_a_step_edge_is_a_ramp(rng):
    sharp = np.zeros((3, 32, 32), dtype=np.float32)
    sharp[..., 16:] = 1.0
    blurry = synth_blur(sharp, _field(32, 9, 1), rng)
    x = np.arange(11, 21)
    np.testing.assert_allclose(blurry[0, 10, 11:21], (x - 11) / 9.0, atol=1e-6)
    assert not blurry[:, :, :11].any()
    assert (blurry[:, :, 20:] == 1.0).all()


def test_synth_dataset_is_reproducible(tmp_path):
    synth_dataset(tmp_path / "a", count=2, size=16, seed=5)
    synth_dataset(tmp_path / "b", count=2, size=16, seed=5)
    for sub in ("sharp", "blur"):
        for name in ("0000.png", "0001.png"):
            np.testing.assert_array_equal(
                load_image(tmp_path / "a" / sub / name), load_image(tmp_path / "b" / sub / name)
            )


# diagnostics


def test_constant_image_histogram_and_spectrum():
    image = np.full((3, 10, 13), 0.6)
    histogram = gradient_histogram(image)
    assert histogram.shape == (HISTOGRAM_BINS,)
    assert histogram[0] == 9 * 12
    assert histogram[1:].sum() == 0
    assert fourier_spectrum(image).hf_ratio == 0.0


def test_histogram_mass_counts_interior_pixels(rng):
    image = rng.uniform(size=(3, 17, 9))
    assert gradient_histogram(image).sum() == 16 * 8


def test_spectrum_satisfies_parseval(rng):
    image = rng.uniform(size=(3, 12, 16))
    y = luma(image)
    spectrum = fourier_spectrum(image)
    assert spectrum.power == pytest.approx(y.size * float((y**2).sum()), rel=1e-10)
    assert 0.0 <= spectrum.hf_ratio <= 1.0
    assert spectrum.radii[0] == 0


def test_large_blur_lowers_gradient_tail_and_high_frequencies():
    tails_sharp = tails_blurry = 0
    hf_sharp = hf_blurry = 0.0
    for index in range(20):
        rng = np.random.default_rng([31, index])
        sharp = procedural_texture(64, rng)
        length = int(rng.integers(9, 16))
        field = BlurField(length, float(rng.uniform(0, math.pi)), 1, 0.0, alpha=np.ones((64, 64)), noise_sigma=0.0)
        blurry = synth_blur(sharp, field, rng)
        before, after = diagnose(sharp), diagnose(blurry)
        assert after.tail <= before.tail
        assert after.hf_ratio < before.hf_ratio
        hf_sharp += before.hf_ratio
        hf_blurry += after.hf_ratio
        tails_sharp += before.tail
        tails_blurry += after.tail
    assert tails_blurry < tails_sharp
    assert hf_blurry < hf_sharp


def test_diagnostics_csv_sections(rng):
    text = format_diagnostics(diagnose(rng.uniform(size=(3, 8, 8))))
    lines = text.splitlines()
    assert lines[0] == "bin_index,count"
    assert lines[HISTOGRAM_BINS + 1] == "radius,log_mag"
    assert lines[-2] == "hf_ratio"
    assert 0.0 <= float(lines[-1]) <= 1.0
