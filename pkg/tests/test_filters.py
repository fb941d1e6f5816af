"""Gaussian blur and the defense transform pipeline."""

import numpy as np
import pytest

from ditherdefense.dither import QuantSpec, fs_dither
from ditherdefense.filters import (
    BlurSpec,
    PipelineStage,
    PipelineStageError,
    TransformPipeline,
    gaussian_blur,
    gaussian_kernel,
    pipeline_from_config,
)
from oracles import blur_2d_direct, gaussian_taps_direct


def test_blurspec_validation():
    BlurSpec(sigma=0.5, size=3)
    with pytest.raises(ValueError):
        BlurSpec(sigma=0.0)
    with pytest.raises(ValueError):
        BlurSpec(sigma=-1.0)
    with pytest.raises(ValueError):
        BlurSpec(size=4)
    with pytest.raises(ValueError):
        BlurSpec(size=-3)
    with pytest.raises(ValueError):
        BlurSpec(size=9.0)


def test_gaussian_kernel_matches_direct_taps():
    for sigma, size in ((3.0, 9), (1.0, 5), (0.8, 3), (2.5, 11)):
        taps = gaussian_kernel(BlurSpec(sigma=sigma, size=size))
        expect = np.asarray(gaussian_taps_direct(size, sigma))
        assert taps.shape == (size,)
        assert np.allclose(taps, expect, atol=1e-13, rtol=0.0)
        assert abs(float(taps.sum()) - 1.0) < 1e-12
        assert np.array_equal(taps, taps[::-1])


def test_separable_blur_matches_direct_2d():
    rng = np.random.default_rng(20)
    for channels in (1, 3):
        img = rng.uniform(0.0, 1.0, (8, 8, channels))
        out = gaussian_blur(img, BlurSpec(sigma=3.0, size=9))
        expect = np.asarray(blur_2d_direct(img.tolist(), 9, 3.0))
        assert np.max(np.abs(out - expect)) <= 1e-12


def test_blur_fixes_constant_images():
    for value in (0.0, 0.25, 1.0):
        img = np.full((7, 5, 3), value)
        out = gaussian_blur(img, BlurSpec(sigma=2.0, size=7))
        assert np.allclose(out, value, atol=1e-12, rtol=0.0)


def test_blur_output_stays_in_unit_range():
    rng = np.random.default_rng(21)
    img = rng.uniform(0.0, 1.0, (10, 10, 1))
    out = gaussian_blur(img, BlurSpec())
    assert np.all(out >= 0.0) and np.all(out <= 1.0)


def test_blur_smooths_an_impulse():
    img = np.zeros((9, 9, 1))
    img[4, 4, 0] = 1.0
    out = gaussian_blur(img, BlurSpec(sigma=1.0, size=5))
    assert out[4, 4, 0] < 1.0
    assert out[4, 3, 0] > 0.0
    assert abs(out[4, 3, 0] - out[3, 4, 0]) < 1e-15


def test_stage_validation():
    PipelineStage("hflip")
    PipelineStage("quantize", {"levels": 4})
    with pytest.raises(ValueError):
        PipelineStage("sharpen")
    with pytest.raises(ValueError):
        PipelineStage("quantize")
    with pytest.raises(ValueError):
        PipelineStage("hflip", {"angle": 90})
    with pytest.raises(ValueError):
        PipelineStage("blur", {"sigma": 2.0, "width": 5})


def test_empty_pipeline_is_identity_copy():
    rng = np.random.default_rng(22)
    img = rng.uniform(0.0, 1.0, (4, 4, 3))
    pipe = TransformPipeline(())
    out = pipe.apply(img)
    assert np.array_equal(out, img)
    assert out is not img


def test_pipeline_matches_manual_composition():
    rng = np.random.default_rng(23)
    img = rng.uniform(0.0, 1.0, (8, 8, 3))
    pipe = pipeline_from_config(
        [
            {"op": "fs_dither", "levels": 4},
            {"op": "blur", "sigma": 3.0, "size": 9},
        ]
    )
    manual = gaussian_blur(
        fs_dither(img, QuantSpec(4)), BlurSpec(sigma=3.0, size=9)
    )
    assert np.array_equal(pipe.apply(img), manual)


def test_pipeline_flip_stages():
    rng = np.random.default_rng(24)
    img = rng.uniform(0.0, 1.0, (5, 6, 3))
    pipe = pipeline_from_config([{"op": "hflip"}, {"op": "hflip"}])
    assert np.array_equal(pipe.apply(img), img)
    pipe = pipeline_from_config([{"op": "rotate", "quarter_turns": 2}])
    assert np.array_equal(pipe.apply(img), img[::-1, ::-1, :])


def test_pipeline_output_channels():
    pipe = pipeline_from_config([{"op": "blur"}])
    assert pipe.output_channels(3) == 3
    pipe = pipeline_from_config([{"op": "grayscale"}])
    assert pipe.output_channels(3) == 1
    pipe = pipeline_from_config([{"op": "fs_dither_gray", "levels": 2}])
    assert pipe.output_channels(3) == 1


def test_pipeline_stage_error_names_offender():
    pipe = pipeline_from_config([{"op": "hflip"}, {"op": "grayscale"}])
    gray = np.zeros((4, 4, 1))
    with pytest.raises(PipelineStageError) as exc_info:
        pipe.apply(gray)
    assert "stage 1" in str(exc_info.value)
    assert "grayscale" in str(exc_info.value)


def test_pipeline_config_round_trip():
    config = [
        {"op": "fs_dither", "levels": 3, "scan": "serpentine"},
        {"op": "blur", "sigma": 2.0, "size": 5},
        {"op": "grayscale"},
    ]
    pipe = pipeline_from_config(config)
    again = pipeline_from_config(pipe.to_config())
    rng = np.random.default_rng(25)
    img = rng.uniform(0.0, 1.0, (8, 8, 3))
    assert np.array_equal(pipe.apply(img), again.apply(img))


def test_pipeline_from_config_rejects_bad_entries():
    with pytest.raises(ValueError):
        pipeline_from_config([{"levels": 3}])
    with pytest.raises(ValueError):
        pipeline_from_config([{"op": "warp"}])
    with pytest.raises(ValueError):
        pipeline_from_config("hflip")
