"""Separable Gaussian blur and composable image transform pipelines."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import dither, imagecore

__all__ = [
    "BlurSpec",
    "gaussian_kernel",
    "gaussian_blur",
    "PipelineStage",
    "TransformPipeline",
    "PipelineStageError",
    "apply_pipeline",
    "pipeline_from_config",
]


@dataclass(frozen=True)
class BlurSpec:
    """Gaussian blur with standard deviation sigma and an odd kernel size."""

    sigma: float = 3.0
    size: int = 9

    def __post_init__(self):
        if not (self.sigma > 0.0):
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not isinstance(self.size, (int, np.integer)) or self.size < 1:
            raise ValueError(f"size must be a positive integer, got {self.size!r}")
        if self.size % 2 == 0:
            raise ValueError(f"size must be odd so the kernel is centered, got {self.size}")


def gaussian_kernel(spec: BlurSpec) -> np.ndarray:
    """1-D Gaussian taps w_t proportional to exp(-t^2 / (2 sigma^2)), normalized.

    t runs over the size offsets centered at zero; truncation to the window
    is followed by renormalization so the taps sum to 1.
    """
    half = spec.size // 2
    t = np.arange(-half, half + 1, dtype=np.float64)
    w = np.exp(-(t * t) / (2.0 * spec.sigma * spec.sigma))
    return w / w.sum()


def _blur_axis(img: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    """Correlate one spatial axis with taps under replicate (clamp) padding."""
    half = taps.shape[0] // 2
    pad = [(0, 0), (0, 0), (0, 0)]
    pad[axis] = (half, half)
    padded = np.pad(img, pad, mode="edge")
    out = np.zeros_like(img)
    n = img.shape[axis]
    for k, w in enumerate(taps):
        sl = [slice(None)] * 3
        sl[axis] = slice(k, k + n)
        out += w * padded[tuple(sl)]
    return out


def gaussian_blur(img: np.ndarray, spec: BlurSpec) -> np.ndarray:
    """Blur with a separable Gaussian, clamp-to-edge padding at the borders.

    Runs a horizontal pass then a vertical pass with the same 1-D taps; the
    result matches direct 2-D convolution with the outer-product kernel
    because clamp padding factorizes per axis. Output is clipped to [0, 1]
    to absorb float round-off (the exact result already lies inside).
    """
    img = imagecore.as_image(img)
    taps = gaussian_kernel(spec)
    out = _blur_axis(img, taps, axis=1)
    out = _blur_axis(out, taps, axis=0)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Transform pipelines
# ---------------------------------------------------------------------------

class PipelineStageError(ValueError):
    """A stage failed while a pipeline was applied; names the stage."""

    def __init__(self, index: int, op: str, message: str):
        super().__init__(f"pipeline stage {index} ({op}): {message}")
        self.index = index
        self.op = op


def _apply_quantize(img, params):
    return dither.quantize_uniform(img, dither.QuantSpec(params["levels"]))


def _apply_fs(img, params):
    return dither.fs_dither(
        img, dither.QuantSpec(params["levels"]), scan=params.get("scan", "raster")
    )


def _apply_fs_gray(img, params):
    return dither.fs_dither_gray(
        img, dither.QuantSpec(params["levels"]), scan=params.get("scan", "raster")
    )


def _apply_blur(img, params):
    return gaussian_blur(
        img, BlurSpec(sigma=params.get("sigma", 3.0), size=params.get("size", 9))
    )


def _apply_rotate(img, params):
    return imagecore.rotate(img, params.get("quarter_turns", 1))


# op name -> (apply func, required params, optional params, output channels func)
_OPS: dict[str, tuple[Any, frozenset, frozenset, Any]] = {
    "hflip": (lambda img, p: imagecore.hflip(img), frozenset(), frozenset(), None),
    "vflip": (lambda img, p: imagecore.vflip(img), frozenset(), frozenset(), None),
    "rotate": (_apply_rotate, frozenset(), frozenset({"quarter_turns"}), None),
    "grayscale": (lambda img, p: imagecore.to_grayscale(img), frozenset(), frozenset(), lambda c: 1),
    "quantize": (_apply_quantize, frozenset({"levels"}), frozenset(), None),
    "fs_dither": (_apply_fs, frozenset({"levels"}), frozenset({"scan"}), None),
    "fs_dither_gray": (_apply_fs_gray, frozenset({"levels"}), frozenset({"scan"}), lambda c: 1),
    "blur": (_apply_blur, frozenset(), frozenset({"sigma", "size"}), None),
}


@dataclass(frozen=True)
class PipelineStage:
    """One named operation plus its parameters."""

    op: str
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.op not in _OPS:
            raise ValueError(
                f"unknown pipeline op {self.op!r}; valid ops: {sorted(_OPS)}"
            )
        _, required, optional, _ = _OPS[self.op]
        missing = required - self.params.keys()
        if missing:
            raise ValueError(f"op {self.op!r} missing required params {sorted(missing)}")
        unknown = self.params.keys() - required - optional
        if unknown:
            raise ValueError(f"op {self.op!r} got unknown params {sorted(unknown)}")


@dataclass(frozen=True)
class TransformPipeline:
    """An ordered sequence of stages applied left to right.

    An empty pipeline is the identity (the image is still validated and
    copied). Deterministic: pipelines hold no random state.
    """

    stages: tuple[PipelineStage, ...] = ()

    def apply(self, img: np.ndarray) -> np.ndarray:
        out = imagecore.as_image(img).copy()
        for i, stage in enumerate(self.stages):
            func = _OPS[stage.op][0]
            try:
                out = func(out, stage.params)
            except ValueError as exc:
                raise PipelineStageError(i, stage.op, str(exc)) from exc
        return out

    def output_channels(self, input_channels: int) -> int:
        c = input_channels
        for stage in self.stages:
            chan_fn = _OPS[stage.op][3]
            if chan_fn is not None:
                c = chan_fn(c)
        return c

    def to_config(self) -> list[dict[str, Any]]:
        return [{"op": s.op, **s.params} for s in self.stages]


def apply_pipeline(img: np.ndarray, pipeline: TransformPipeline) -> np.ndarray:
    """Run img through the pipeline's stages left to right."""
    return pipeline.apply(img)


def pipeline_from_config(stages: list[dict[str, Any]]) -> TransformPipeline:
    """Build a pipeline from a list of {"op": name, **params} mappings."""
    if not isinstance(stages, (list, tuple)):
        raise ValueError(f"pipeline config must be a list of stage mappings, got {type(stages).__name__}")
    built = []
    for i, entry in enumerate(stages):
        if not isinstance(entry, dict) or "op" not in entry:
            raise ValueError(f"pipeline stage {i} must be a mapping with an 'op' key, got {entry!r}")
        params = {k: v for k, v in entry.items() if k != "op"}
        try:
            built.append(PipelineStage(op=entry["op"], params=params))
        except ValueError as exc:
            raise ValueError(f"pipeline stage {i}: {exc}") from exc
    return TransformPipeline(stages=tuple(built))
