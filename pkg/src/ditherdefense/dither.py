"""Uniform quantization and Floyd-Steinberg error diffusion at K levels.

The quantizer snaps intensities to the uniform grid {i / (K - 1)} for
K in [2, 256], rounding half-up. Error diffusion processes pixels in scan
order, quantizes the accumulated value, and pushes the signed residual onto
not-yet-visited neighbors through a causal kernel. Channels are dithered
independently. The error accumulator is never clamped; only the quantizer
index is clipped, so mid-image accumulator values may leave [0, 1] while
the output always lies on the grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numba
import numpy as np

from .imagecore import as_image, to_grayscale

__all__ = [
    "QuantSpec",
    "DiffusionKernel",
    "ScanOrder",
    "FLOYD_STEINBERG",
    "quantize_uniform",
    "fs_dither",
    "fs_dither_gray",
]

ScanOrder = Literal["raster", "serpentine"]
_SCAN_ORDERS = ("raster", "serpentine")


@dataclass(frozen=True)
class QuantSpec:
    """Uniform quantizer with `levels` output levels on [0, 1]."""

    levels: int

    def __post_init__(self):
        if not isinstance(self.levels, (int, np.integer)):
            raise ValueError(f"levels must be an integer, got {self.levels!r}")
        if not 2 <= self.levels <= 256:
            raise ValueError(f"levels must be in [2, 256], got {self.levels}")

    @property
    def grid(self) -> np.ndarray:
        """The K representable intensities, i / (levels - 1)."""
        return np.arange(self.levels, dtype=np.float64) / (self.levels - 1)

    @property
    def step(self) -> float:
        """Spacing between adjacent grid levels."""
        return 1.0 / (self.levels - 1)


@dataclass(frozen=True)
class DiffusionKernel:
    """Causal error-diffusion taps as (row_offset, col_offset, weight) triples.

    Every tap must address a pixel the scan has not visited yet (row_offset
    greater than 0, or 0 with a positive col_offset), weights must be positive,
    and the weights must sum to exactly 1 so diffusion conserves error.
    """

    taps: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        if len(self.taps) == 0:
            raise ValueError("kernel must have at least one tap")
        for dr, dc, w in self.taps:
            if dr < 0 or (dr == 0 and dc <= 0):
                raise ValueError(
                    f"tap ({dr}, {dc}) addresses an already-visited pixel; "
                    "taps need row_offset > 0, or row_offset == 0 with col_offset > 0"
                )
            if not (w > 0.0):
                raise ValueError(f"tap weight must be positive, got {w}")
        total = math.fsum(w for _, _, w in self.taps)
        if total != 1.0:
            raise ValueError(f"tap weights must sum to exactly 1, got {total!r}")

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Taps split into contiguous (row_offsets, col_offsets, weights) arrays."""
        dr = np.array([t[0] for t in self.taps], dtype=np.int64)
        dc = np.array([t[1] for t in self.taps], dtype=np.int64)
        w = np.array([t[2] for t in self.taps], dtype=np.float64)
        return dr, dc, w


# The classic four-tap kernel: right 7/16, below-left 3/16, below 5/16,
# below-right 1/16.
FLOYD_STEINBERG = DiffusionKernel(
    taps=(
        (0, 1, 7.0 / 16.0),
        (1, -1, 3.0 / 16.0),
        (1, 0, 5.0 / 16.0),
        (1, 1, 1.0 / 16.0),
    )
)


def quantize_uniform(img: np.ndarray, spec: QuantSpec) -> np.ndarray:
    """Snap every intensity to the nearest grid level, ties rounding up.

    The output is bit-exactly on the grid: each value equals i / (levels - 1)
    for some integer i.
    """
    img = as_image(img)
    km1 = float(spec.levels - 1)
    idx = np.floor(img * km1 + 0.5)
    np.clip(idx, 0.0, km1, out=idx)
    return idx / km1


@numba.njit(cache=True, nogil=True)
def _diffuse_channel(buf, out, levels, dr, dc, w, serpentine):  # pragma: no cover
    height, width = buf.shape
    km1 = levels - 1.0
    ntaps = dr.shape[0]
    for r in range(height):
        reverse = serpentine and (r % 2 == 1)
        for j in range(width):
            c = width - 1 - j if reverse else j
            acc = buf[r, c]
            idx = int(math.floor(acc * km1 + 0.5))
            if idx < 0:
                idx = 0
            elif idx > levels - 1:
                idx = levels - 1
            q = idx / km1
            out[r, c] = q
            err = acc - q
            for t in range(ntaps):
                rr = r + dr[t]
                cc = c - dc[t] if reverse else c + dc[t]
                if 0 <= rr < height and 0 <= cc < width:
                    buf[rr, cc] += err * w[t]


def _check_scan(scan: str) -> bool:
    if scan not in _SCAN_ORDERS:
        raise ValueError(f"scan must be one of {_SCAN_ORDERS}, got {scan!r}")
    return scan == "serpentine"


def fs_dither(
    img: np.ndarray,
    spec: QuantSpec,
    scan: ScanOrder = "raster",
    kernel: DiffusionKernel = FLOYD_STEINBERG,
) -> np.ndarray:
    """Error-diffusion dither each channel independently to the K-level grid.

    Raster scan visits every row left to right; serpentine alternates
    direction per row and mirrors the kernel column offsets on reversed
    rows. Error falling outside the image is discarded. Output intensities
    are bit-exactly on the grid and satisfy |out - in| <= 1 / (levels - 1)
    per pixel.
    """
    img = as_image(img)
    serpentine = _check_scan(scan)
    dr, dc, w = kernel.arrays()
    out = np.empty_like(img)
    for ch in range(img.shape[2]):
        # The accumulator buffer must be a copy: single-channel slices are
        # already contiguous views, and the diffusion loop writes into its
        # buffer as it walks.
        buf = img[:, :, ch].copy()
        chan_out = np.empty_like(buf)
        _diffuse_channel(buf, chan_out, spec.levels, dr, dc, w, serpentine)
        out[:, :, ch] = chan_out
    return out


def fs_dither_gray(
    img: np.ndarray,
    spec: QuantSpec,
    scan: ScanOrder = "raster",
    kernel: DiffusionKernel = FLOYD_STEINBERG,
) -> np.ndarray:
    """Collapse to luma first, then dither the single channel."""
    return fs_dither(to_grayscale(img), spec, scan=scan, kernel=kernel)
