"""Synthetic four-class image dataset: stripes, checkerboards, disks.

The patterns are deliberately low-frequency (stripe bands, checker cells,
and disk radii of several pixels) so they survive both heavy dithering and
a sigma=3 blur; class information lives in layout, not texture. Colors are
drawn with the foreground/background luma gap confined to a narrow band,
which keeps per-image difficulty roughly uniform instead of mixing trivial
high-contrast images with hopeless low-contrast ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "CLASS_NAMES",
    "DatasetParams",
    "SyntheticDataset",
    "generate_dataset",
    "save_dataset",
    "load_dataset",
]

CLASS_NAMES = ("h_stripes", "v_stripes", "checker", "disk")

# Foreground/background pairs are redrawn until their luma difference
# falls in this band: the floor keeps patterns visible after grayscale
# conversion, the tight ceiling keeps image difficulty roughly uniform.
_LUMA_GAP_BAND = (0.30, 0.36)
_LUMA = np.array([0.299, 0.587, 0.114])

# Half-open ranges for stripe band width and checker cell size, in pixels.
_BAND_RANGE = (8, 11)
_CELL_RANGE = (8, 11)

# Disk radius range as fractions of the image size.
_RADIUS_RANGE = (0.26, 0.28)


@dataclass(frozen=True)
class DatasetParams:
    """Generation knobs: image count, square size, noise amplitude, seed."""

    count: int = 400
    size: int = 32
    noise: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")
        if self.size < 16:
            raise ValueError(f"size must be >= 16, got {self.size}")
        if self.size % 4 != 0:
            raise ValueError(
                f"size must be divisible by 4 (the SIA block split), got {self.size}"
            )
        if self.noise < 0.0:
            raise ValueError(f"noise amplitude must be >= 0, got {self.noise}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")


@dataclass
class SyntheticDataset:
    """Images of shape (n, size, size, 3) with integer labels into CLASS_NAMES."""

    images: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]
    params: DatasetParams

    def __post_init__(self):
        if self.images.ndim != 4 or self.images.shape[0] != self.labels.shape[0]:
            raise ValueError(
                f"images {self.images.shape} and labels {self.labels.shape} disagree"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise ValueError("labels out of range for class_names")

    def __len__(self) -> int:
        return int(self.images.shape[0])


def _pick_colors(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = _LUMA_GAP_BAND
    while True:
        fg = rng.uniform(0.0, 1.0, 3)
        bg = rng.uniform(0.0, 1.0, 3)
        if lo <= abs(float(_LUMA @ fg) - float(_LUMA @ bg)) <= hi:
            return fg, bg


def _paint(mask: np.ndarray, fg: np.ndarray, bg: np.ndarray) -> np.ndarray:
    return np.where(mask[:, :, np.newaxis], fg, bg)


def _make_image(label: int, size: int, rng: np.random.Generator) -> np.ndarray:
    fg, bg = _pick_colors(rng)
    name = CLASS_NAMES[label]
    if name in ("h_stripes", "v_stripes"):
        band = int(rng.integers(_BAND_RANGE[0], _BAND_RANGE[1]))
        phase = int(rng.integers(0, 2 * band))
        stripes = ((np.arange(size) + phase) // band) % 2 == 0
        if name == "h_stripes":
            mask = np.broadcast_to(stripes[:, np.newaxis], (size, size))
        else:
            mask = np.broadcast_to(stripes[np.newaxis, :], (size, size))
    elif name == "checker":
        cell = int(rng.integers(_CELL_RANGE[0], _CELL_RANGE[1]))
        off_r = int(rng.integers(0, cell))
        off_c = int(rng.integers(0, cell))
        rr = (np.arange(size) + off_r) // cell
        cc = (np.arange(size) + off_c) // cell
        mask = (rr[:, np.newaxis] + cc[np.newaxis, :]) % 2 == 0
    else:
        cy = rng.uniform(0.3 * size, 0.7 * size)
        cx = rng.uniform(0.3 * size, 0.7 * size)
        radius = rng.uniform(_RADIUS_RANGE[0] * size, _RADIUS_RANGE[1] * size)
        yy = np.arange(size)[:, np.newaxis] - cy
        xx = np.arange(size)[np.newaxis, :] - cx
        mask = yy * yy + xx * xx <= radius * radius
    return _paint(mask, fg, bg)


def generate_dataset(params: DatasetParams) -> SyntheticDataset:
    """Build a balanced dataset, deterministic in params.seed.

    Labels cycle through the four classes so any prefix is balanced to
    within one image per class. Noise is additive uniform in +-amplitude,
    clipped to [0, 1].
    """
    rng = np.random.default_rng(params.seed)
    images = np.empty((params.count, params.size, params.size, 3))
    labels = np.arange(params.count, dtype=np.int64) % len(CLASS_NAMES)
    for i in range(params.count):
        img = _make_image(int(labels[i]), params.size, rng)
        if params.noise > 0.0:
            img = img + rng.uniform(-params.noise, params.noise, img.shape)
        images[i] = np.clip(img, 0.0, 1.0)
    return SyntheticDataset(
        images=images, labels=labels, class_names=CLASS_NAMES, params=params
    )


_FORMAT_VERSION = 1


def save_dataset(ds: SyntheticDataset, path: str) -> None:
    """Write the dataset to an .npz file."""
    np.savez(
        path,
        format_version=np.int64(_FORMAT_VERSION),
        images=ds.images,
        labels=ds.labels,
        class_names=np.array(ds.class_names),
        params=np.array(
            [ds.params.count, ds.params.size, ds.params.seed], dtype=np.int64
        ),
        noise=np.float64(ds.params.noise),
    )


def load_dataset(path: str) -> SyntheticDataset:
    """Load a dataset written by save_dataset."""
    with np.load(path) as data:
        try:
            version = int(data["format_version"])
            if version != _FORMAT_VERSION:
                raise ValueError(f"unsupported dataset format version {version}")
            count, size, seed = (int(v) for v in data["params"])
            params = DatasetParams(
                count=count, size=size, noise=float(data["noise"]), seed=seed
            )
            return SyntheticDataset(
                images=data["images"],
                labels=data["labels"],
                class_names=tuple(str(n) for n in data["class_names"]),
                params=params,
            )
        except KeyError as exc:
            raise ValueError(f"{path} is not a dataset file: missing {exc}") from exc
