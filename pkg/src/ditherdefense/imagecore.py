"""Image tensors, file I/O, and basic geometry.

Images are float64 numpy arrays of shape (height, width, channels) with
intensities in [0, 1]. Channels is 1 (grayscale) or 3 (RGB). All public
functions validate their inputs and raise ValueError on domain errors.
"""

from __future__ import annotations

import math
import os

import numpy as np

__all__ = [
    "ImageDecodeError",
    "validate_image",
    "as_image",
    "load_image",
    "save_image",
    "hflip",
    "vflip",
    "rotate",
    "to_grayscale",
    "psnr",
]

# Rec. 601 luma weights, used by to_grayscale.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class ImageDecodeError(ValueError):
    """Raised when an image file is structurally invalid.

    Attributes:
        offset: byte offset into the file where decoding failed, when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


def validate_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    """Check that img is a float (H, W, C) array with C in {1, 3} and values in [0, 1].

    Returns the array unchanged so calls can be chained. Raises ValueError
    describing the first violated constraint.
    """
    if not isinstance(img, np.ndarray):
        raise ValueError(f"{name} must be a numpy array, got {type(img).__name__}")
    if img.ndim != 3:
        raise ValueError(f"{name} must have shape (height, width, channels), got shape {img.shape}")
    h, w, c = img.shape
    if h < 1 or w < 1:
        raise ValueError(f"{name} must have positive height and width, got {img.shape}")
    if c not in (1, 3):
        raise ValueError(f"{name} must have 1 or 3 channels, got {c}")
    if not np.issubdtype(img.dtype, np.floating):
        raise ValueError(f"{name} must have a floating dtype, got {img.dtype}")
    if not np.all(np.isfinite(img)):
        raise ValueError(f"{name} contains non-finite values")
    lo = float(img.min())
    hi = float(img.max())
    if lo < 0.0 or hi > 1.0:
        raise ValueError(f"{name} intensities must lie in [0, 1], got range [{lo}, {hi}]")
    return img


def as_image(arr: np.ndarray) -> np.ndarray:
    """Coerce arr to the canonical float64 (H, W, C) layout and validate it.

    2-D input is treated as single-channel.
    """
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, np.newaxis]
    return validate_image(a)


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def _from_uint8(codes: np.ndarray) -> np.ndarray:
    return codes.astype(np.float64) / 255.0


def _to_uint8(img: np.ndarray) -> np.ndarray:
    # Round half-up so the inverse of codes/255 is exact on the code grid.
    return np.floor(img * 255.0 + 0.5).astype(np.uint8)


def _load_png(path: str) -> np.ndarray:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            mode = im.mode
            if mode in ("RGB", "L"):
                pass
            elif mode in ("RGBA", "P", "CMYK", "YCbCr"):
                im = im.convert("RGB")
            elif mode in ("LA", "1"):
                im = im.convert("L")
            else:
                raise ImageDecodeError(
                    f"unsupported PNG pixel mode {mode!r} in {path}; only 8-bit images are supported"
                )
            arr = np.asarray(im)
    except UnidentifiedImageError as exc:
        raise ImageDecodeError(f"cannot decode {path} as an image", offset=0) from exc
    if arr.ndim == 2:
        arr = arr[:, :, np.newaxis]
    return _from_uint8(arr)


class _PnmReader:
    """Tokenizer for binary PNM headers that tracks byte offsets."""

    def __init__(self, data: bytes, path: str):
        self.data = data
        self.path = path
        self.pos = 0

    def fail(self, message: str) -> ImageDecodeError:
        return ImageDecodeError(f"{self.path}: {message}", offset=self.pos)

    def _skip_separators(self) -> None:
        data = self.data
        while self.pos < len(data):
            ch = data[self.pos]
            if ch in b" \t\r\n":
                self.pos += 1
            elif ch == ord("#"):
                while self.pos < len(data) and data[self.pos] not in b"\r\n":
                    self.pos += 1
            else:
                return

    def token(self) -> bytes:
        self._skip_separators()
        if self.pos >= len(self.data):
            raise self.fail("unexpected end of header")
        start = self.pos
        while self.pos < len(self.data) and self.data[self.pos] not in b" \t\r\n":
            self.pos += 1
        return self.data[start:self.pos]

    def integer(self, what: str) -> int:
        tok = self.token()
        try:
            value = int(tok)
        except ValueError:
            self.pos -= len(tok)
            raise self.fail(f"invalid {what} {tok!r}") from None
        return value


def _load_pnm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    rd = _PnmReader(data, path)
    magic = rd.token()
    if magic not in (b"P5", b"P6"):
        rd.pos = 0
        raise rd.fail(f"unsupported magic {magic!r}; expected P5 or P6")
    channels = 1 if magic == b"P5" else 3
    width = rd.integer("width")
    height = rd.integer("height")
    maxval = rd.integer("maxval")
    if width < 1 or height < 1:
        raise rd.fail(f"invalid dimensions {width}x{height}")
    if maxval != 255:
        raise rd.fail(f"unsupported maxval {maxval}; only 8-bit (255) is supported")
    # Exactly one whitespace byte separates the header from the payload.
    if rd.pos >= len(data) or data[rd.pos] not in b" \t\r\n":
        raise rd.fail("missing separator after maxval")
    rd.pos += 1
    need = width * height * channels
    payload = data[rd.pos:rd.pos + need]
    if len(payload) < need:
        raise ImageDecodeError(
            f"{path}: truncated pixel data, expected {need} bytes but file ends early",
            offset=len(data),
        )
    codes = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return _from_uint8(codes)


def _save_pnm(img: np.ndarray, path: str) -> None:
    h, w, c = img.shape
    magic = b"P5" if c == 1 else b"P6"
    header = magic + b"\n%d %d\n255\n" % (w, h)
    codes = _to_uint8(img)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(codes.tobytes())


def _save_png(img: np.ndarray, path: str) -> None:
    from PIL import Image

    codes = _to_uint8(img)
    if img.shape[2] == 1:
        im = Image.fromarray(codes[:, :, 0], mode="L")
    else:
        im = Image.fromarray(codes, mode="RGB")
    im.save(path, format="PNG")


def load_image(path: str) -> np.ndarray:
    """Load a PNG or binary PNM (PPM/PGM) file as a float64 (H, W, C) array.

    8-bit codes map to intensities as code / 255. Raises FileNotFoundError
    for missing files and ImageDecodeError for malformed ones.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such image file: {path}")
    ext = os.path.splitext(path)[1].lower()
    if ext == ".png":
        img = _load_png(path)
    elif ext in (".ppm", ".pgm", ".pnm"):
        img = _load_pnm(path)
    else:
        raise ValueError(f"unsupported image extension {ext!r}; use .png, .ppm, or .pgm")
    return validate_image(img, name=path)


def save_image(img: np.ndarray, path: str) -> None:
    """Write img to path as PNG or binary PNM, chosen by extension.

    Intensities are encoded as round(x * 255) with half-up rounding, so
    load_image(save_image(x)) is the identity for images already on the
    255-code grid. PPM requires 3 channels and PGM requires 1.
    """
    img = as_image(img)
    ext = os.path.splitext(path)[1].lower()
    c = img.shape[2]
    if ext == ".png":
        _save_png(img, path)
    elif ext == ".ppm":
        if c != 3:
            raise ValueError(f"PPM requires 3 channels, image has {c}")
        _save_pnm(img, path)
    elif ext == ".pgm":
        if c != 1:
            raise ValueError(f"PGM requires 1 channel, image has {c}")
        _save_pnm(img, path)
    elif ext == ".pnm":
        _save_pnm(img, path)
    else:
        raise ValueError(f"unsupported image extension {ext!r}; use .png, .ppm, or .pgm")


# ---------------------------------------------------------------------------
# Geometry and color
# ---------------------------------------------------------------------------

def hflip(img: np.ndarray) -> np.ndarray:
    """Mirror the image left-right."""
    img = as_image(img)
    return img[:, ::-1, :].copy()


def vflip(img: np.ndarray) -> np.ndarray:
    """Mirror the image top-bottom."""
    img = as_image(img)
    return img[::-1, :, :].copy()


def rotate(img: np.ndarray, quarter_turns: int) -> np.ndarray:
    """Rotate by quarter_turns * 90 degrees counterclockwise (any integer)."""
    img = as_image(img)
    if not isinstance(quarter_turns, (int, np.integer)):
        raise ValueError(f"quarter_turns must be an integer, got {quarter_turns!r}")
    return np.rot90(img, k=int(quarter_turns) % 4, axes=(0, 1)).copy()


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Collapse RGB to a single luma channel (weights 0.299, 0.587, 0.114)."""
    img = as_image(img)
    if img.shape[2] != 3:
        raise ValueError(f"to_grayscale requires 3 channels, got {img.shape[2]}")
    r, g, b = LUMA_WEIGHTS
    luma = r * img[:, :, 0] + g * img[:, :, 1] + b * img[:, :, 2]
    return np.clip(luma, 0.0, 1.0)[:, :, np.newaxis]


def psnr(reference: np.ndarray, test: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB on the unit intensity scale.

    Returns math.inf when the two images are bit-identical.
    """
    reference = as_image(reference)
    test = as_image(test)
    if reference.shape != test.shape:
        raise ValueError(
            f"psnr requires matching shapes, got {reference.shape} and {test.shape}"
        )
    mse = float(np.mean((reference - test) ** 2))
    if mse == 0.0:
        return math.inf
    return -10.0 * math.log10(mse)
