"""Grayscale image I/O, bilinear resizing, and the document region cuts.

Images travel as 2-D float arrays with values in [0, 1], 0 = black ink.
Binary PGM (P5) is the native format; PPM (P6) loads as the unweighted mean
of the color channels, and PNG works when Pillow happens to be installed.

Region geometry is fixed on a 780x600 working frame: a 256-row header, a
256-row footer, and two 400x300 body panels flanking the vertical midline.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np


class ImageFormatError(ValueError):
    """Malformed or unsupported image payload."""


FRAME_H, FRAME_W = 780, 600
HEADER_ROWS = 256
BODY_ROWS = 400
# (row_start, row_stop, col_start, col_stop) on the working frame
REGION_BOUNDS = {
    "holistic": (0, FRAME_H, 0, FRAME_W),
    "header": (0, HEADER_ROWS, 0, FRAME_W),
    "footer": (FRAME_H - HEADER_ROWS, FRAME_H, 0, FRAME_W),
    "left_body": (190, 190 + BODY_ROWS, 0, FRAME_W // 2),
    "right_body": (190, 190 + BODY_ROWS, FRAME_W // 2, FRAME_W),
}
REGION_ORDER = ("holistic", "header", "left_body", "right_body", "footer")


def _read_header_tokens(data: bytes, count: int):
    """Pull `count` whitespace-separated tokens off a PNM header, honoring
    '#' comments; returns (tokens, offset of first raster byte)."""
    tokens, i, n = [], 0, len(data)
    while len(tokens) < count:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i] == ord("#"):
            while i < n and data[i] not in (10, 13):
                i += 1
            continue
        start = i
        while i < n and not data[i:i + 1].isspace() and data[i] != ord("#"):
            i += 1
        if i == start:
            raise ImageFormatError("malformed header: ran out of tokens")
        tokens.append(data[start:i])
    if i >= n or not data[i:i + 1].isspace():
        raise ImageFormatError("malformed header: missing raster separator")
    return tokens, i + 1


def _decode_pnm(data: bytes, channels: int) -> np.ndarray:
    tokens, offset = _read_header_tokens(data, 4)
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError:
        raise ImageFormatError("malformed header: non-numeric size field") from None
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise ImageFormatError(f"malformed header: size {width}x{height} maxval {maxval}")
    wide = maxval > 255
    need = width * height * channels * (2 if wide else 1)
    raster = data[offset:offset + need]
    if len(raster) < need:
        raise ImageFormatError(f"truncated raster: wanted {need} bytes, got {len(raster)}")
    dt = np.dtype(">u2") if wide else np.dtype("u1")
    flat = np.frombuffer(raster, dtype=dt).astype(np.float32) / maxval
    if channels == 1:
        return flat.reshape(height, width)
    return flat.reshape(height, width, channels).mean(axis=2, dtype=np.float32)


def load_image(path) -> np.ndarray:
    """Read PGM/PPM (or PNG via the optional Pillow extra) to float [0, 1]."""
    path = Path(path)
    data = path.read_bytes()
    if data[:2] == b"P5":
        return _decode_pnm(data, 1)
    if data[:2] == b"P6":
        return _decode_pnm(data, 3)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        try:
            from PIL import Image
        except ImportError:
            raise ImageFormatError(
                "PNG input needs the optional Pillow dependency (pip install docstyle[png])"
            ) from None
        with Image.open(path) as im:
            arr = np.asarray(im.convert("F"), dtype=np.float32)
        return arr / 255.0
    raise ImageFormatError(f"unsupported image format in {path.name}")


def save_pgm(img: np.ndarray, path):
    """Quantize to 8 bits (round-half-even) and write binary P5."""
    img = np.asarray(img)
    if img.ndim != 2:
        raise ImageFormatError(f"PGM wants a 2-D image, got shape {img.shape}")
    q = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    h, w = q.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(q.tobytes())


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Separable bilinear resize with corner-aligned sampling.

    Source coordinate for output index i is i*(in-1)/(out-1); a single-pixel
    output axis samples coordinate 0. Matching extents return the pixels
    unchanged. Interpolation runs in float64; the result keeps the input's
    float dtype.
    """
    img = np.asarray(img)
    if img.ndim != 2:
        raise ImageFormatError(f"resize wants a 2-D image, got shape {img.shape}")
    in_h, in_w = img.shape
    if out_h < 1 or out_w < 1:
        raise ValueError("output extents must be positive")
    if (in_h, in_w) == (out_h, out_w):
        return img.copy()
    out_dtype = img.dtype if img.dtype.kind == "f" else np.float32
    work = img.astype(np.float64, copy=False)
    work = _resample_axis(work, out_h, axis=0)
    work = _resample_axis(work, out_w, axis=1)
    return np.clip(work, 0.0, 1.0).astype(out_dtype)


def _resample_axis(img: np.ndarray, out_n: int, axis: int) -> np.ndarray:
    in_n = img.shape[axis]
    if in_n == out_n:
        return img
    if out_n == 1:
        src = np.zeros(1)
    else:
        src = np.arange(out_n) * ((in_n - 1) / (out_n - 1))
    lo = np.floor(src).astype(np.int64)
    lo = np.minimum(lo, in_n - 1)
    hi = np.minimum(lo + 1, in_n - 1)
    frac = src - lo
    a = np.take(img, lo, axis=axis)
    b = np.take(img, hi, axis=axis)
    shape = [1, 1]
    shape[axis] = out_n
    frac = frac.reshape(shape)
    return a * (1.0 - frac) + b * frac


def to_frame(img: np.ndarray) -> np.ndarray:
    """Resize onto the 780x600 working frame."""
    return resize_bilinear(img, FRAME_H, FRAME_W)


def region_crops(img: np.ndarray) -> dict:
    """Raw frame crops per region, before any target resize."""
    frame = to_frame(img)
    out = {}
    for name in REGION_ORDER:
        r0, r1, c0, c1 = REGION_BOUNDS[name]
        out[name] = frame[r0:r1, c0:c1]
    return out


def extract_regions(img: np.ndarray, target: int) -> dict:
    """The five canonical regions, each resized to target x target.

    Order of the returned dict is the canonical region order: holistic,
    header, left_body, right_body, footer.
    """
    if target < 1:
        raise ValueError("target extent must be positive")
    crops = region_crops(img)
    return {name: resize_bilinear(crop, target, target) for name, crop in crops.items()}
