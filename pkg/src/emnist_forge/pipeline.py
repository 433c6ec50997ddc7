"""Conversion of 128x128 binary glyph scans to 28x28 8-bit grayscale glyphs.

The stages, in order: Gaussian blur (sigma=1) to soften the binary edges, a
tight bounding box around the blurred ink, centering in a square frame with
an empty 2-pixel border, bicubic downsampling to 28x28, and affine scaling of
the resulting intensities to [0, 255].

Float intermediates are plain 2-D float64 arrays. Every stage is a pure
function with fixed-order summation, so identical input bits give identical
output bits; this is what makes per-glyph parallel conversion safe.

Conventions pinned for reproducibility:

* blur kernel truncated at radius ceil(3*sigma) and renormalized to sum 1,
  borders handled by zero extension;
* bicubic is the Catmull-Rom kernel (a = -0.5) with pixel-center alignment
  (source x = (i + 0.5) * scale - 0.5) and clamp-to-edge source indexing;
  negative overshoot is clamped at 0 before intensity scaling;
* fractional centering offsets floor toward the top-left;
* intensity scaling is affine on the per-image [min, max] with round-half-up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BlankGlyphError

BLUR_SIGMA = 1.0
FRAME_PAD = 2
TARGET_SIDE = 28


@dataclass(frozen=True)
class Rect:
    """Top-left corner plus extents, in pixels."""

    x: int
    y: int
    w: int
    h: int


@dataclass
class Glyph28:
    """A 28x28 8-bit grayscale glyph with its class label (0..61)."""

    pixels: np.ndarray  # (28, 28) uint8
    label: int


@dataclass
class ConversionStages:
    """Intermediates of one conversion, for debug dumps."""

    source: np.ndarray
    blurred: np.ndarray
    box: Rect
    roi: np.ndarray
    frame: np.ndarray
    resampled: np.ndarray
    final: np.ndarray


def gaussian_kernel(sigma: float) -> np.ndarray:
    """1-D Gaussian taps truncated at radius ceil(3*sigma), renormalized to sum 1."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = math.ceil(3 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float = BLUR_SIGMA) -> np.ndarray:
    """Separable Gaussian blur with zero-extended borders; output size == input size.

    The per-pixel accumulation order is fixed (tap 0 .. tap 2r), so translating
    the input translates the output bit-exactly away from the borders.
    """
    kernel = gaussian_kernel(sigma)
    radius = (len(kernel) - 1) // 2
    src = np.asarray(img, dtype=np.float64)

    def convolve_rows(a: np.ndarray) -> np.ndarray:
        h, w = a.shape
        padded = np.zeros((h, w + 2 * radius), dtype=np.float64)
        padded[:, radius : radius + w] = a
        out = np.zeros((h, w), dtype=np.float64)
        for j, tap in enumerate(kernel):
            out += tap * padded[:, j : j + w]
        return out

    blurred = convolve_rows(src)
    blurred = convolve_rows(blurred.T).T
    return blurred


def bounding_box(img: np.ndarray, threshold: float = 0.0) -> Rect:
    """Tightest rectangle containing all values strictly above ``threshold``."""
    mask = np.asarray(img) > threshold
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        raise BlankGlyphError(f"no values above threshold {threshold}")
    y0, y1 = int(rows[0]), int(rows[-1])
    x0, x1 = int(cols[0]), int(cols[-1])
    return Rect(x=x0, y=y0, w=x1 - x0 + 1, h=y1 - y0 + 1)


def center_square(roi: np.ndarray, pad: int = FRAME_PAD) -> np.ndarray:
    """Center ``roi`` in a zero square frame of side max(w, h) + 2*pad.

    Aspect ratio is preserved (no scaling happens here); fractional centering
    offsets floor toward the top-left.
    """
    if pad < 0:
        raise ValueError(f"pad must be >= 0, got {pad}")
    roi = np.asarray(roi, dtype=np.float64)
    h, w = roi.shape
    side = max(w, h) + 2 * pad
    frame = np.zeros((side, side), dtype=np.float64)
    ox = (side - w) // 2
    oy = (side - h) // 2
    frame[oy : oy + h, ox : ox + w] = roi
    return frame


def _catmull_rom(x: np.ndarray) -> np.ndarray:
    """Catmull-Rom cubic kernel (a = -0.5), exact 0 at |x| in {1, 2}."""
    a = -0.5
    ax = np.abs(x)
    near = ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0
    far = ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a
    out = np.where(ax <= 1.0, near, np.where(ax < 2.0, far, 0.0))
    return out


def _resample_matrix(src_len: int, dst_len: int) -> np.ndarray:
    """Dense (dst_len, src_len) bicubic weight matrix with clamp-to-edge taps."""
    scale = src_len / dst_len
    sx = (np.arange(dst_len, dtype=np.float64) + 0.5) * scale - 0.5
    base = np.floor(sx).astype(np.int64)
    mat = np.zeros((dst_len, src_len), dtype=np.float64)
    for offset in range(-1, 3):
        idx = base + offset
        weight = _catmull_rom(sx - idx)
        np.add.at(mat, (np.arange(dst_len), np.clip(idx, 0, src_len - 1)), weight)
    return mat


def downsample_bicubic(img: np.ndarray, target: int = TARGET_SIDE) -> np.ndarray:
    """Resample a square image to target x target with Catmull-Rom bicubic.

    Pixel-center alignment: output pixel i samples source coordinate
    (i + 0.5) * side / target - 0.5. Sampled values are clamped below at 0
    after the full 2-D resample, which matches direct per-pixel evaluation.
    """
    src = np.asarray(img, dtype=np.float64)
    h, w = src.shape
    if h != w:
        raise ValueError(f"expected a square image, got {h}x{w}")
    if target < 1:
        raise ValueError(f"target side must be >= 1, got {target}")
    mat = _resample_matrix(w, target)
    out = mat @ src @ mat.T
    return np.maximum(out, 0.0)


def scale_intensity(img: np.ndarray) -> np.ndarray:
    """Affine rescale of intensities to the 8-bit range, round-half-up.

    out = floor(255 * (v - min) / (max - min) + 0.5); the per-image minimum
    maps to 0 and the maximum to 255. A constant image has no contrast and
    raises BlankGlyphError.
    """
    src = np.asarray(img, dtype=np.float64)
    lo = src.min()
    hi = src.max()
    if hi == lo:
        raise BlankGlyphError("constant image has no intensity range to scale")
    scaled = np.floor(255.0 * (src - lo) / (hi - lo) + 0.5)
    return scaled.astype(np.uint8)


def convert_stages(pixels: np.ndarray, sigma: float = BLUR_SIGMA, pad: int = FRAME_PAD, target: int = TARGET_SIDE) -> ConversionStages:
    """Run the full conversion, keeping every intermediate stage."""
    source = np.asarray(pixels)
    blurred = gaussian_blur(source, sigma)
    box = bounding_box(blurred, 0.0)
    roi = blurred[box.y : box.y + box.h, box.x : box.x + box.w]
    frame = center_square(roi, pad)
    resampled = downsample_bicubic(frame, target)
    final = scale_intensity(resampled)
    return ConversionStages(
        source=source,
        blurred=blurred,
        box=box,
        roi=roi,
        frame=frame,
        resampled=resampled,
        final=final,
    )


def convert_glyph(pixels: np.ndarray, label: int) -> Glyph28:
    """Convert one 128x128 binary glyph to its 28x28 grayscale form.

    Raises BlankGlyphError for blank sources; such glyphs are excluded from
    datasets and recorded in the run ledger by the caller.
    """
    stages = convert_stages(pixels)
    return Glyph28(pixels=stages.final, label=label)
