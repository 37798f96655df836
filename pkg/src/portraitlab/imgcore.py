"""Raster decoding and the primitive signal operations feature extractors build on.

All pixel data is normalized to [0,1] floats at decode time; every operation
here is a pure function of its inputs.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

# deflate level for the complexity proxy; pinned so results are reproducible
_DEFLATE_LEVEL = 6


class DecodeError(ValueError):
    """Raised when an image file cannot be decoded."""


@dataclass(frozen=True)
class RasterImage:
    """Decoded RGB raster, channels normalized to [0,1], shape (h, w, 3)."""

    rgb: np.ndarray

    def __post_init__(self):
        a = self.rgb
        if a.ndim != 3 or a.shape[2] != 3:
            raise ValueError("rgb must have shape (h, w, 3)")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError("zero-dimension image")
        if a.min() < 0.0 or a.max() > 1.0:
            raise ValueError("channel values must lie in [0,1]")

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]


@dataclass(frozen=True)
class Plane:
    """Single-channel scalar map, shape (h, w)."""

    values: np.ndarray

    def __post_init__(self):
        a = self.values
        if a.ndim != 2:
            raise ValueError("plane values must be 2-D")
        if not np.all(np.isfinite(a)):
            raise ValueError("plane values must be finite")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class Histogram256:
    """256 non-negative counts plus their total."""

    bins: np.ndarray
    total: int

    def __post_init__(self):
        if self.bins.shape != (256,):
            raise ValueError("histogram must have 256 bins")
        if int(self.bins.sum()) != self.total:
            raise ValueError("total must equal the sum of the bins")


def decode_image(path: str) -> RasterImage:
    """Decode a PNG, PPM (P6) or baseline JPEG file into a normalized raster."""
    try:
        with Image.open(path) as im:
            if im.format not in ("PNG", "PPM", "JPEG"):
                raise DecodeError(f"unsupported format: {im.format}")
            im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.float64) / 255.0
    except DecodeError:
        raise
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise DecodeError(f"cannot decode {path}: {exc}") from exc
    if arr.size == 0:
        raise DecodeError(f"zero-dimension image: {path}")
    return RasterImage(rgb=arr)


def luminance(img: RasterImage) -> Plane:
    """Y channel (ITU-R 601 weights) of the raster, in [0,1]."""
    r, g, b = img.rgb[..., 0], img.rgb[..., 1], img.rgb[..., 2]
    return Plane(values=0.299 * r + 0.587 * g + 0.114 * b)


def rgb_to_hsv(img: RasterImage) -> tuple[Plane, Plane, Plane]:
    """Hexcone HSV conversion; hue of achromatic pixels is 0.

    H in [0,1), S and V in [0,1].
    """
    rgb = img.rgb
    v = rgb.max(axis=2)
    mn = rgb.min(axis=2)
    c = v - mn
    s = np.where(v > 0, c / np.where(v > 0, v, 1.0), 0.0)

    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    safe_c = np.where(c > 0, c, 1.0)
    h = np.zeros_like(v)
    m = (c > 0) & (v == r)
    h = np.where(m, ((g - b) / safe_c) % 6.0, h)
    m = (c > 0) & (v == g) & (v != r)
    h = np.where(m, (b - r) / safe_c + 2.0, h)
    m = (c > 0) & (v == b) & (v != r) & (v != g)
    h = np.where(m, (r - g) / safe_c + 4.0, h)
    h = (h / 6.0) % 1.0
    return Plane(values=h), Plane(values=s), Plane(values=v)


def convolve(p: Plane, kernel: np.ndarray) -> Plane:
    """2-D convolution with edge replication; kernel dimensions must be odd."""
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2 or kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
        raise ValueError("kernel dimensions must be odd")
    out = ndimage.convolve(p.values, kernel, mode="nearest")
    return Plane(values=out)


_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = _SOBEL_X.T


def sobel_gradients(p: Plane) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal and vertical Sobel responses with edge replication.

    Computed separably with explicit differences so constant planes give
    exactly zero.
    """
    pad = np.pad(p.values, 1, mode="edge")
    dx = pad[:, 2:] - pad[:, :-2]
    gx = dx[:-2] + 2.0 * dx[1:-1] + dx[2:]
    dy = pad[2:, :] - pad[:-2, :]
    gy = dy[:, :-2] + 2.0 * dy[:, 1:-1] + dy[:, 2:]
    return gx, gy


def sobel_magnitude(p: Plane) -> Plane:
    """Per-pixel sqrt(Gx^2 + Gy^2) with the standard 3x3 Sobel masks."""
    gx, gy = sobel_gradients(p)
    return Plane(values=np.sqrt(gx * gx + gy * gy))


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian with radius ceil(3*sigma)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(p: Plane, sigma: float) -> Plane:
    """Separable Gaussian blur, kernel radius ceil(3*sigma), edge replication."""
    k = gaussian_kernel1d(sigma)
    out = ndimage.correlate1d(p.values, k, axis=0, mode="nearest")
    out = ndimage.correlate1d(out, k, axis=1, mode="nearest")
    return Plane(values=out)


def resize_bilinear_array(a: np.ndarray, w: int, h: int) -> np.ndarray:
    """Bilinear resample of a 2-D or (h,w,c) array to (h, w)."""
    if w < 1 or h < 1:
        raise ValueError("target dimensions must be >= 1")
    in_h, in_w = a.shape[0], a.shape[1]
    if (in_h, in_w) == (h, w):
        return a.copy()
    # pixel-center mapping: src = (dst + 0.5) * in/out - 0.5, clamped
    sy = np.clip((np.arange(h) + 0.5) * in_h / h - 0.5, 0.0, in_h - 1.0)
    sx = np.clip((np.arange(w) + 0.5) * in_w / w - 0.5, 0.0, in_w - 1.0)
    y0 = np.floor(sy).astype(int)
    x0 = np.floor(sx).astype(int)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    fy = (sy - y0)[:, None]
    fx = (sx - x0)[None, :]
    if a.ndim == 3:
        fy = fy[..., None]
        fx = fx[..., None]
    top = a[y0][:, x0] * (1 - fx) + a[y0][:, x1] * fx
    bot = a[y1][:, x0] * (1 - fx) + a[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def resize_bilinear(obj, w: int, h: int):
    """Resize a RasterImage or Plane to w x h with bilinear interpolation."""
    if isinstance(obj, RasterImage):
        return RasterImage(rgb=np.clip(resize_bilinear_array(obj.rgb, w, h), 0.0, 1.0))
    if isinstance(obj, Plane):
        return Plane(values=resize_bilinear_array(obj.values, w, h))
    raise TypeError("expected RasterImage or Plane")


def fft_amplitude(p: Plane, size: int) -> Plane:
    """Amplitude spectrum |F(u,v)| of the plane, resized to size x size first."""
    if size < 1 or (size & (size - 1)) != 0:
        raise ValueError("size must be a power of two")
    a = resize_bilinear_array(p.values, size, size)
    return Plane(values=np.abs(np.fft.fft2(a)))


def histogram256(p: Plane) -> Histogram256:
    """Counts over 256 uniform bins on [0,1]; the top bin is closed."""
    idx = np.minimum((np.clip(p.values, 0.0, 1.0) * 256.0).astype(int), 255)
    bins = np.bincount(idx.ravel(), minlength=256).astype(np.int64)
    return Histogram256(bins=bins, total=int(bins.sum()))


def equalize_contrast(p: Plane) -> Plane:
    """Histogram equalization via the CDF of histogram256; output in [0,1]."""
    hist = histogram256(p)
    cdf = np.cumsum(hist.bins).astype(np.float64)
    cdf_min = cdf[cdf > 0][0]
    denom = hist.total - cdf_min
    if denom <= 0:
        # constant plane: degenerate CDF maps everything to a single level
        return Plane(values=np.zeros_like(p.values))
    levels = (cdf - cdf_min) / denom
    idx = np.minimum((np.clip(p.values, 0.0, 1.0) * 256.0).astype(int), 255)
    return Plane(values=levels[idx])


def median3(p: Plane) -> Plane:
    """3x3 median filter with edge replication."""
    return Plane(values=ndimage.median_filter(p.values, size=3, mode="nearest"))


def shannon_entropy(h: Histogram256) -> float:
    """Entropy in bits of the bin distribution, over nonzero bins."""
    if h.total == 0:
        return 0.0
    probs = h.bins[h.bins > 0] / h.total
    return float(-(probs * np.log2(probs)).sum())


def compression_ratio(p: Plane) -> float:
    """Deflate size of the 8-bit quantized plane over its raw size.

    A cheap Kolmogorov-complexity proxy: near 0 for constant planes,
    near 1 for incompressible noise.
    """
    q = np.minimum((np.clip(p.values, 0.0, 1.0) * 256.0).astype(int), 255)
    raw = q.astype(np.uint8).tobytes()
    return len(zlib.compress(raw, _DEFLATE_LEVEL)) / len(raw)
