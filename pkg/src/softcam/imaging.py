"""Grayscale filters and average pooling.

Images are plain ``numpy.uint8`` arrays of shape ``(height, width)``.  Every
windowed filter replicates the edge pixels at the border.  All outputs of
the thresholding, edge and morphology filters are binary: only 0 and 255.
"""

from dataclasses import asdict, dataclass
from math import comb

import numpy as np

from . import _kernels
from .errors import DimensionError, ParameterError

# Fixed-point scale for the Gaussian window of the adaptive threshold.
GAUSS_WEIGHT_SCALE = 1 << 16


@dataclass(frozen=True)
class FilterConfig:
    adaptive_block_size: int = 57
    adaptive_c: float = 2.0
    adaptive_max_value: int = 255
    binary_offset: float = 100.0
    canny_low: float = 100.0
    canny_high: float = 130.0
    canny_kernel: int = 3
    morph_kernel: int = 5

    def __post_init__(self):
        for name in ("adaptive_block_size", "canny_kernel"):
            v = getattr(self, name)
            if v < 3 or v % 2 == 0:
                raise ParameterError(f"{name} must be odd and >= 3, got {v}")
        if self.canny_kernel > 7:
            raise ParameterError(f"canny_kernel must be 3, 5 or 7, got {self.canny_kernel}")
        if self.canny_low > self.canny_high:
            raise ParameterError("canny_low must not exceed canny_high")
        if self.morph_kernel < 1:
            raise ParameterError("morph_kernel must be positive")
        if not 0 <= self.adaptive_max_value <= 255:
            raise ParameterError("adaptive_max_value must be an 8-bit intensity")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def check_gray(img):
    img = np.asarray(img)
    if img.ndim != 2:
        raise DimensionError(f"expected a 2-D grayscale image, got shape {img.shape}")
    if img.dtype != np.uint8:
        raise DimensionError(f"expected uint8 pixels, got {img.dtype}")
    return img


def to_grayscale(rgb):
    """BT.601 luma, rounded half up: ``(299 R + 587 G + 114 B + 500) // 1000``."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise DimensionError(f"expected an (H, W, 3) raster, got shape {rgb.shape}")
    if rgb.dtype != np.uint8:
        raise DimensionError(f"expected 8-bit channels, got {rgb.dtype}")
    c = rgb.astype(np.int32)
    luma = (299 * c[..., 0] + 587 * c[..., 1] + 114 * c[..., 2] + 500) // 1000
    return np.clip(luma, 0, 255).astype(np.uint8)


def gaussian_window(block_size):
    """Integer 1-D Gaussian weights for an adaptive-threshold window.

    sigma follows ``0.3 * ((block_size - 1) * 0.5 - 1) + 0.8``.  The weights are
    the normalized Gaussian scaled by 2**16 and rounded, so the 2-D window is
    their outer product with total ``sum(w) ** 2``.
    """
    if block_size < 3 or block_size % 2 == 0:
        raise ParameterError(f"block size must be odd and >= 3, got {block_size}")
    sigma = 0.3 * ((block_size - 1) * 0.5 - 1) + 0.8
    r = block_size // 2
    t = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(t * t) / (2.0 * sigma * sigma))
    return np.round(g / g.sum() * GAUSS_WEIGHT_SCALE).astype(np.int64)


def adaptive_threshold(g, cfg=FilterConfig()):
    """Gaussian adaptive threshold (binary).

    A pixel becomes ``cfg.adaptive_max_value`` when it is strictly brighter
    than the Gaussian-weighted local mean minus ``cfg.adaptive_c``.
    """
    g = check_gray(g)
    w = gaussian_window(cfg.adaptive_block_size)
    if 255 * int(w.sum()) >= 1 << 24:
        raise ParameterError("Gaussian window weights too large for an exact row pass")
    norm = float(w.sum()) ** 2
    return _kernels.adaptive_u8(g, w.astype(np.float32), w.astype(np.float64), norm,
                                float(cfg.adaptive_c) * norm, np.uint8(cfg.adaptive_max_value))


def binary_threshold(g, offset=100.0):
    """Pixels strictly above ``mean(g) + offset`` become 255, the rest 0."""
    g = check_gray(g)
    return _kernels.binary_u8(g, float(offset))


def sobel_kernels(ksize):
    """Return ``(smooth, deriv)`` integer 1-D Sobel factors of odd length ``ksize``."""
    smooth = np.array([comb(ksize - 1, i) for i in range(ksize)], dtype=np.int64)
    base = np.array([comb(ksize - 3, i) for i in range(ksize - 2)], dtype=np.int64)
    deriv = np.convolve(base, [1, 0, -1])[::-1]
    return smooth, deriv


def sobel(g, ksize=3):
    """Integer Sobel gradients ``(gx, gy)`` as int32 arrays, edge-replicated."""
    g = check_gray(g)
    smooth, deriv = sobel_kernels(ksize)
    return _kernels.sobel_u8(g, smooth.astype(np.int32), deriv.astype(np.int32))


def canny(g, cfg=FilterConfig()):
    """Canny edges: Sobel gradients, 4-sector non-maximum suppression and
    8-connected double-threshold hysteresis on the L2 gradient magnitude.

    Along the gradient direction a pixel must be strictly greater than the
    preceding neighbor and at least equal to the following one, which keeps
    exactly one pixel of a two-pixel-wide plateau.  Neighbors outside the
    image count as zero magnitude.
    """
    g = check_gray(g)
    k = cfg.canny_kernel
    if g.shape[0] < k or g.shape[1] < k:
        raise DimensionError(f"image {g.shape} smaller than the {k}x{k} Sobel kernel")
    gx, gy = sobel(g, k)
    low2 = float(cfg.canny_low) ** 2
    high2 = float(cfg.canny_high) ** 2
    return _kernels.canny_core(gx, gy, low2, high2)


def morph(a, mode, cfg=FilterConfig()):
    """Square-kernel dilation (local max) or erosion (local min)."""
    a = check_gray(a)
    if mode == "dilate":
        op = np.maximum
    elif mode == "erode":
        op = np.minimum
    else:
        raise ParameterError(f"mode must be 'dilate' or 'erode', got {mode!r}")
    k = cfg.morph_kernel
    r = k // 2
    # even kernels anchor like odd ones one size up, minus the last row/column
    lo, hi = r, k - 1 - r
    h, w = a.shape
    p = np.pad(a, ((0, 0), (lo, hi)), mode="edge")
    out = p[:, 0:w].copy()
    for t in range(1, k):
        op(out, p[:, t:t + w], out=out)
    p = np.pad(out, ((lo, hi), (0, 0)), mode="edge")
    out = p[0:h].copy()
    for t in range(1, k):
        op(out, p[t:t + h], out=out)
    return out


def dilate(a, cfg=FilterConfig()):
    return morph(a, "dilate", cfg)


def erode(a, cfg=FilterConfig()):
    return morph(a, "erode", cfg)


def pool_bounds(n, s):
    """Floor-partition ``[0, n)`` into ``s`` contiguous cells; returns ``s + 1`` edges."""
    return np.array([(i * n) // s for i in range(s + 1)], dtype=np.int64)


def average_pool(img, s):
    """Mean intensity over an ``s x s`` grid; returns a float64 ``(s, s)`` array.

    Cell ``(i, j)`` covers rows ``[i*H//s, (i+1)*H//s)`` and columns
    ``[j*W//s, (j+1)*W//s)``.
    """
    img = check_gray(img)
    h, w = img.shape
    if not 1 <= s <= min(h, w):
        raise ParameterError(f"grid side must be in [1, {min(h, w)}], got {s}")
    rb = pool_bounds(h, s)
    cb = pool_bounds(w, s)
    areas = np.outer(np.diff(rb), np.diff(cb))
    return _kernels.pool_sums(img, rb, cb) / areas
