"""Filter-bank feature vector and z-score normalization."""

from dataclasses import dataclass

import numpy as np

from . import imaging
from .errors import DimensionError, ParameterError

# Concatenation order of the pooled blocks.  Part of the model file format.
BLOCK_ORDER = "C,M,G,A,E,D"
STD_FLOOR = 1e-12


def filter_bank(g, cfg=imaging.FilterConfig()):
    """Return the six images keyed by their letter: G, A, D, E, C, M."""
    g = imaging.check_gray(g)
    a = imaging.adaptive_threshold(g, cfg)
    return {
        "G": g,
        "A": a,
        "D": imaging.morph(a, "dilate", cfg),
        "E": imaging.morph(a, "erode", cfg),
        "C": imaging.canny(g, cfg),
        "M": imaging.binary_threshold(g, cfg.binary_offset),
    }


def feature_length(s):
    return 6 * s * s


def extract_features(g, cfg=imaging.FilterConfig(), s=3):
    """Pool each filtered image on an ``s x s`` grid and concatenate in ``BLOCK_ORDER``.

    Returns a float64 vector of length ``6 * s * s`` with entries in [0, 255].
    """
    g = imaging.check_gray(g)
    if not 1 <= s <= min(g.shape):
        raise ParameterError(f"grid side must be in [1, {min(g.shape)}], got {s}")
    images = filter_bank(g, cfg)
    return np.concatenate([imaging.average_pool(images[k], s).ravel() for k in BLOCK_ORDER.split(",")])


def extract_many(images, cfg=imaging.FilterConfig(), s=3):
    out = np.empty((len(images), feature_length(s)))
    for i, img in enumerate(images):
        out[i] = extract_features(img, cfg, s)
    return out


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise DimensionError("mean and std must be 1-D vectors of equal length")
        if np.any(self.std <= 0):
            raise ParameterError("std entries must be positive")

    def __len__(self):
        return self.mean.shape[0]

    def normalize(self, mu):
        mu = np.asarray(mu, dtype=np.float64)
        if mu.shape[-1] != len(self):
            raise DimensionError(f"feature length {mu.shape[-1]} != normalizer length {len(self)}")
        return (mu - self.mean) / self.std

    def denormalize(self, z):
        z = np.asarray(z, dtype=np.float64)
        if z.shape[-1] != len(self):
            raise DimensionError(f"feature length {z.shape[-1]} != normalizer length {len(self)}")
        return z * self.std + self.mean


def fit_normalizer(features):
    """Per-coordinate mean and population std; std below 1e-12 is replaced by 1."""
    try:
        x = np.asarray(features, dtype=np.float64)
    except ValueError:
        raise DimensionError("feature vectors have inconsistent lengths") from None
    if x.ndim != 2:
        raise DimensionError("expected a list of equal-length feature vectors")
    if x.shape[0] < 2:
        raise ParameterError("need at least two samples to fit a normalizer")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std < STD_FLOOR, 1.0, std)
    return Normalizer(mean, std)


def normalize(mu, n):
    return n.normalize(mu)
