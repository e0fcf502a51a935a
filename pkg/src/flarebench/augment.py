"""The five FL-class augmentations, applied to clamped flux rasters.

Order follows the figure panels (b) through (f): polarity inversion,
Gaussian blur, horizontal flip, vertical flip, bounded uniform noise.
"""
import enum
import math
from dataclasses import replace

import numpy as np

from .errors import MisuseError, ParameterError
from .raster import PipelineConfig

BLUR_SIGMA = 1.0
NOISE_AMPLITUDE = 25.0


class AugmentationKind(enum.Enum):
    POLARITY_INVERSION = "polarity_inversion"
    GAUSSIAN_BLUR = "gaussian_blur"
    FLIP_HORIZONTAL = "flip_horizontal"
    FLIP_VERTICAL = "flip_vertical"
    BOUNDED_NOISE = "bounded_noise"


def invert_polarity(raster):
    return -np.asarray(raster, dtype=np.float64)


def flip_horizontal(raster):
    """Mirror about the vertical axis (reverse each row)."""
    return np.asarray(raster, dtype=np.float64)[:, ::-1].copy()


def flip_vertical(raster):
    """Mirror about the horizontal axis (reverse row order)."""
    return np.asarray(raster, dtype=np.float64)[::-1, :].copy()


def gaussian_kernel(sigma):
    """Normalized 1-D kernel of radius ``ceil(3 * sigma)``."""
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    radius = math.ceil(3 * sigma)
    d = np.arange(-radius, radius + 1, dtype=np.float64)
    weights = np.exp(-(d * d) / (2.0 * sigma * sigma))
    return weights / weights.sum()


def _convolve_axis(data, kernel, axis):
    radius = len(kernel) // 2
    pads = [(0, 0), (0, 0)]
    pads[axis] = (radius, radius)
    # numpy "reflect" mirrors about the edge pixel without repeating it
    padded = np.pad(data, pads, mode="reflect") if data.shape[axis] > 1 else np.pad(data, pads, mode="edge")
    n = data.shape[axis]
    out = np.zeros_like(data)
    for k, w in enumerate(kernel):
        out += w * (padded[k:k + n, :] if axis == 0 else padded[:, k:k + n])
    return out


def gaussian_blur(raster, sigma=BLUR_SIGMA):
    """Separable Gaussian blur with mirrored borders."""
    kernel = gaussian_kernel(sigma)
    data = np.asarray(raster, dtype=np.float64)
    return _convolve_axis(_convolve_axis(data, kernel, 0), kernel, 1)


def add_bounded_noise(raster, amplitude=NOISE_AMPLITUDE, seed=0, config=PipelineConfig()):
    """Add uniform noise in [-amplitude, +amplitude] and re-cap to the clamp.

    The zero band is deliberately not re-applied.
    """
    if not amplitude > 0:
        raise ParameterError(f"amplitude must be positive, got {amplitude}")
    data = np.asarray(raster, dtype=np.float64)
    rng = np.random.default_rng(seed)
    noisy = data + rng.uniform(-amplitude, amplitude, size=data.shape)
    return np.clip(noisy, -config.clamp_cap, config.clamp_cap)


def derive_seed(seed, harp_id, observation_time):
    """Stable per-record seed from the run seed and the record identity."""
    stamp = int(observation_time.timestamp())
    return int(np.random.SeedSequence([int(seed), int(harp_id), stamp]).generate_state(1)[0])


def augment_raster(raster, kind, seed=0, config=PipelineConfig()):
    kind = AugmentationKind(kind)
    if kind is AugmentationKind.POLARITY_INVERSION:
        return invert_polarity(raster)
    if kind is AugmentationKind.GAUSSIAN_BLUR:
        return gaussian_blur(raster, BLUR_SIGMA)
    if kind is AugmentationKind.FLIP_HORIZONTAL:
        return flip_horizontal(raster)
    if kind is AugmentationKind.FLIP_VERTICAL:
        return flip_vertical(raster)
    return add_bounded_noise(raster, NOISE_AMPLITUDE, seed, config)


def expand_fl_record(record, seed, config=PipelineConfig()):
    """Return the five augmented variants of an FL record, in panel order.

    Raster bitmaps are flipped together with their rasters so the pair stays
    co-registered.
    """
    label = getattr(record.label, "label", record.label)
    if label != "FL":
        raise MisuseError(f"only FL records are augmented, got label {label!r}")
    meta = record.metadata
    noise_seed = derive_seed(seed, meta.harp_id, meta.observation_time)
    variants = []
    for kind in AugmentationKind:
        bitmap = record.bitmap
        if kind is AugmentationKind.FLIP_HORIZONTAL:
            bitmap = bitmap[:, ::-1].copy()
        elif kind is AugmentationKind.FLIP_VERTICAL:
            bitmap = bitmap[::-1, :].copy()
        variants.append(
            replace(
                record,
                raster=augment_raster(record.raster, kind, noise_seed, config),
                bitmap=bitmap,
                provenance=kind.value,
            )
        )
    return variants
