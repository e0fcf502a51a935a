"""Per-patch magnetogram preprocessing.

Rasters are 2-D ``float64`` numpy arrays of line-of-sight flux in Gauss,
bitmaps are ``uint8`` arrays of SHARP codes, and the emitted image patch is a
square ``uint8`` array. The stages below are composed by :func:`process_patch`
in a fixed order::

    roi_extract -> size_gate -> clamp_flux -> pad_to_target
        -> (max-USFLUX window, if oversized) -> scale_to_bytes
"""
from dataclasses import dataclass, field
from datetime import datetime
from typing import TYPE_CHECKING, Optional

import numpy as np

from .errors import ContractViolation, EmptyRoiError, InvalidPairError, ParameterError
from .timeutil import parse_utc
from .window import select_max_usflux_window

if TYPE_CHECKING:
    from .dataset import FlareLabel

BITMAP_CODES = (0, 1, 2, 33, 34)
ROI_CODES = (33, 34)


@dataclass(frozen=True)
class PipelineConfig:
    clamp_cap: float = 256.0
    zero_band: float = 25.0
    min_roi_width: int = 70
    target_side: int = 512

    def __post_init__(self):
        if not self.clamp_cap > self.zero_band > 0:
            raise ParameterError(
                f"need clamp_cap > zero_band > 0, got {self.clamp_cap} and {self.zero_band}"
            )
        if self.min_roi_width < 1:
            raise ParameterError(f"min_roi_width must be >= 1, got {self.min_roi_width}")
        if self.target_side < 1:
            raise ParameterError(f"target_side must be >= 1, got {self.target_side}")


@dataclass(frozen=True)
class PatchMetadata:
    harp_id: int
    noaa_ar: Optional[int]
    observation_time: datetime
    center_longitude: float
    harp_onset_time: datetime

    def __post_init__(self):
        object.__setattr__(self, "observation_time", parse_utc(self.observation_time))
        object.__setattr__(self, "harp_onset_time", parse_utc(self.harp_onset_time))
        if self.harp_id < 1:
            raise ParameterError(f"harp_id must be positive, got {self.harp_id}")
        if self.noaa_ar is not None and self.noaa_ar < 1:
            raise ParameterError(f"noaa_ar must be positive, got {self.noaa_ar}")
        if not abs(self.center_longitude) <= 90:
            raise ParameterError(f"center_longitude {self.center_longitude} outside [-90, 90]")
        if self.harp_onset_time > self.observation_time:
            raise ParameterError("harp_onset_time is after observation_time")


@dataclass(frozen=True)
class Rejection:
    """Non-error outcome of :func:`process_patch` for a filtered patch."""

    stage: str
    reason: str = ""


def as_flux_raster(values):
    """Validate and copy ``values`` into a finite 2-D float64 raster."""
    raster = np.array(values, dtype=np.float64)
    if raster.ndim != 2 or raster.shape[0] < 1 or raster.shape[1] < 1:
        raise ContractViolation(f"flux raster must be a non-empty 2-D grid, got shape {raster.shape}")
    if not np.isfinite(raster).all():
        raise ContractViolation("flux raster holds NaN or infinite values")
    return raster


def as_bitmap(codes):
    bitmap = np.asarray(codes)
    if bitmap.ndim != 2 or bitmap.size == 0:
        raise ContractViolation(f"bitmap must be a non-empty 2-D grid, got shape {bitmap.shape}")
    if not np.isin(bitmap, BITMAP_CODES).all():
        bad = sorted(set(np.unique(bitmap).tolist()) - set(BITMAP_CODES))
        raise ContractViolation(f"bitmap holds invalid codes {bad}")
    return bitmap.astype(np.uint8)


def roi_extract(raster, bitmap):
    """Zero everything outside the AR bitmap and crop to its bounding box."""
    raster = as_flux_raster(raster)
    bitmap = as_bitmap(bitmap)
    if raster.shape != bitmap.shape:
        raise InvalidPairError(f"raster {raster.shape} and bitmap {bitmap.shape} differ in size")
    inside = np.isin(bitmap, ROI_CODES)
    if not inside.any():
        raise EmptyRoiError("bitmap has no pixel coded 33 or 34")
    rows = np.flatnonzero(inside.any(axis=1))
    cols = np.flatnonzero(inside.any(axis=0))
    masked = np.where(inside, raster, 0.0)
    return masked[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1].copy()


def size_gate(raster, config=PipelineConfig()):
    """True when the cropped ROI is wide enough to keep. Height is ignored."""
    return np.shape(raster)[1] >= config.min_roi_width


def clamp_flux(raster, config=PipelineConfig()):
    raster = np.asarray(raster, dtype=np.float64)
    out = np.clip(raster, -config.clamp_cap, config.clamp_cap)
    out[np.abs(raster) <= config.zero_band] = 0.0
    return out


def pad_to_target(raster, config=PipelineConfig()):
    """Zero-pad each short dimension to ``target_side``, centered.

    When the deficit is odd the extra row/column goes on the bottom/right.
    Dimensions already at or above the target are left alone.
    """
    raster = np.asarray(raster, dtype=np.float64)
    pads = []
    for n in raster.shape:
        deficit = max(config.target_side - n, 0)
        pads.append((deficit // 2, deficit - deficit // 2))
    if not any(a or b for a, b in pads):
        return raster.copy()
    return np.pad(raster, pads, mode="constant", constant_values=0.0)


def scale_to_bytes(raster, config=PipelineConfig()):
    """Map [-clamp_cap, +clamp_cap] linearly onto 0..255, rounding half up."""
    raster = np.asarray(raster, dtype=np.float64)
    side = config.target_side
    if raster.shape != (side, side):
        raise ContractViolation(f"expected a {side}x{side} raster, got {raster.shape}")
    cap = config.clamp_cap
    if np.abs(raster).max(initial=0.0) > cap:
        raise ContractViolation(f"raster values exceed +/-{cap} G; clamp first")
    scaled = np.floor((raster + cap) * 255.0 / (2.0 * cap) + 0.5)
    return scaled.astype(np.uint8)


def prepare_raster(raster, bitmap, config=PipelineConfig()):
    """Run every stage except the final byte scaling.

    Returns the square, clamped flux raster, or a :class:`Rejection`.
    Augmentations operate on this output.
    """
    roi = roi_extract(raster, bitmap)
    if not size_gate(roi, config):
        return Rejection(
            "size_gate", f"roi width {roi.shape[1]} < {config.min_roi_width}"
        )
    padded = pad_to_target(clamp_flux(roi, config), config)
    side = config.target_side
    if padded.shape != (side, side):
        win = select_max_usflux_window(padded, side)
        padded = padded[win.top:win.top + side, win.left:win.left + side]
    return np.ascontiguousarray(padded)


def process_patch(raster, bitmap, config=PipelineConfig()):
    """Turn one raster/bitmap pair into an image patch or a Rejection."""
    prepared = prepare_raster(raster, bitmap, config)
    if isinstance(prepared, Rejection):
        return prepared
    return scale_to_bytes(prepared, config)


@dataclass
class PatchRecord:
    """A raster with its bitmap, metadata and (once labeled) its label."""

    raster: np.ndarray
    bitmap: np.ndarray
    metadata: PatchMetadata
    label: Optional["FlareLabel"] = None
    provenance: str = field(default="original")
