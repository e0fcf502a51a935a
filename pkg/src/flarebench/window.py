"""Max-USFLUX square window search over a summed-area table.

USFLUX is the sum of absolute flux over a region. Every ``side x side``
window of a raster is scored in O(1) from an inclusive summed-area table,
so the exhaustive stride-1 search costs O(H*W).
"""
from dataclasses import dataclass

import numpy as np

from .errors import BoundsError, ParameterError, WindowTooSmallError

# Windows whose SAT sums differ by less than this (relative to the raster's
# total unsigned flux) are treated as tied, so tie-breaking stays in
# raster-scan order despite cancellation error in the table differences.
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class SummedAreaTable:
    """``cumulative[i, j]`` is the sum of ``|flux|`` over rows <= i, cols <= j."""

    cumulative: np.ndarray

    @property
    def height(self):
        return self.cumulative.shape[0]

    @property
    def width(self):
        return self.cumulative.shape[1]

    @property
    def total(self):
        return float(self.cumulative[-1, -1])

    def padded(self):
        """The table with a leading zero row and column."""
        return np.pad(self.cumulative, ((1, 0), (1, 0)))


@dataclass(frozen=True)
class WindowSelection:
    top: int
    left: int
    side: int
    usflux: float


def build_unsigned_sat(raster):
    magnitudes = np.abs(np.asarray(raster, dtype=np.float64))
    if magnitudes.ndim != 2 or magnitudes.size == 0:
        raise ParameterError(f"expected a non-empty 2-D raster, got shape {magnitudes.shape}")
    return SummedAreaTable(magnitudes.cumsum(axis=0).cumsum(axis=1))


def window_sum(sat, top, left, side):
    if side < 1 or top < 0 or left < 0 or top + side > sat.height or left + side > sat.width:
        raise BoundsError(
            f"window (top={top}, left={left}, side={side}) outside {sat.height}x{sat.width} table"
        )
    c = sat.cumulative
    bottom, right = top + side - 1, left + side - 1
    total = c[bottom, right]
    if top > 0:
        total -= c[top - 1, right]
    if left > 0:
        total -= c[bottom, left - 1]
    if top > 0 and left > 0:
        total += c[top - 1, left - 1]
    return float(total)


def all_window_sums(sat, side):
    """Array of USFLUX for every window, indexed ``[top, left]``."""
    p = sat.padded()
    return p[side:, side:] - p[:-side, side:] - p[side:, :-side] + p[:-side, :-side]


def select_max_usflux_window(raster, side):
    """Find the ``side x side`` window with the largest unsigned flux.

    Ties go to the smallest ``top``, then the smallest ``left``.
    """
    raster = np.asarray(raster, dtype=np.float64)
    if side < 1:
        raise ParameterError(f"side must be >= 1, got {side}")
    if raster.ndim != 2 or raster.shape[0] < side or raster.shape[1] < side:
        raise WindowTooSmallError(
            f"raster {raster.shape} is smaller than a {side}x{side} kernel; pad it first"
        )
    sat = build_unsigned_sat(raster)
    sums = all_window_sums(sat, side)
    best = sums.max()
    tied = sums >= best - TIE_RTOL * sat.total
    flat = int(np.argmax(tied))
    top, left = divmod(flat, sums.shape[1])
    return WindowSelection(top, left, side, max(float(sums[top, left]), 0.0))
