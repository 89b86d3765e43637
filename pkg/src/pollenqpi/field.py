"""Complex fields, phase maps and the spectral helpers shared by every stage.

FFT convention: ``fft2`` is the unnormalized forward transform and ``ifft2``
carries the 1/N factor (numpy's default), so ``ifft2(fft2(f)) == f``.
Phase is always reported on the half-open interval [-pi, pi).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi


class FieldError(ValueError):
    """Raised for malformed grids, fields or phase maps."""


@dataclass(frozen=True)
class GridSpec:
    """Sampling geometry of a detector region.

    ``pixel_pitch`` and ``wavelength`` are in micrometers.
    """

    width: int
    height: int
    pixel_pitch: float = 0.25
    wavelength: float = 0.6328

    def __post_init__(self):
        if int(self.width) != self.width or int(self.height) != self.height:
            raise FieldError("grid dimensions must be integers")
        if self.width < 8 or self.height < 8:
            raise FieldError(f"grid must be at least 8x8, got {self.width}x{self.height}")
        if not self.pixel_pitch > 0:
            raise FieldError("pixel_pitch must be positive")
        if not self.wavelength > 0:
            raise FieldError("wavelength must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def coordinates(self):
        """Pixel coordinate arrays ``(x, y)`` of shape ``(height, width)``."""
        y, x = np.mgrid[0:self.height, 0:self.width]
        return x.astype(float), y.astype(float)

    def crop(self, width: int, height: int) -> "GridSpec":
        return GridSpec(width, height, self.pixel_pitch, self.wavelength)


def _frozen(values, dtype):
    arr = np.array(values, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Complex optical field sampled on ``grid``; values are immutable."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values, np.complex128)
        if vals.shape != self.grid.shape:
            raise FieldError(f"field shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise FieldError("field contains non-finite values")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True, eq=False)
class PhaseMap:
    """Phase in radians; ``wrapped`` maps live on [-pi, pi)."""

    grid: GridSpec
    values: np.ndarray
    wrapped: bool

    def __post_init__(self):
        vals = _frozen(self.values, np.float64)
        if vals.shape != self.grid.shape:
            raise FieldError(f"phase shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise FieldError("phase map contains non-finite values")
        if self.wrapped and (vals.min(initial=0.0) < -np.pi or vals.max(initial=0.0) >= np.pi):
            raise FieldError("wrapped phase map has values outside [-pi, pi)")
        object.__setattr__(self, "values", vals)


def _check_transformable(field: ComplexField):
    if not np.all(np.isfinite(field.values)):
        raise FieldError("cannot transform a field with non-finite values")


def fft2(field: ComplexField) -> ComplexField:
    """Unnormalized forward 2D DFT with the DC bin at index (0, 0)."""
    _check_transformable(field)
    return ComplexField(field.grid, np.fft.fft2(field.values))


def ifft2(field: ComplexField) -> ComplexField:
    """Inverse 2D DFT including the 1/N normalization."""
    _check_transformable(field)
    return ComplexField(field.grid, np.fft.ifft2(field.values))


def wrap(value):
    """Map radians onto [-pi, pi). Works on scalars and arrays."""
    value = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(value)):
        raise FieldError("cannot wrap non-finite values")
    out = np.mod(value + np.pi, TWO_PI) - np.pi
    # mod can round up to exactly 2*pi for tiny negative inputs
    out = np.where(out >= np.pi, out - TWO_PI, out)
    return out if out.ndim else float(out)


def phase_of(field: ComplexField) -> PhaseMap:
    """Four-quadrant phase of each pixel; 0 + 0j maps to 0."""
    vals = field.values
    phase = np.arctan2(vals.imag, vals.real)
    # arctan2 returns +pi on the negative real axis; fold it into [-pi, pi)
    phase[phase >= np.pi] = -np.pi
    phase[vals == 0] = 0.0
    return PhaseMap(field.grid, phase, wrapped=True)


def amplitude_of(field: ComplexField) -> np.ndarray:
    return np.abs(field.values)
