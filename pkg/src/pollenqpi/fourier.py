"""Single-shot Fourier-domain demodulation of off-axis holograms.

The hologram spectrum holds three lobes: the baseband ``|R|^2 + |O|^2`` term and
the two cross terms. With ``R ~ exp(+2j*pi*f.x)`` the object term ``R* O`` sits at
``-f`` and its twin ``R O*`` at ``+f``. The carrier estimate reports ``+f`` (the
reference tilt); demodulation filters around ``-f``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import ComplexField
from .holosim import Hologram, reference_field

DC_GUARD = 0.02  # cycles/pixel
DEFAULT_RADIUS_FRACTION = 0.6


class NoCarrierFound(RuntimeError):
    pass


class FilterError(ValueError):
    pass


@dataclass(frozen=True)
class CarrierEstimate:
    fx: float
    fy: float
    peak_magnitude: float = 0.0

    def __post_init__(self):
        if not 0 < np.hypot(self.fx, self.fy) < 0.5:
            raise FilterError(f"carrier ({self.fx:g}, {self.fy:g}) must lie strictly between DC and Nyquist")

    @property
    def distance(self) -> float:
        return float(np.hypot(self.fx, self.fy))


@dataclass(frozen=True)
class FourierFilterSpec:
    """Pass band around the object lobe. For ``gaussian`` the radius is the 1-sigma width."""

    center: CarrierEstimate
    radius: float
    shape: str = "circular"

    def __post_init__(self):
        if self.shape not in ("circular", "gaussian"):
            raise FilterError(f"unknown filter shape {self.shape!r}")
        if not self.radius > 0:
            raise FilterError("filter radius must be positive")
        if self.radius >= self.center.distance - DC_GUARD:
            raise FilterError(
                f"filter radius {self.radius:g} overlaps the DC guard "
                f"(carrier distance {self.center.distance:g})")


def default_filter(center: CarrierEstimate, fraction: float = DEFAULT_RADIUS_FRACTION,
                   shape: str = "circular") -> FourierFilterSpec:
    return FourierFilterSpec(center, fraction * center.distance, shape)


def _frequency_grid(shape):
    fy = np.fft.fftfreq(shape[0])
    fx = np.fft.fftfreq(shape[1])
    return np.meshgrid(fx, fy)


def detect_carrier(holo: Hologram) -> CarrierEstimate:
    """Strongest off-DC spectral bin in the half plane ``fx > 0`` (or ``fx == 0, fy > 0``)."""
    H = holo.intensity
    if not np.all(np.isfinite(H)):
        raise NoCarrierFound("hologram contains non-finite values")
    spec = np.abs(np.fft.fft2(H))
    FX, FY = _frequency_grid(H.shape)
    half = (FX > 0) | ((FX == 0) & (FY > 0))
    region = half & (np.hypot(FX, FY) > DC_GUARD)
    mags = spec[region]
    k = int(np.argmax(mags))
    peak = float(mags[k])
    # the DC-relative floor keeps round-off in a flat image from counting as a peak
    floor = max(3.0 * float(np.median(mags)), 1e-9 * float(spec[0, 0]))
    if not peak > floor:
        raise NoCarrierFound("no off-DC spectral peak above 3x the median magnitude")
    return CarrierEstimate(float(FX[region][k]), float(FY[region][k]), peak)


def carrier_from_reference(holo: Hologram) -> CarrierEstimate:
    fx, fy = holo.reference.carrier
    return CarrierEstimate(fx, fy)


def ft_reconstruct(holo: Hologram, filt: FourierFilterSpec | None = None) -> ComplexField:
    """Estimate ``O`` by isolating the ``R* O`` lobe and multiplying by ``R / |R|^2``.

    When ``filt`` is None the recorded reference carrier and the default filter are used.
    The recorded reference phase offset is honoured when the filter is centred on the
    recorded carrier; a detected carrier is demodulated with zero offset.
    """
    if filt is None:
        filt = default_filter(carrier_from_reference(holo))
    H = holo.intensity
    FX, FY = _frequency_grid(H.shape)
    c = filt.center
    d = np.hypot(FX + c.fx, FY + c.fy)
    if filt.shape == "circular":
        window = (d <= filt.radius).astype(float)
    else:
        window = np.exp(-0.5 * (d / filt.radius) ** 2)
    lobe = np.fft.ifft2(np.fft.fft2(H) * window)

    ref = holo.reference
    offset = ref.phase_offset if (c.fx, c.fy) == ref.carrier else 0.0
    x, y = holo.grid.coordinates()
    baseband = np.exp(1j * (2.0 * np.pi * (c.fx * x + c.fy * y) + offset))
    return ComplexField(holo.grid, lobe * baseband / ref.amplitude)


def known_reference(holo: Hologram) -> ComplexField:
    return reference_field(holo.reference, holo.grid)
