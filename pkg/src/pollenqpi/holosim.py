"""Off-axis image-plane hologram simulator for pollen-like phase objects."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.ndimage import gaussian_filter

from .field import ComplexField, FieldError, GridSpec, PhaseMap

DEFAULT_CARRIER = (0.125, 0.0625)
VIABLE_PEAK_PHASE = 9.0
NONVIABLE_PEAK_PHASE = 3.9


class SimulationError(ValueError):
    pass


class Profile(str, enum.Enum):
    HEMISPHERE = "hemisphere"
    PLATEAU = "plateau"


@dataclass(frozen=True)
class PollenPhantom:
    """Parametric grain: a hemispherical (viable) or flat-topped (non-viable) phase bump.

    ``center`` is ``(x, y)`` in pixels, ``radius`` and ``rim_softness`` in pixels,
    ``peak_phase`` in radians.
    """

    profile: Profile = Profile.HEMISPHERE
    center: tuple[float, float] | None = None
    radius: float = 100.0
    peak_phase: float = VIABLE_PEAK_PHASE
    amplitude_inside: float = 1.0
    rim_softness: float = 1.5

    def __post_init__(self):
        object.__setattr__(self, "profile", Profile(self.profile))
        if not self.radius > 0:
            raise SimulationError("phantom radius must be positive")
        if self.peak_phase < 0:
            raise SimulationError("peak_phase must be non-negative")
        if not 0 < self.amplitude_inside <= 1:
            raise SimulationError("amplitude_inside must lie in (0, 1]")
        if self.rim_softness < 0:
            raise SimulationError("rim_softness must be non-negative")

    def centered(self, grid: GridSpec) -> tuple[float, float]:
        if self.center is not None:
            return (float(self.center[0]), float(self.center[1]))
        return ((grid.width - 1) / 2.0, (grid.height - 1) / 2.0)

    def check_fits(self, grid: GridSpec):
        cx, cy = self.centered(grid)
        reach = self.radius + 3.0 * self.rim_softness
        if cx - reach < 0 or cy - reach < 0 or cx + reach > grid.width - 1 or cy + reach > grid.height - 1:
            raise SimulationError(
                f"phantom at ({cx:g}, {cy:g}) with radius {self.radius:g} does not fit "
                f"inside a {grid.width}x{grid.height} grid")

    def support(self, grid: GridSpec) -> np.ndarray:
        """Boolean generating disc."""
        x, y = grid.coordinates()
        cx, cy = self.centered(grid)
        return np.hypot(x - cx, y - cy) <= self.radius


@dataclass(frozen=True)
class ReferenceWave:
    """Tilted plane reference; carrier in cycles per pixel."""

    carrier: tuple[float, float] = DEFAULT_CARRIER
    amplitude: float = 1.0
    phase_offset: float = 0.0

    def __post_init__(self):
        fx, fy = self.carrier
        object.__setattr__(self, "carrier", (float(fx), float(fy)))
        f = np.hypot(fx, fy)
        if not 0 < f < 0.5:
            raise SimulationError(f"carrier magnitude {f:g} must lie in (0, 0.5) cycles/pixel")
        if not self.amplitude > 0:
            raise SimulationError("reference amplitude must be positive")


@dataclass(frozen=True)
class SensorModel:
    """Detector model.

    noise_sigma
        Standard deviation of additive Gaussian noise as a fraction of the peak
        noiseless intensity.
    bit_depth
        0 keeps continuous values; 8..16 quantizes onto ``2**bit_depth - 1`` levels
        spanning [0, full scale].
    quantum_floor
        Readings below ``quantum_floor * peak intensity`` are lifted to that floor.
    """

    noise_sigma: float = 0.0
    bit_depth: int = 0
    quantum_floor: float = 0.0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise SimulationError("noise_sigma must be non-negative")
        if self.bit_depth != 0 and not 8 <= self.bit_depth <= 16:
            raise SimulationError("bit_depth must be 0 or between 8 and 16")
        if self.quantum_floor < 0:
            raise SimulationError("quantum_floor must be non-negative")


@dataclass(frozen=True, eq=False)
class Hologram:
    grid: GridSpec
    intensity: np.ndarray
    reference: ReferenceWave
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.array(self.intensity, dtype=np.float64, copy=True)
        if vals.shape != self.grid.shape:
            raise FieldError(f"hologram shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise FieldError("hologram contains non-finite values")
        if vals.min() < 0:
            raise FieldError("hologram intensity must be non-negative")
        vals.flags.writeable = False
        object.__setattr__(self, "intensity", vals)

    def scaled(self, factor: float) -> "Hologram":
        return Hologram(self.grid, self.intensity * factor, self.reference, dict(self.metadata))


def _unit_profile(phantom: PollenPhantom, grid: GridSpec) -> np.ndarray:
    x, y = grid.coordinates()
    cx, cy = phantom.centered(grid)
    r = np.hypot(x - cx, y - cy) / phantom.radius
    if phantom.profile is Profile.HEMISPHERE:
        prof = np.sqrt(np.clip(1.0 - r * r, 0.0, None))
    else:
        prof = (r <= 1.0).astype(float)
    if phantom.rim_softness > 0:
        prof = gaussian_filter(prof, phantom.rim_softness, mode="constant", truncate=4.0)
        # the Gaussian tail is cut at 4 sigma so the far background stays exactly 0
        prof[prof < 1e-12] = 0.0
    return prof


def phantom_phase(phantom: PollenPhantom, grid: GridSpec) -> PhaseMap:
    """Unwrapped ground-truth phase of ``phantom`` on ``grid``.

    Hemisphere: ``peak * sqrt(1 - (r/radius)^2)`` inside the disc; plateau: ``peak``
    inside the disc. Either is then blurred by a Gaussian of width ``rim_softness``.
    """
    phantom.check_fits(grid)
    return PhaseMap(grid, phantom.peak_phase * _unit_profile(phantom, grid), wrapped=False)


def object_field(phase: PhaseMap, amplitude_inside: float = 1.0, mask=None) -> ComplexField:
    """Pure-phase transmission with amplitude ``amplitude_inside`` on ``mask`` and 1 elsewhere."""
    if phase.wrapped:
        raise SimulationError("object_field expects an unwrapped phase map")
    amp = np.ones(phase.grid.shape)
    if mask is not None:
        amp[np.asarray(mask, dtype=bool)] = amplitude_inside
    else:
        amp[:] = amplitude_inside
    return ComplexField(phase.grid, amp * np.exp(1j * phase.values))


def reference_field(ref: ReferenceWave, grid: GridSpec) -> ComplexField:
    x, y = grid.coordinates()
    fx, fy = ref.carrier
    arg = 2.0 * np.pi * (fx * x + fy * y) + ref.phase_offset
    return ComplexField(grid, ref.amplitude * np.exp(1j * arg))


def record_hologram(obj: ComplexField, ref: ReferenceWave, sensor: SensorModel | None = None,
                    seed: int = 0, metadata: dict | None = None) -> Hologram:
    """Record ``|R + O|^2`` through ``sensor``; bit-identical for a fixed seed."""
    sensor = sensor or SensorModel()
    grid = obj.grid
    R = reference_field(ref, grid).values
    clean = np.abs(R + obj.values) ** 2
    peak = float(clean.max())
    H = clean
    if sensor.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        H = H + rng.normal(0.0, sensor.noise_sigma * peak, size=H.shape)
    H = np.clip(H, sensor.quantum_floor * peak, None)
    meta = dict(metadata or {})
    meta["seed"] = int(seed)
    if sensor.bit_depth:
        levels = 2 ** sensor.bit_depth - 1
        # full scale leaves headroom for noise above the clean peak
        full_scale = peak * (1.0 + 4.0 * sensor.noise_sigma) if peak > 0 else 1.0
        codes = np.clip(np.round(H / full_scale * levels), 0, levels)
        H = codes * (full_scale / levels)
        meta["intensity_scale"] = full_scale / levels
    meta["bit_depth"] = sensor.bit_depth
    meta["noise_sigma"] = sensor.noise_sigma
    return Hologram(grid, H, ref, meta)


def simulate_phantom(phantom: PollenPhantom, grid: GridSpec, ref: ReferenceWave | None = None,
                     sensor: SensorModel | None = None, seed: int = 0):
    """Convenience wrapper returning ``(hologram, truth_phase, object_field)``."""
    ref = ref or ReferenceWave()
    truth = phantom_phase(phantom, grid)
    obj = object_field(truth, phantom.amplitude_inside, phantom.support(grid))
    holo = record_hologram(obj, ref, sensor, seed, phantom_metadata(phantom, grid))
    return holo, truth, obj


def phantom_metadata(phantom: PollenPhantom, grid: GridSpec) -> dict:
    cx, cy = phantom.centered(grid)
    return {
        "profile": phantom.profile.value,
        "center_x": cx,
        "center_y": cy,
        "radius": phantom.radius,
        "peak_phase": phantom.peak_phase,
        "amplitude_inside": phantom.amplitude_inside,
        "rim_softness": phantom.rim_softness,
    }


def mean_to_peak_factor(phantom: PollenPhantom, grid: GridSpec) -> float:
    """Mean phase the feature extractor reports for a unit-peak copy of ``phantom``.

    Segmentation of a noiseless map is scale invariant, so ``peak = target / factor``
    produces a grain whose measured mean phase equals ``target``.
    """
    from .features import mean_phase, segment  # deferred: features imports field only

    unit = phantom_phase(replace(phantom, peak_phase=1.0), grid)
    return mean_phase(unit, segment(unit))


def phantom_for_mean(target_mean: float, profile=Profile.HEMISPHERE, grid: GridSpec | None = None,
                     **kwargs) -> PollenPhantom:
    """Phantom whose measured mean phase equals ``target_mean``."""
    grid = grid or GridSpec(512, 512)
    base = PollenPhantom(profile=profile, peak_phase=1.0, **kwargs)
    if target_mean <= 0:
        return replace(base, peak_phase=0.0)
    return replace(base, peak_phase=target_mean / mean_to_peak_factor(base, grid))


# per-class generative parameters (mean phase, std, count)
CLASS_PARAMS = {
    "nonviable": (3.90, 1.24, 256),
    "viable": (9.01, 2.17, 252),
}


@dataclass(frozen=True)
class PopulationSpec:
    n_viable: int = CLASS_PARAMS["viable"][2]
    n_nonviable: int = CLASS_PARAMS["nonviable"][2]
    viable_mean: float = CLASS_PARAMS["viable"][0]
    viable_std: float = CLASS_PARAMS["viable"][1]
    nonviable_mean: float = CLASS_PARAMS["nonviable"][0]
    nonviable_std: float = CLASS_PARAMS["nonviable"][1]
    radius_min: float = 80.0
    radius_max: float = 95.0
    center_jitter: float = 10.0
    rim_softness: float = 6.0  # keeps rim slopes inside the Fourier passband
    amplitude_inside: float = 1.0

    def __post_init__(self):
        if self.n_viable < 0 or self.n_nonviable < 0 or self.n_viable + self.n_nonviable == 0:
            raise SimulationError("population must contain at least one grain")
        if not 0 < self.radius_min <= self.radius_max:
            raise SimulationError("need 0 < radius_min <= radius_max")
        if self.viable_std < 0 or self.nonviable_std < 0 or self.center_jitter < 0:
            raise SimulationError("spreads must be non-negative")


@dataclass(frozen=True)
class GrainSpec:
    grain_id: str
    label: str
    target_mean: float
    phantom: PollenPhantom
    noise_seed: int


def _truncated_normal(rng, mu, sigma):
    if sigma == 0:
        return max(mu, 0.0)
    for _ in range(1000):
        v = rng.normal(mu, sigma)
        if v >= 0:
            return v
    return 0.0


def draw_population(spec: PopulationSpec, grid: GridSpec, seed: int) -> list[GrainSpec]:
    """Seed-deterministic list of grains with the per-class mean-phase statistics.

    Each grain's *mean phase* is drawn from its class Gaussian (truncated at 0) and
    the peak phase is solved for via :func:`mean_to_peak_factor`.
    """
    rng = np.random.default_rng(seed)
    labels = ["nonviable"] * spec.n_nonviable + ["viable"] * spec.n_viable
    labels = [labels[i] for i in rng.permutation(len(labels))]
    noise_seeds = np.random.SeedSequence(seed).generate_state(len(labels))
    grains = []
    for i, label in enumerate(labels):
        if label == "viable":
            mu, sigma, profile = spec.viable_mean, spec.viable_std, Profile.HEMISPHERE
        else:
            mu, sigma, profile = spec.nonviable_mean, spec.nonviable_std, Profile.PLATEAU
        target = _truncated_normal(rng, mu, sigma)
        radius = rng.uniform(spec.radius_min, spec.radius_max)
        jx, jy = rng.uniform(-spec.center_jitter, spec.center_jitter, size=2)
        center = ((grid.width - 1) / 2.0 + jx, (grid.height - 1) / 2.0 + jy)
        phantom = phantom_for_mean(target, profile, grid, center=center, radius=radius,
                                   amplitude_inside=spec.amplitude_inside,
                                   rim_softness=spec.rim_softness)
        phantom.check_fits(grid)
        grains.append(GrainSpec(f"grain_{i:04d}", label, target, phantom, int(noise_seeds[i])))
    return grains
