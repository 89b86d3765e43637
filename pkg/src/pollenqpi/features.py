"""Per-grain phase features, viability calls and population statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage as ndi
from scipy import stats
from skimage.filters import threshold_otsu

from .field import GridSpec, PhaseMap
from .unwrap import border_frame

NONVIABLE_MEAN = 3.90
VIABLE_MEAN = 9.01
DEFAULT_THRESHOLD = 0.5 * (NONVIABLE_MEAN + VIABLE_MEAN)  # 6.455 rad
LABELS = ("viable", "nonviable", "unknown")

_FOUR = ndi.generate_binary_structure(2, 1)


class NoGrainFound(ValueError):
    pass


class StatsError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PollenMask:
    grid: GridSpec
    membership: np.ndarray
    area_px: int
    perimeter_px: int

    @classmethod
    def from_membership(cls, grid: GridSpec, membership) -> "PollenMask":
        m = np.array(membership, dtype=bool)
        if m.shape != grid.shape:
            raise ValueError("mask shape does not match grid")
        _, n = ndi.label(m, structure=_FOUR)
        if n != 1:
            raise ValueError(f"mask must be a single 4-connected component, found {n}")
        m.flags.writeable = False
        return cls(grid, m, int(m.sum()), perimeter_edges(m))


def perimeter_edges(mask) -> int:
    """Number of pixel edges separating the mask from its complement (grid edge included)."""
    padded = np.pad(np.asarray(mask, dtype=np.int8), 1)
    return int(np.abs(np.diff(padded, axis=0)).sum() + np.abs(np.diff(padded, axis=1)).sum())


def segment(phase: PhaseMap, level="auto", grow_fraction: float = 0.25,
            noise_k: float = 5.0, min_contrast: float = 0.05) -> PollenMask:
    """Grain mask from a background-normalised unwrapped phase map.

    ``level="auto"`` takes Otsu's threshold as the seed level and grows the seeds
    down to ``max(grow_fraction * otsu, median_bg + noise_k * sigma_bg)``, so that
    the shallow rim of a hemispherical grain is not cut away. A numeric ``level`` is
    used as a plain threshold. The largest 4-connected component is kept and its
    holes are filled.
    """
    u = phase.values
    if level == "auto":
        if np.ptp(u) == 0:
            raise NoGrainFound("phase map is constant")
        high = float(threshold_otsu(u))
        bg = u[u <= high]
        med = float(np.median(bg))
        sigma = 1.4826 * float(np.median(np.abs(bg - med)))
        core = u > high
        if not core.any() or u[core].mean() - med < max(min_contrast, noise_k * sigma):
            raise NoGrainFound("no region stands out from the background")
        low = max(grow_fraction * high, med + noise_k * sigma)
        labels, n = ndi.label(u > low, structure=_FOUR)
        seeded = np.unique(labels[core])
        fg = np.isin(labels, seeded[seeded > 0])
    else:
        fg = u > float(level)
    labels, n = ndi.label(fg, structure=_FOUR)
    if n == 0:
        raise NoGrainFound("no foreground pixels above the threshold")
    sizes = ndi.sum(fg, labels, index=np.arange(1, n + 1))
    largest = labels == (1 + int(np.argmax(sizes)))
    return PollenMask.from_membership(phase.grid, ndi.binary_fill_holes(largest))


def _masked(phase: PhaseMap, mask: PollenMask):
    if mask.area_px == 0:
        raise NoGrainFound("empty mask")
    return phase.values[mask.membership]


def mean_phase(phase: PhaseMap, mask: PollenMask) -> float:
    """Integrated phase over the mask divided by its pixel area."""
    return float(_masked(phase, mask).sum() / mask.area_px)


def optical_volume(phase: PhaseMap, mask: PollenMask, grid: GridSpec | None = None) -> float:
    """Phase integrated over the grain area, in rad * um^2."""
    grid = grid or phase.grid
    return float(_masked(phase, mask).sum() * grid.pixel_pitch ** 2)


def flatten_background(phase: PhaseMap, frame_width: int = 8) -> PhaseMap:
    """Remove the best-fit plane through the border frame (residual carrier tilt)."""
    u = phase.values
    frame = border_frame(u.shape, frame_width)
    x, y = phase.grid.coordinates()
    A = np.column_stack([np.ones(frame.sum()), x[frame], y[frame]])
    coef, *_ = np.linalg.lstsq(A, u[frame], rcond=None)
    return PhaseMap(phase.grid, u - (coef[0] + coef[1] * x + coef[2] * y), wrapped=False)


def classify(mean_phase_value: float, threshold: float = DEFAULT_THRESHOLD) -> str:
    """``viable`` when ``mean_phase >= threshold``."""
    if not math.isfinite(mean_phase_value):
        raise ValueError("mean phase must be finite")
    return "viable" if mean_phase_value >= threshold else "nonviable"


@dataclass(frozen=True)
class FeatureRecord:
    grain_id: str
    mean_phase: float
    area_um2: float
    perimeter_um: float
    optical_volume: float
    max_phase: float
    label: str = "unknown"
    area_px: int = 0
    file: str = ""


def extract_features(phase: PhaseMap, grain_id: str = "", threshold: float = DEFAULT_THRESHOLD,
                     level="auto", file: str = "") -> FeatureRecord:
    mask = segment(phase, level)
    q = phase.grid.pixel_pitch
    mp = mean_phase(phase, mask)
    return FeatureRecord(
        grain_id=grain_id,
        mean_phase=mp,
        area_um2=mask.area_px * q * q,
        perimeter_um=mask.perimeter_px * q,
        optical_volume=optical_volume(phase, mask),
        max_phase=float(phase.values[mask.membership].max()),
        label=classify(mp, threshold),
        area_px=mask.area_px,
        file=file,
    )


@dataclass(frozen=True)
class PopulationStats:
    label: str
    n: int
    mean: float
    std: float

    @property
    def sem(self) -> float:
        return self.std / math.sqrt(self.n)


def class_stats(label: str, values) -> PopulationStats:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise StatsError(f"class {label!r} has {v.size} sample(s); need at least 2")
    return PopulationStats(label, int(v.size), float(v.mean()), float(v.std(ddof=1)))


def population_stats(records, labels=None) -> dict[str, PopulationStats]:
    """Sample mean and (n-1) standard deviation of ``mean_phase`` per class.

    Records are grouped by ``labels`` when given (e.g. truth labels), otherwise by
    their own ``label``. ``unknown`` records are skipped.
    """
    groups: dict[str, list[float]] = {}
    for i, rec in enumerate(records):
        lab = labels[i] if labels is not None else rec.label
        if lab == "unknown":
            continue
        groups.setdefault(lab, []).append(rec.mean_phase)
    return {lab: class_stats(lab, vals) for lab, vals in sorted(groups.items())}


class WelchResult(NamedTuple):
    t: float
    p: float
    dof: float


def welch_t(a: PopulationStats, b: PopulationStats) -> WelchResult:
    """Welch's unequal-variance t-test of ``b`` against ``a`` (two-sided)."""
    if a.n < 2 or b.n < 2:
        raise StatsError("each class needs at least 2 samples")
    va, vb = a.std ** 2 / a.n, b.std ** 2 / b.n
    if va + vb == 0:
        raise StatsError("both classes have zero variance")
    se2 = va + vb
    t = (b.mean - a.mean) / math.sqrt(se2)
    dof = se2 ** 2 / (va ** 2 / (a.n - 1) + vb ** 2 / (b.n - 1))
    p = float(2.0 * stats.t.sf(abs(t), dof))
    return WelchResult(float(t), min(p, 1.0), float(dof))


@dataclass(frozen=True, eq=False)
class Histogram:
    edges: np.ndarray
    density: np.ndarray

    @property
    def bin_width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    def rows(self):
        return list(zip(self.edges[:-1], self.edges[1:], self.density))

    def mode(self) -> float:
        """Centre of the densest bin."""
        k = int(np.argmax(self.density))
        return float(0.5 * (self.edges[k] + self.edges[k + 1]))


def histogram_edges(values, bin_width: float) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    lo = min(0.0, math.floor(v.min() / bin_width) * bin_width)
    nbins = int(math.floor((v.max() - lo) / bin_width)) + 1
    return lo + bin_width * np.arange(nbins + 1)


def histogram(values, bin_width: float, edges=None) -> Histogram:
    """Normalised histogram: ``sum(density) * bin_width == 1``.

    Bins start at 0, or lower when the sample has negative values.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise StatsError("histogram of an empty sample")
    if not bin_width > 0:
        raise ValueError("bin_width must be positive")
    if edges is None:
        edges = histogram_edges(v, bin_width)
    idx = np.floor((v - edges[0]) / bin_width).astype(int)
    idx = np.clip(idx, 0, len(edges) - 2)
    counts = np.bincount(idx, minlength=len(edges) - 1).astype(float)
    return Histogram(np.asarray(edges, dtype=float), counts / (v.size * bin_width))
