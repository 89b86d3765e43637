"""Full-resolution single-shot recovery by TV-regularized least squares.

The unknown object field ``O`` minimises

    C1 + C2 = || H - |R + O|^2 ||^2 + TV(O)

with no explicit weight between the two terms. Instead the solver alternates a
block of gradient steps on the data term with a block of normalised TV steps whose
length is tied to how far the data block moved the estimate (``step_ratio``).
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .field import ComplexField, FieldError
from .fourier import ft_reconstruct
from .holosim import Hologram, reference_field

log = logging.getLogger(__name__)

ARMIJO = 1e-4
MAX_INCREASES = 5


class ReconstructionError(RuntimeError):
    """Solver abort; the partial trace is attached as ``.trace``."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class ReconConfig:
    max_outer_iterations: int = 200
    data_steps_per_outer: int = 5
    tv_steps_per_outer: int = 5
    epsilon: float = 1e-10
    step_ratio: float = 0.3
    stop_tol: float = 1e-6
    roi: tuple[int, int, int, int] | None = None  # (x0, y0, width, height)
    max_halvings: int = 20

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.step_ratio < 1:
            raise ValueError("step_ratio must lie in (0, 1)")
        if self.max_outer_iterations < 1:
            raise ValueError("max_outer_iterations must be at least 1")
        if self.data_steps_per_outer < 1 or self.tv_steps_per_outer < 0:
            raise ValueError("step counts must be non-negative (at least one data step)")
        if self.stop_tol < 0:
            raise ValueError("stop_tol must be non-negative")
        if self.roi is not None:
            x0, y0, w, h = (int(v) for v in self.roi)
            if x0 < 0 or y0 < 0 or w < 8 or h < 8:
                raise ValueError("roi must be (x0, y0, width, height) with width, height >= 8")
            object.__setattr__(self, "roi", (x0, y0, w, h))


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    c1: float
    c2: float  # epsilon-smoothed TV
    total: float
    data_step: float
    tv_step: float
    rms_update: float


@dataclass
class ReconTrace:
    records: list[TraceRecord] = field(default_factory=list)
    stop_reason: str = ""

    def __len__(self):
        return len(self.records)

    @property
    def totals(self) -> np.ndarray:
        return np.array([r.total for r in self.records])

    def write_csv(self, path):
        names = list(TraceRecord.__dataclass_fields__)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for rec in self.records:
                row = asdict(rec)
                w.writerow([row["iteration"]] + [repr(float(row[k])) for k in names[1:]])


# -- discrete operators -------------------------------------------------------

def gradient(u):
    """Forward differences; the last row/column difference is 0 (replicate boundary)."""
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:, :-1] = u[:, 1:] - u[:, :-1]
    gy[:-1, :] = u[1:, :] - u[:-1, :]
    return gx, gy


def divergence(px, py):
    """Negative adjoint of :func:`gradient`."""
    d = np.zeros_like(px)
    d[:, 0] = px[:, 0]
    d[:, 1:-1] = px[:, 1:-1] - px[:, :-2]
    d[:, -1] = -px[:, -2]
    d[0, :] += py[0, :]
    d[1:-1, :] += py[1:-1, :] - py[:-2, :]
    d[-1, :] += -py[-2, :]
    return d


def _values(f):
    return f.values if isinstance(f, ComplexField) else np.asarray(f)


def _tv(u, epsilon=0.0):
    gx, gy = gradient(u)
    mag2 = np.abs(gx) ** 2 + np.abs(gy) ** 2
    if epsilon:
        return float(np.sum(np.sqrt(mag2 + epsilon * epsilon)))
    return float(np.sum(np.sqrt(mag2)))


def tv(O, epsilon: float = 0.0) -> float:
    """Isotropic total variation of a complex field.

    With ``epsilon > 0`` each pixel contributes ``sqrt(|grad O|^2 + epsilon^2)``,
    the smooth surrogate whose gradient is :func:`grad_c2`.
    """
    return _tv(_values(O), epsilon)


def _grad_c2(u, epsilon):
    gx, gy = gradient(u)
    norm = np.sqrt(np.abs(gx) ** 2 + np.abs(gy) ** 2 + epsilon * epsilon)
    return -divergence(gx / norm, gy / norm)


def grad_c2(O, epsilon: float = 1e-10) -> ComplexField:
    """TV descent direction ``-div(grad O / sqrt(|grad O|^2 + eps^2))``.

    This equals ``dTV/dRe(O) + 1j * dTV/dIm(O)`` of the smoothed TV.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    u = _values(O)
    out = _grad_c2(u, epsilon)
    return ComplexField(O.grid, out) if isinstance(O, ComplexField) else out


def _c1(H, R, O):
    return float(np.sum((H - np.abs(R + O) ** 2) ** 2))


def _grad_c1(H, R, O):
    F = R + O
    return -2.0 * (H - np.abs(F) ** 2) * F


def _same_grid(*items):
    shapes = {it.grid.shape for it in items}
    if len(shapes) != 1:
        raise FieldError(f"grid mismatch: {sorted(shapes)}")


def cost(H: Hologram, R: ComplexField, O: ComplexField):
    """Return ``(C1, C2)``: squared data misfit and plain TV of ``O``."""
    _same_grid(H, R, O)
    return _c1(H.intensity, R.values, O.values), _tv(O.values)


def grad_c1(H: Hologram, R: ComplexField, O: ComplexField) -> ComplexField:
    """Wirtinger derivative ``dC1/dO* = -2 (H - |R+O|^2)(R+O)``."""
    _same_grid(H, R, O)
    return ComplexField(O.grid, _grad_c1(H.intensity, R.values, O.values))


# -- solver -------------------------------------------------------------------

def _rms(a):
    return float(np.sqrt(np.mean(np.abs(a) ** 2)))


def _roi_slices(config, grid):
    if config.roi is None:
        return (slice(None), slice(None)), grid
    x0, y0, w, h = config.roi
    if x0 + w > grid.width or y0 + h > grid.height:
        raise ValueError(f"roi {config.roi} exceeds the {grid.width}x{grid.height} grid")
    return (slice(y0, y0 + h), slice(x0, x0 + w)), grid.crop(w, h)


def reconstruct_sparse(H: Hologram, R: ComplexField | None = None, config: ReconConfig | None = None,
                       init: ComplexField | None = None):
    """Recover the object field inside the ROI.

    Parameters
    ----------
    H : Hologram
        Recorded intensity.
    R : ComplexField, optional
        Reference wave; rebuilt from ``H.reference`` when omitted.
    config : ReconConfig, optional
    init : ComplexField, optional
        Starting estimate on the full grid or on the ROI. Defaults to the Fourier
        reconstruction.

    Returns
    -------
    (ComplexField, ReconTrace)
        The estimate on the ROI grid and one trace record per accepted outer iteration.

    Notes
    -----
    An outer iteration is kept only if ``C1 + TV_eps`` does not increase. If it
    would, the TV block is dropped and its scale halved; if the data block alone
    still raises the cost the iteration is discarded and the next attempt starts
    from a halved data step. After five consecutive discards the run ends: as a
    stall when the overshoot shrank with the step, otherwise with
    :class:`ReconstructionError`.
    """
    config = config or ReconConfig()
    if R is None:
        R = reference_field(H.reference, H.grid)
    _same_grid(H, R)
    sl, roi_grid = _roi_slices(config, H.grid)
    if init is None:
        init = ft_reconstruct(H)
    if init.grid.shape == H.grid.shape:
        O = np.array(init.values[sl])
    elif init.grid.shape == roi_grid.shape:
        O = np.array(init.values)
    else:
        raise FieldError("init must cover the full grid or the ROI")
    Hv = np.asarray(H.intensity[sl], dtype=float)
    Rv = np.asarray(R.values[sl])
    eps = config.epsilon
    trace = ReconTrace()

    c1 = _c1(Hv, Rv, O)
    total = c1 + _tv(O, eps)
    if not np.isfinite(total):
        raise ReconstructionError("initial cost is not finite", trace)
    step = 1.0 / (4.0 * max(float(Hv.max()), 1e-12))
    step_scale = 1.0
    tv_scale = 1.0
    increases = []

    for k in range(config.max_outer_iterations):
        O_start = O
        c1_start = c1
        step_start = step
        data_step = 0.0
        prev = None
        for _ in range(config.data_steps_per_outer):
            g = _grad_c1(Hv, Rv, O)
            gg = float(np.vdot(g, g).real)
            if gg == 0.0:
                break
            if prev is not None:
                s, y = O - prev[0], g - prev[1]
                sy = float(np.vdot(s, y).real)
                if sy > 0:
                    step = float(np.vdot(s, s).real) / sy
            a = step * step_scale
            for _ in range(config.max_halvings + 1):
                trial = O - a * g
                c_trial = _c1(Hv, Rv, trial)
                if c_trial <= c1 - ARMIJO * 2.0 * a * gg:
                    break
                a *= 0.5
            else:
                break
            prev = (O, g)
            O, c1, data_step = trial, c_trial, a
        if c1 > c1_start:
            raise ReconstructionError("data phase increased C1", trace)

        O_data, c1_data = O, c1
        dp = _rms(O - O_start)
        tv_step = config.step_ratio * tv_scale * dp
        if tv_step > 0:
            for _ in range(config.tv_steps_per_outer):
                d = _grad_c2(O, eps)
                dn = _rms(d)
                if dn == 0:
                    break
                O = O - (tv_step / dn) * d
            c1 = _c1(Hv, Rv, O)
        new_total = c1 + _tv(O, eps)
        if not np.isfinite(new_total):
            raise ReconstructionError(f"non-finite update at outer iteration {k}", trace)

        if new_total > total:
            O, c1 = O_data, c1_data
            new_total = c1 + _tv(O, eps)
            tv_scale *= 0.5
            tv_step = 0.0
        if new_total > total:
            # restart from the same BB step so the halved scale really shortens the move
            O, c1, step = O_start, c1_start, step_start
            increases.append(new_total - total)
            step_scale *= 0.5
            if len(increases) >= MAX_INCREASES:
                # shrinking steps shrink a stall's overshoot; a blow-up does not shrink
                if increases[-1] >= increases[0]:
                    trace.stop_reason = "diverged"
                    raise ReconstructionError(
                        f"cost increased on {MAX_INCREASES} consecutive outer iterations", trace)
                trace.stop_reason = "stalled"
                break
            continue
        increases = []
        step_scale = 1.0

        rec = TraceRecord(k, c1, new_total - c1, new_total, data_step, tv_step, _rms(O - O_start))
        trace.records.append(rec)
        log.debug("outer %d: C1=%.6g TV=%.6g", k, rec.c1, rec.c2)
        converged = total - new_total <= config.stop_tol * total
        total = new_total
        if converged:
            trace.stop_reason = "converged"
            break
    else:
        trace.stop_reason = "max_iterations"

    return ComplexField(roi_grid, O), trace
