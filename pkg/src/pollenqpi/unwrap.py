"""Unweighted least-squares phase unwrapping (cosine-transform Poisson solver).

Wrapped neighbour differences are integrated by solving the Neumann Poisson
problem in the DCT-II basis. On residue-free maps this reproduces the true
surface exactly up to a constant; the constant is fixed by forcing the mean of an
8-pixel border frame to zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn, idctn

from .field import PhaseMap, wrap

BORDER = 8


class UnwrapError(ValueError):
    pass


@dataclass(frozen=True)
class UnwrapReport:
    """Quality of an unwrapping.

    ``gauge_offset`` is the constant the background normalisation added (modulo
    2 pi), so ``wrap(unwrapped - gauge_offset)`` reproduces the input on
    residue-free maps; ``residual_rms`` is the RMS of that difference.
    """

    residual_rms: float
    offset_convention: bool = True  # background frame mean is zero
    gauge_offset: float = 0.0


def border_frame(shape, width: int = BORDER) -> np.ndarray:
    frame = np.ones(shape, dtype=bool)
    h, w = shape
    if h > 2 * width and w > 2 * width:
        frame[width:h - width, width:w - width] = False
    return frame


def _poisson_neumann(rho):
    m, n = rho.shape
    coeffs = dctn(rho, type=2, norm="ortho")
    i = np.arange(m)[:, None]
    j = np.arange(n)[None, :]
    denom = 2.0 * np.cos(np.pi * i / m) + 2.0 * np.cos(np.pi * j / n) - 4.0
    denom[0, 0] = 1.0
    coeffs = coeffs / denom
    coeffs[0, 0] = 0.0
    return idctn(coeffs, type=2, norm="ortho")


def unwrap_array(psi, frame_width: int = BORDER) -> np.ndarray:
    psi = np.asarray(psi, dtype=float)
    dx = wrap(np.diff(psi, axis=1))
    dy = wrap(np.diff(psi, axis=0))
    rho = np.zeros_like(psi)
    rho[:, :-1] += dx
    rho[:, 1:] -= dx
    rho[:-1, :] += dy
    rho[1:, :] -= dy
    # rho is the discrete Laplacian source: divergence of the wrapped gradient
    phi = _poisson_neumann(rho)
    phi -= phi[border_frame(phi.shape, frame_width)].mean()
    return phi


def unwrap2d(wrapped: PhaseMap, frame_width: int = BORDER):
    """Unwrap ``wrapped`` and normalise its border frame to zero mean.

    Returns ``(PhaseMap, UnwrapReport)``. ``residual_rms`` measures congruence,
    the RMS of ``wrap(unwrapped - wrapped)`` after removing the single constant
    introduced by the background normalisation; it is ~0 whenever the input is
    residue-free.
    """
    if not wrapped.wrapped:
        raise UnwrapError("unwrap2d expects a phase map flagged as wrapped")
    psi = wrapped.values
    if np.all(psi == psi.flat[0]):
        phi = np.zeros_like(psi)
    else:
        phi = unwrap_array(psi, frame_width)
    d = wrap(phi - psi)
    offset = float(np.angle(np.mean(np.exp(1j * d))))
    resid = float(np.sqrt(np.mean(wrap(d - offset) ** 2)))
    return PhaseMap(wrapped.grid, phi, wrapped=False), UnwrapReport(resid, True, offset)
