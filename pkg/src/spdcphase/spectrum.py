"""Planewave CW-pump phasematching spectrum and signal/idler linewidths."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._roots import bisect
from .exceptions import OutOfRangeError, SpectrumError
from .phasematch import ProcessSpec, delta_k, idler_wavelength, solve_spdc

HALF_POWER_PHASE = 1.3915573782515103   # sinc^2(x) = 1/2 on the central lobe
SAMPLE_SPAN = 3.0                        # samples cover center +/- 3 FWHM
SAMPLE_COUNT = 601


@dataclass(frozen=True)
class SpectrumProfile:
    process: ProcessSpec
    lambda_p: float
    temperature: float
    length_mm: float
    samples: tuple      # (lambda_s, lambda_i, intensity)
    fwhm_s: float
    fwhm_i: float
    center_s: float
    center_i: float
    half_points: tuple  # signal wavelengths of the two half-intensity crossings

    def rows(self):
        return [{"lambda_s_nm": s, "lambda_i_nm": i, "intensity": v} for s, i, v in self.samples]


def _sinc2(x):
    x = np.asarray(x, dtype=float)
    return np.sinc(x / np.pi) ** 2


def pm_intensity(p, lambda_p, lambda_s, T, length_mm):
    """sinc^2(dk L / 2) for signal ``lambda_s`` (nm, scalar or array), crystal length in mm."""
    if not length_mm > 0:
        raise ValueError(f"crystal length must be positive, got {length_mm}")
    phase = 0.5 * delta_k(p, lambda_p, lambda_s, T) * length_mm * 1000.0
    out = _sinc2(phase)
    return float(out) if np.ndim(out) == 0 else out


def _half_crossing(p, lambda_p, T, length_mm, center, direction, limit):
    """Signal wavelength where the central lobe falls to half, walking from ``center``."""
    half_L = 0.5 * length_mm * 1000.0

    def excess(x):
        return abs(delta_k(p, lambda_p, x, T) * half_L) - HALF_POWER_PHASE

    step = 1e-4
    inner = center
    while True:
        outer = center + direction * step
        if (outer - limit) * direction > 0:
            outer = limit
        try:
            e = excess(outer)
        except OutOfRangeError as exc:
            raise SpectrumError(f"half-intensity point runs outside the dispersion validity: {exc}") from exc
        if e >= 0:
            break
        if outer == limit:
            raise SpectrumError(
                f"intensity stays above half out to {limit:.4f} nm; no central-lobe edge in the window")
        inner = outer
        step *= 2
    lo, hi = sorted((inner, outer))
    x, r = bisect(excess, lo, hi, 1e-12, 1e-12)
    if abs(r) > 1e-6:
        raise SpectrumError(
            f"intensity jumps across the half level near {x:.6f} nm (side-lobe ambiguity)")
    if abs(delta_k(p, lambda_p, x, T) * half_L) >= math.pi:
        raise SpectrumError(f"half crossing at {x:.6f} nm lies beyond the first zero (side-lobe ambiguity)")
    # The lobe between center and x must not pass through a zero.
    probe = np.linspace(center, x, 65)
    phases = np.abs(delta_k(p, lambda_p, probe, T) * half_L)
    if np.any(phases >= math.pi):
        raise SpectrumError(f"central lobe passes a zero before the half crossing at {x:.6f} nm")
    return x


def linewidths(p, lambda_p, T, length_mm, search=None, step=None):
    """Signal and idler FWHM (nm) of the central sinc^2 lobe.

    The signal half points are located by bisection on either side of the
    phasematched center; the idler width follows from (li/ls)^2.
    """
    if not length_mm > 0:
        raise ValueError(f"crystal length must be positive, got {length_mm}")
    kwargs = {} if step is None else {"step": step}
    sols = solve_spdc(p, lambda_p, T, search=search, **kwargs)
    if not sols:
        raise SpectrumError(f"no phasematched center for pump {lambda_p} nm at {T} degC")
    if len(sols) > 1:
        centers = ", ".join(f"{s.lambda_s:.3f}" for s in sols)
        raise SpectrumError(f"expected one phasematched center, found {len(sols)} ({centers} nm)")
    c = sols[0]
    lo_lim, hi_lim = lambda_p * (1 + 1e-9), 2 * lambda_p * (1 - 1e-9)
    left = _half_crossing(p, lambda_p, T, length_mm, c.lambda_s, -1, lo_lim)
    right = _half_crossing(p, lambda_p, T, length_mm, c.lambda_s, +1, hi_lim)
    fwhm_s = right - left
    fwhm_i = fwhm_s * (c.lambda_i / c.lambda_s) ** 2

    grid = np.linspace(c.lambda_s - SAMPLE_SPAN * fwhm_s, c.lambda_s + SAMPLE_SPAN * fwhm_s, SAMPLE_COUNT)
    grid[SAMPLE_COUNT // 2] = c.lambda_s
    inten = np.clip(pm_intensity(p, lambda_p, grid, T, length_mm), 0.0, 1.0)
    idl = idler_wavelength(lambda_p, grid)
    samples = tuple((float(s), float(i), float(v)) for s, i, v in zip(grid, idl, inten))
    return SpectrumProfile(process=p, lambda_p=float(lambda_p), temperature=float(T),
                           length_mm=float(length_mm), samples=samples, fwhm_s=float(fwhm_s),
                           fwhm_i=float(fwhm_i), center_s=c.lambda_s, center_i=c.lambda_i,
                           half_points=(float(left), float(right)))
