"""Collinear SPDC phasematching: triplet solving, temperature tuning, QPM design.

Sign conventions: the phase mismatch is k_p - k_s - k_i - 2 pi m / period
in 1/um, with all wavelengths vacuum nm at the API. The signal is always
the shorter of the two downconverted wavelengths.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import dispersion
from ._roots import bisect, sign_changes
from .dispersion import CrystalDispersion, resolve_crystal
from .exceptions import (DegenerateContinuumError, GridResolutionWarning,
                         OutOfRangeError, SolverError)

DEFAULT_GRID_STEP = 0.05      # nm
DK_TOLERANCE = 1e-9           # 1/um
LAMBDA_TOLERANCE = 1e-9       # nm, bracket width at which bisection may stop
_DEGENERATE_DK = 1e-12        # 1/um
_EDGE_NUDGE = 1e-6            # nm

DEFAULT_EXPANSION_COEFFICIENT = 6.7e-6  # 1/degC, KTP along x (literature value, configurable)


@dataclass(frozen=True)
class Grating:
    period: float   # um
    order: int = 1

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError(f"grating period must be positive, got {self.period}")
        _check_order(self.order)

    @property
    def wavevector(self):
        return 2 * math.pi * self.order / self.period


def _check_order(m):
    if int(m) != m or m < 1 or m % 2 == 0:
        raise ValueError(f"grating order must be a positive odd integer, got {m}")


@dataclass(frozen=True)
class ProcessSpec:
    """An SPDC process: crystal plus pump/signal/idler polarization axes.

    ``grating`` is None for birefringent (noncritical) phasematching.
    """

    crystal: CrystalDispersion
    pump_axis: str
    signal_axis: str
    idler_axis: str
    grating: Optional[Grating] = None
    label: str = ""
    search: Optional[tuple] = None   # default signal window, nm


    def __post_init__(self):
        for role in ("pump_axis", "signal_axis", "idler_axis"):
            ax = getattr(self, role)
            if ax not in self.crystal.axes:
                raise ValueError(f"{role} {ax!r} is not an axis of {self.crystal.name} {self.crystal.axes}")
        if self.search is not None:
            lo, hi = (float(v) for v in self.search)
            if not lo < hi:
                raise ValueError(f"invalid search window {self.search}")
            object.__setattr__(self, "search", (lo, hi))
        if not self.label:
            kind = "NCPM" if self.grating is None else "QPM"
            object.__setattr__(
                self, "label",
                f"{kind} {self.pump_axis}_p {self.signal_axis}_s {self.idler_axis}_i")

    @property
    def is_ncpm(self):
        return self.grating is None

    def with_grating(self, period, order=1, label=None, search=None):
        return replace(self, grating=Grating(period, order),
                       label=label if label is not None else self.label,
                       search=search if search is not None else self.search)

    def birefringent(self):
        """The same process with the grating term removed."""
        return replace(self, grating=None)


@dataclass(frozen=True)
class SpdcSolution:
    lambda_p: float
    lambda_s: float
    lambda_i: float
    temperature: float
    delta_k: float
    process: ProcessSpec = field(repr=False)

    @property
    def energy_mismatch(self):
        """1/lp - 1/ls - 1/li in 1/nm."""
        return 1 / self.lambda_p - 1 / self.lambda_s - 1 / self.lambda_i


@dataclass(frozen=True)
class TuningCurve:
    process: ProcessSpec
    lambda_p: float
    samples: tuple          # (T, lambda_s, lambda_i) rows
    rate_i: float           # nm/degC, least-squares slope
    rate_s: float

    @property
    def temperatures(self):
        return np.array([s[0] for s in self.samples])

    @property
    def idler(self):
        return np.array([s[2] for s in self.samples])

    @property
    def signal(self):
        return np.array([s[1] for s in self.samples])

    @property
    def span_i(self):
        """Idler change from the first to the last sample, nm."""
        return self.samples[-1][2] - self.samples[0][2]


def idler_wavelength(lambda_p, lambda_s):
    return 1.0 / (1.0 / lambda_p - 1.0 / np.asarray(lambda_s, dtype=float))


def delta_k(p, lambda_p, lambda_s, T):
    """Phase mismatch in 1/um for pump ``lambda_p`` and signal ``lambda_s`` (nm).

    The idler follows from energy conservation. ``lambda_s`` may be an array.
    """
    lambda_s = np.asarray(lambda_s, dtype=float)
    lambda_i = idler_wavelength(lambda_p, lambda_s)
    c = p.crystal
    n_p = dispersion.refractive_index(c, p.pump_axis, lambda_p, T)
    n_s = dispersion.refractive_index(c, p.signal_axis, lambda_s, T)
    n_i = dispersion.refractive_index(c, p.idler_axis, lambda_i, T)
    dk = 2 * math.pi * (n_p / (lambda_p / 1000.0) - n_s / (lambda_s / 1000.0) - n_i / (lambda_i / 1000.0))
    if p.grating is not None:
        dk = dk - p.grating.wavevector
    return float(dk) if np.ndim(dk) == 0 else dk


def default_search_window(p, lambda_p):
    """Signal window [lp + 20, 2 lp - 5] nm clipped so all three waves stay in validity.

    A process-level ``search`` window further narrows the result.
    """
    sig = p.crystal.axis(p.signal_axis).wavelength_validity
    idl = p.crystal.axis(p.idler_axis).wavelength_validity
    lo = max(lambda_p + 20.0, sig[0])
    hi = min(2 * lambda_p - 5.0, sig[1])
    if idl[1] > 2 * lambda_p:
        # idler <= idl_max  <=>  signal >= 1/(1/lp - 1/idl_max)
        lo = max(lo, 1.0 / (1.0 / lambda_p - 1.0 / idl[1]) + _EDGE_NUDGE)
    else:
        lo = hi
    if idl[0] > lambda_p:
        hi = min(hi, 1.0 / (1.0 / lambda_p - 1.0 / idl[0]) - _EDGE_NUDGE) if idl[0] < 2 * lambda_p else hi
    if p.search is not None:
        lo, hi = max(lo, p.search[0]), min(hi, p.search[1])
    return lo, hi


def _grid(lo, hi, step):
    n = int(math.floor((hi - lo) / step + 1e-9))
    nodes = lo + step * np.arange(n + 1)
    if hi - nodes[-1] > 1e-9 * step:
        nodes = np.append(nodes, hi)
    return nodes


def solve_spdc(p, lambda_p, T, search=None, step=DEFAULT_GRID_STEP, tol=DK_TOLERANCE):
    """All phasematched triplets with signal inside ``search`` (nm), sorted by signal.

    The mismatch is sampled on a uniform grid of spacing ``step``; each sign
    change is refined by bisection until |dk| <= ``tol``. Returns an empty
    list when nothing phasematches. Raises :class:`DegenerateContinuumError`
    when the mismatch vanishes over the whole grid.
    """
    if search is None:
        lo, hi = default_search_window(p, lambda_p)
        if not lo < hi:
            raise ValueError(f"no admissible signal window for pump {lambda_p} nm in {p.crystal.name}")
    else:
        lo, hi = (float(v) for v in search)
        if not lo < hi:
            raise ValueError(f"invalid search interval [{lo}, {hi}]")
        if lo <= lambda_p or hi >= 2 * lambda_p:
            raise ValueError(
                f"search interval [{lo}, {hi}] must lie strictly between the pump ({lambda_p}) "
                f"and degeneracy ({2 * lambda_p}) nm")
    if not step > 0:
        raise ValueError("grid step must be positive")

    nodes = _grid(lo, hi, step)
    values = delta_k(p, lambda_p, nodes, T)
    if np.all(np.abs(values) <= _DEGENERATE_DK):
        raise DegenerateContinuumError(
            f"phase mismatch vanishes across [{lo}, {hi}] nm: every signal wavelength phasematches")

    def f(x):
        return delta_k(p, lambda_p, x, T)

    roots = []
    for i in sign_changes(values):
        x, r = bisect(f, nodes[i], nodes[i + 1], tol, LAMBDA_TOLERANCE)
        if abs(r) > tol:
            raise SolverError(f"bisection stalled at {x:.9f} nm with |dk| = {abs(r):.3g} 1/um")
        roots.append((x, r))
    roots.sort()
    for (a, _), (b, _) in zip(roots, roots[1:]):
        if b - a < step:
            warnings.warn(
                f"roots at {a:.4f} and {b:.4f} nm are closer than the grid step {step} nm; "
                "refine the grid to resolve them", GridResolutionWarning, stacklevel=2)
    out = []
    for x, r in roots:
        li = float(idler_wavelength(lambda_p, x))
        out.append(SpdcSolution(lambda_p=float(lambda_p), lambda_s=float(x), lambda_i=li,
                                temperature=float(T), delta_k=float(r), process=p))
    return out


def temperature_grid(T_range, step):
    t0, t1 = (float(v) for v in T_range)
    if not step > 0 or t1 < t0:
        raise ValueError(f"invalid temperature range {T_range} with step {step}")
    n = int(math.floor((t1 - t0) / step + 1e-9))
    temps = t0 + step * np.arange(n + 1)
    if t1 - temps[-1] > 1e-9:
        temps = np.append(temps, t1)
    return temps


def tuning_curve(p, lambda_p, T_range, step=1.0, search=None, grid_step=DEFAULT_GRID_STEP):
    """Phasematched signal/idler versus temperature and the least-squares idler rate."""
    samples = []
    previous = None
    for T in temperature_grid(T_range, step):
        sols = solve_spdc(p, lambda_p, T, search=search, step=grid_step)
        if len(sols) != 1:
            if previous is None:
                raise SolverError(f"expected exactly one solution at T={T:g} degC, found {len(sols)}")
            raise SolverError(
                f"solution count changes from {previous} to {len(sols)} at T={T:g} degC")
        previous = len(sols)
        samples.append((float(T), sols[0].lambda_s, sols[0].lambda_i))
    arr = np.array(samples)
    if len(arr) < 2:
        raise ValueError("a tuning curve needs at least two temperatures")
    rate_i = float(np.polyfit(arr[:, 0], arr[:, 2], 1)[0])
    rate_s = float(np.polyfit(arr[:, 0], arr[:, 1], 1)[0])
    return TuningCurve(process=p, lambda_p=float(lambda_p), samples=tuple(samples),
                       rate_i=rate_i, rate_s=rate_s)


def qpm_period(p, lambda_p, lambda_s, T, m=1):
    """Poling period (um) that phasematches (lambda_p, lambda_s) at T in order ``m``."""
    if p.grating is not None:
        raise ValueError("qpm_period expects a process without a grating")
    _check_order(m)
    dk = delta_k(p, lambda_p, lambda_s, T)
    if not dk > 0:
        raise ValueError(
            f"birefringent mismatch {dk:.6g} 1/um is not positive; no positive first-order period exists")
    return 2 * math.pi * m / dk


def matched_qpm_process(p, reference, lambda_p, T, m=1, search=None, label=None):
    """Attach the grating that reproduces ``reference``'s wavelengths at T.

    ``reference`` is typically the NCPM process; it must have exactly one
    solution at (lambda_p, T). If the poled process has further roots at the
    design point, its search window is cut halfway to the nearest one so that
    the design branch stays isolated.
    """
    sols = solve_spdc(reference, lambda_p, T, search=search)
    if len(sols) != 1:
        raise SolverError(f"reference process has {len(sols)} solutions at T={T:g}; expected one")
    target = sols[0].lambda_s
    period = qpm_period(p, lambda_p, target, T, m)
    poled = p.with_grating(period, m, label=label)
    lo, hi = default_search_window(poled, lambda_p)
    if search is not None:
        lo, hi = max(lo, search[0]), min(hi, search[1])
    for other in solve_spdc(poled, lambda_p, T, search=(lo, hi)):
        x = other.lambda_s
        if abs(x - target) < 1e-6:
            continue
        if x > target:
            hi = min(hi, 0.5 * (x + target))
        else:
            lo = max(lo, 0.5 * (x + target))
    if (lo, hi) != default_search_window(poled, lambda_p):
        poled = replace(poled, search=(lo, hi))
    return poled


def poling_thermal_term(period, m, alpha=DEFAULT_EXPANSION_COEFFICIENT, dT=1.0):
    """Change (1/um) of the grating wavevector when the period expands by alpha*dT."""
    if not period > 0:
        raise ValueError("period must be positive")
    _check_order(m)
    scale = 1.0 + alpha * dT
    if not scale > 0:
        raise ValueError("expansion factor must stay positive")
    k0 = 2 * math.pi * m / period
    return abs(k0 - k0 / scale)


# --- process presets ---------------------------------------------------------

KTP_PROCESSES = {
    "ncpm": ("y", "z", "y", "NCPM Type-II y_p z_s y_i"),
    "qpm0": ("z", "z", "z", "QPM Type-0 z_p z_s z_i"),
    "qpm2": ("y", "y", "z", "QPM Type-II y_p y_s z_i"),
}

DESIGN_PUMP = 405.75      # nm
DESIGN_TEMPERATURE = 60.0  # degC


def ktp_process(kind, crystal="ktp", period=None, design_pump=DESIGN_PUMP,
                design_temperature=DESIGN_TEMPERATURE, m=1):
    """Named KTP process. QPM kinds get a grating matched to NCPM at the design point
    unless ``period`` is given."""
    try:
        pa, sa, ia, label = KTP_PROCESSES[kind]
    except KeyError:
        raise KeyError(f"unknown process {kind!r}; choose from {sorted(KTP_PROCESSES)}") from None
    c = resolve_crystal(crystal)
    p = ProcessSpec(c, pa, sa, ia, label=label)
    if kind == "ncpm":
        if period is not None:
            raise ValueError("the NCPM process takes no poling period")
        return p
    if period is not None:
        return p.with_grating(period, m)
    ref = ProcessSpec(c, *KTP_PROCESSES["ncpm"][:3], label=KTP_PROCESSES["ncpm"][3])
    return matched_qpm_process(p, ref, design_pump, design_temperature, m=m)


# --- triplet table -----------------------------------------------------------

@dataclass(frozen=True)
class TripletConfig:
    crystal: str
    pump_axis: str
    signal_axis: str
    idler_axis: str
    lambda_p: float
    temperature: float
    d_label: str
    nominal_signal: Optional[float] = None
    nominal_idler: Optional[float] = None


@dataclass(frozen=True)
class TripletRow:
    config: TripletConfig
    crystal_name: str
    process_label: str
    solutions: tuple
    d_value: Optional[float]
    error: Optional[str] = None

    @property
    def solution(self):
        """The unique solution, or None when the row errored or is ambiguous."""
        return self.solutions[0] if len(self.solutions) == 1 else None


# Visible/telecom NCPM triplets: (crystal, pump, signal, idler axes, pump nm, T degC, d label,
# nominal signal nm, nominal idler nm)
REFERENCE_TRIPLETS = tuple(TripletConfig(*row) for row in [
    ("ktp", "y", "z", "y", 443.0, 30.0, "d32", 668.0, 1310.0),
    ("ktp", "y", "z", "y", 387.0, 30.0, "d32", 516.0, 1550.0),
    ("rtp", "x", "z", "x", 402.0, 30.0, "d31", 581.0, 1312.0),
    ("rtp", "x", "z", "x", 345.0, 30.0, "d31", 444.0, 1551.0),
    ("rtp", "y", "z", "y", 493.0, 30.0, "d32", 790.0, 1310.0),
    ("rtp", "y", "z", "y", 426.0, 30.0, "d32", 587.0, 1552.0),
    ("knbo3", "z", "x", "x", 405.0, 58.0, "d31", 586.0, 1311.0),
    ("knbo3", "z", "x", "x", 375.0, 40.0, "d31", 495.0, 1550.0),
    ("knbo3", "z", "y", "y", 488.0, 83.0, "d32", 778.0, 1310.0),
    ("knbo3", "z", "y", "y", 461.0, 62.0, "d32", 656.0, 1550.0),
    ("mgoln", "e", "o", "o", 515.0, 45.0, "d31", 846.0, 1316.0),
    ("mgoln", "e", "o", "o", 515.0, 72.0, "d31", 771.0, 1551.0),
])


def triplet_table(configs=REFERENCE_TRIPLETS, step=DEFAULT_GRID_STEP):
    """Solve each configured (crystal, axes, pump, T) row.

    Errors are recorded per row and never abort the table.
    """
    rows = []
    for cfg in configs:
        name, label, d_value = str(cfg.crystal), f"{cfg.pump_axis}_p {cfg.signal_axis}_s {cfg.idler_axis}_i", None
        try:
            c = resolve_crystal(cfg.crystal)
            name = c.name
            d_value = c.nonlinear_coefficients.get(cfg.d_label)
            p = ProcessSpec(c, cfg.pump_axis, cfg.signal_axis, cfg.idler_axis, label="NCPM " + label)
            sols = solve_spdc(p, cfg.lambda_p, cfg.temperature, step=step)
        except (OutOfRangeError, SolverError, ValueError, KeyError, OSError) as exc:
            rows.append(TripletRow(cfg, name, label, (), d_value, f"{type(exc).__name__}: {exc}"))
            continue
        error = None if sols else "no phasematching solution in the search window"
        rows.append(TripletRow(cfg, name, label, tuple(sols), d_value, error))
    return rows
