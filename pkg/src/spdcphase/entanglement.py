"""|Phi-> polarization-entanglement model, fringe fitting, accidentals, CHSH and fidelity.

Angles are polarization-plane angles in degrees throughout; half-wave-plate
dial angles are converted (x2) at the command-line boundary. Count "rates"
are counts per second.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import AccidentalClampWarning, FitError, OverSubtractionError

SIGNAL_SETTINGS = {"H": 0.0, "V": 90.0, "D": 45.0, "A": -45.0}
FRINGE_PERIOD = 180.0   # polarization-angle period of the coincidence fringe

# Idler angles mirrored relative to the textbook Phi+ choice, because Phi-
# correlations follow cos 2(alpha + beta).
CHSH_ANGLES = (0.0, 45.0, -22.5, -67.5)


def _unit(name, v):
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class SourceModel:
    pair_rate: float            # peak coincidences per second
    V_hv: float = 1.0
    V_da: float = 1.0
    phase: float = math.pi      # two-path relative phase; pi gives Phi-
    eta_s: float = 1.0          # pairs / idler singles
    eta_i: float = 1.0          # pairs / signal singles
    window_ns: float = 0.0
    dark_s: float = 0.0         # signal-detector dark rate, 1/s
    dark_i: float = 0.0

    def __post_init__(self):
        for name in ("pair_rate", "window_ns", "dark_s", "dark_i"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("V_hv", "V_da", "eta_s", "eta_i"):
            _unit(name, getattr(self, name))

    @property
    def singles_signal(self):
        return self.pair_rate / self.eta_i + self.dark_s

    @property
    def singles_idler(self):
        return self.pair_rate / self.eta_s + self.dark_i


@dataclass(frozen=True)
class FringeParams:
    offset: float
    amplitude: float
    phase: float        # degrees; angle of the fringe maximum
    visibility: float


@dataclass(frozen=True)
class SweepRecord:
    signal_setting: str
    points: tuple               # (beta_deg, rate, integration_s)
    fitted: Optional[FringeParams] = None

    def __post_init__(self):
        if self.signal_setting not in SIGNAL_SETTINGS:
            raise ValueError(f"signal setting must be one of {sorted(SIGNAL_SETTINGS)}")
        pts = tuple((float(b), float(c), float(t)) for b, c, t in self.points)
        for b, c, t in pts:
            if c < 0:
                raise ValueError(f"negative coincidence rate {c} at {b} deg")
            if not t > 0:
                raise ValueError(f"integration time must be positive at {b} deg")
        object.__setattr__(self, "points", pts)

    @property
    def angles(self):
        return np.array([p[0] for p in self.points])

    @property
    def rates(self):
        return np.array([p[1] for p in self.points])

    @property
    def integrations(self):
        return np.array([p[2] for p in self.points])


class FringeFit(BaseEstimator, RegressorMixin):
    """Least-squares sinusoid at a fixed period: c = offset + amplitude * cos(2 pi (x - phase) / period).

    Linear in (offset, a cos, a sin), so the fit is a single lstsq solve.
    """

    def __init__(self, period=FRINGE_PERIOD, require_full_period=True):
        self.period = period
        self.require_full_period = require_full_period

    def _design(self, x):
        w = 2 * math.pi * x / self.period
        return np.column_stack([np.ones_like(x), np.cos(w), np.sin(w)])

    def fit(self, X, y, sample_weight=None):
        x = np.asarray(X, dtype=float).reshape(-1)
        y = np.asarray(y, dtype=float).reshape(-1)
        if x.shape != y.shape:
            raise FitError("angles and counts differ in length")
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
            raise FitError("non-finite input to the fringe fit")
        if len(np.unique(np.mod(x, self.period))) < 3:
            raise FitError("need at least three distinct angles within one period")
        if self.require_full_period and np.ptp(x) < self.period * (1 - 1e-9):
            raise FitError(f"angles span {np.ptp(x):g} deg, less than one fringe period ({self.period:g})")
        A = self._design(x)
        if sample_weight is not None:
            sw = np.sqrt(np.asarray(sample_weight, dtype=float))
            A, y = A * sw[:, None], y * sw
        coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
        if rank < 3:
            raise FitError("fringe design matrix is rank deficient")
        a0, a1, a2 = coef
        if not a0 > 0:
            raise FitError(f"fitted fringe offset {a0:g} is not positive")
        self.coef_ = coef
        self.offset_ = float(a0)
        self.amplitude_ = float(math.hypot(a1, a2))
        self.phase_ = float(math.degrees(math.atan2(a2, a1)) * self.period / 360.0)
        self.visibility_ = self.amplitude_ / self.offset_
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        x = np.asarray(X, dtype=float).reshape(-1)
        return self._design(x) @ self.coef_

    def params(self):
        check_is_fitted(self, "coef_")
        return FringeParams(self.offset_, self.amplitude_, self.phase_, self.visibility_)


def accidental_rate(m):
    """Uncorrelated coincidences per second, S_s * S_i * tau."""
    if m.eta_s <= 0 or m.eta_i <= 0:
        raise ValueError("heralding efficiencies must be positive to infer singles")
    return m.singles_signal * m.singles_idler * m.window_ns * 1e-9


def correlation_probability(m, alpha, beta):
    """Normalized joint detection probability for analyzers at alpha, beta (deg)."""
    a = np.radians(2 * np.asarray(alpha, dtype=float))
    b = np.radians(2 * np.asarray(beta, dtype=float))
    return 0.5 * (1 + m.V_hv * np.cos(a) * np.cos(b)
                  + m.V_da * math.cos(m.phase) * np.sin(a) * np.sin(b))


def coincidence_rate(m, alpha, beta):
    """Coincidences per second at signal angle alpha and idler angle beta (deg)."""
    r = m.pair_rate * correlation_probability(m, alpha, beta) + accidental_rate(m)
    return float(r) if np.ndim(r) == 0 else r


def default_sweep_angles(step=5.0):
    return np.arange(0.0, FRINGE_PERIOD + step / 2, step)


def synthesize_sweep(m, setting, angles=None, integration=1.0, seed=None):
    """Sweep record from the model; Poisson-sampled only when ``seed`` is given."""
    alpha = SIGNAL_SETTINGS[setting]
    beta = default_sweep_angles() if angles is None else np.asarray(angles, dtype=float)
    rates = np.asarray(coincidence_rate(m, alpha, beta), dtype=float).reshape(-1)
    if seed is not None:
        rng = np.random.default_rng(seed)
        rates = rng.poisson(rates * integration) / integration
    return SweepRecord(setting, tuple(zip(beta.tolist(), rates.tolist(), [float(integration)] * len(beta))))


def fit_sweep(rec):
    """Return ``rec`` with its fringe parameters filled in."""
    est = FringeFit().fit(rec.angles, rec.rates)
    return replace(rec, fitted=est.params())


def visibility(rec, noise_floor=None):
    """Fringe visibility (Cmax - Cmin) / (Cmax + Cmin) of the fitted sinusoid.

    ``noise_floor`` (counts/s) turns a fringe amplitude below it into a FitError.
    """
    fitted = rec.fitted if rec.fitted is not None else fit_sweep(rec).fitted
    if noise_floor is not None and fitted.amplitude < noise_floor:
        raise FitError(f"fringe amplitude {fitted.amplitude:g}/s is below the noise floor {noise_floor:g}/s")
    return fitted.visibility


def visibility_summary(records, noise_floor=None):
    """Per-setting visibilities, their average, and basis averages V_hv, V_da."""
    per = {}
    for rec in records:
        if rec.signal_setting in per:
            raise ValueError(f"duplicate sweep for setting {rec.signal_setting}")
        per[rec.signal_setting] = visibility(rec, noise_floor)
    out = {"per_setting": per, "average": float(np.mean(list(per.values())))}
    if "H" in per and "V" in per:
        out["V_hv"] = 0.5 * (per["H"] + per["V"])
    if "D" in per and "A" in per:
        out["V_da"] = 0.5 * (per["D"] + per["A"])
    return out


def add_constant(rec, A):
    return replace(rec, points=tuple((b, c + A, t) for b, c, t in rec.points), fitted=None)


def subtract_accidentals(rec, A, sigma=3.0):
    """Remove a constant accidental rate and refit.

    A corrected point that goes negative is clamped to zero (with a warning)
    when within ``sigma`` Poisson standard deviations of zero; further below
    that the subtraction is rejected.
    """
    if A < 0:
        raise ValueError("accidental rate must be non-negative")
    if A == 0:
        return fit_sweep(replace(rec, fitted=None))
    pts = []
    clamped = []
    for b, c, t in rec.points:
        v = c - A
        if v < 0:
            floor = sigma * math.sqrt(c / t)
            if -v > floor:
                raise OverSubtractionError(
                    f"subtracting {A:g}/s at {b:g} deg leaves {v:g}/s, beyond the {sigma:g}-sigma floor {floor:g}/s")
            clamped.append(b)
            v = 0.0
        pts.append((b, v, t))
    if clamped:
        warnings.warn(f"corrected counts clamped at zero for angles {clamped}", AccidentalClampWarning, stacklevel=2)
    return fit_sweep(SweepRecord(rec.signal_setting, tuple(pts)))


def chsh_from_visibility(V):
    _unit("visibility", V)
    return 2 * math.sqrt(2) * V


def fidelity_bound(V_hv, V_da):
    """Lower bound on the Bell-state fidelity from two basis visibilities."""
    _unit("V_hv", V_hv)
    _unit("V_da", V_da)
    return (1 + V_hv + 2 * V_da) / 4


@dataclass(frozen=True)
class ChshSettings:
    a: float
    a2: float
    b: float
    b2: float
    counts: Mapping = field(repr=False)   # (alpha, beta) -> (N++, N+-, N-+, N--)

    def __post_init__(self):
        if len({self.a, self.a2}) < 2 or len({self.b, self.b2}) < 2:
            raise ValueError("CHSH settings must be distinct")
        norm = {}
        for (al, be), quad in self.counts.items():
            quad = tuple(float(q) for q in quad)
            if len(quad) != 4 or any(q < 0 for q in quad):
                raise ValueError(f"setting ({al}, {be}) needs four non-negative rates")
            norm[(float(al), float(be))] = quad
        for pair in self.pairs:
            if pair not in norm:
                raise ValueError(f"missing counts for setting pair {pair}")
        object.__setattr__(self, "counts", norm)

    @property
    def pairs(self):
        return [(self.a, self.b), (self.a, self.b2), (self.a2, self.b), (self.a2, self.b2)]


def correlator(quad):
    npp, npm, nmp, nmm = quad
    total = npp + npm + nmp + nmm
    if total <= 0:
        raise ValueError("zero total counts in a CHSH setting pair")
    return (npp + nmm - npm - nmp) / total


def chsh_from_counts(c):
    """S = E(a,b) - E(a,b') + E(a',b) + E(a',b') from the sixteen projective rates."""
    e = [correlator(c.counts[p]) for p in c.pairs]
    return e[0] - e[1] + e[2] + e[3]


def synthesize_chsh(m, angles=CHSH_ANGLES, integration=1.0, seed=None):
    a, a2, b, b2 = angles
    rng = np.random.default_rng(seed) if seed is not None else None
    counts = {}
    for al in (a, a2):
        for be in (b, b2):
            quad = [coincidence_rate(m, al + da, be + db) for da, db in ((0, 0), (0, 90), (90, 0), (90, 90))]
            if rng is not None:
                quad = [rng.poisson(q * integration) / integration for q in quad]
            counts[(al, be)] = tuple(float(q) for q in quad)
    return ChshSettings(a, a2, b, b2, counts)


# --- CSV ---------------------------------------------------------------------

SWEEP_FIELDS = ("signal_setting", "beta_deg", "coincidences_per_s", "integration_s")
CHSH_FIELDS = ("alpha_deg", "beta_deg", "n_pp", "n_pm", "n_mp", "n_mm")


def _data_lines(text):
    return [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]


def sweeps_to_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_FIELDS)
    for rec in records:
        for b, c, t in rec.points:
            w.writerow([rec.signal_setting, repr(b), repr(c), repr(t)])
    return buf.getvalue()


def sweeps_from_csv(text):
    """Parse sweep rows (``#`` lines ignored) into one record per signal setting, in file order."""
    reader = csv.DictReader(_data_lines(text))
    missing = set(SWEEP_FIELDS) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"sweep CSV lacks columns {sorted(missing)}")
    grouped = {}
    for row in reader:
        grouped.setdefault(row["signal_setting"].strip(), []).append(
            (float(row["beta_deg"]), float(row["coincidences_per_s"]), float(row["integration_s"])))
    return [SweepRecord(k, tuple(v)) for k, v in grouped.items()]


def chsh_to_csv(c):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CHSH_FIELDS)
    for (al, be) in c.pairs:
        w.writerow([repr(al), repr(be), *(repr(q) for q in c.counts[(al, be)])])
    return buf.getvalue()


def chsh_from_csv(text):
    """Four rows in S order: (a,b), (a,b'), (a',b), (a',b')."""
    reader = csv.DictReader(_data_lines(text))
    missing = set(CHSH_FIELDS) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"CHSH CSV lacks columns {sorted(missing)}")
    rows = [(float(r["alpha_deg"]), float(r["beta_deg"]),
             tuple(float(r[k]) for k in CHSH_FIELDS[2:])) for r in reader]
    if len(rows) != 4:
        raise ValueError(f"CHSH CSV needs four setting rows, found {len(rows)}")
    (a, b, _), (_, b2, _), (a2, _, _), _ = rows
    return ChshSettings(a, a2, b, b2, {(al, be): q for al, be, q in rows})
