"""Temperature-dependent principal-axis refractive indices of nonlinear crystals.

Crystals are loaded from versioned JSON files (``*.crystal``); the field
layout is documented in ``docs/crystal-schema.md``. Wavelengths are vacuum
nanometres at the public API and micrometres inside the dispersion forms.
Temperatures are in degrees Celsius.

Supported Sellmeier forms (``lam`` in um):

``rational_two_pole``
    n^2 = A + B/(1 - C/lam^2) + D/(1 - E/lam^2) - F lam^2
``power_pole``
    n^2 = c0 + c1 lam^c2/(lam^2 - c3^c4) + c5 lam^c6/(lam^2 - c7^c8)
    + sum_k c_k lam^c_(k+1)   (k = 9, 11, ...)
``gayer``
    n^2 = a1 + a2/(lam^2 - a3^2) + a4/(lam^2 - a5^2) - a6 lam^2 at the
    reference temperature; the matching thermal form adds the
    temperature parameter f = (T - T0)(T + T0 + 546.32).

Supported thermal forms: ``none``, ``inverse_cubic``
(dn = n1 dT + n2 dT^2 with n1, n2 cubic in 1/lam) and ``gayer``.
"""

from __future__ import annotations

import functools
import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .exceptions import CrystalFileError, CrystalValidationError, OutOfRangeError

SCHEMA_VERSION = 1

SELLMEIER_FORMS = ("rational_two_pole", "power_pole", "gayer")
THERMAL_FORMS = ("none", "inverse_cubic", "gayer")

_GAYER_OFFSET = 2 * 273.16

BUILTIN_CRYSTALS = ("ktp", "rtp", "knbo3", "mgoln")


def _check_sellmeier(form_id, coefficients):
    n = len(coefficients)
    if form_id == "rational_two_pole" and n != 6:
        raise CrystalValidationError(f"rational_two_pole needs 6 coefficients, got {n}")
    if form_id == "power_pole" and (n < 9 or (n - 9) % 2):
        raise CrystalValidationError(
            f"power_pole needs 9 coefficients plus (coefficient, exponent) pairs, got {n}")
    if form_id == "gayer" and n != 6:
        raise CrystalValidationError(f"gayer Sellmeier needs 6 coefficients, got {n}")
    if form_id not in SELLMEIER_FORMS:
        raise CrystalValidationError(f"unknown Sellmeier form_id {form_id!r}")


@dataclass(frozen=True)
class SellmeierModel:
    """Room- (reference-) temperature dispersion of one principal axis."""

    form_id: str
    coefficients: tuple
    reference_temperature: float

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        _check_sellmeier(self.form_id, self.coefficients)

    def n_squared(self, lam):
        c = self.coefficients
        lam2 = lam * lam
        if self.form_id == "rational_two_pole":
            A, B, C, D, E, F = c
            return A + B / (1 - C / lam2) + D / (1 - E / lam2) - F * lam2
        if self.form_id == "power_pole":
            out = c[0] + c[1] * lam ** c[2] / (lam2 - c[3] ** c[4]) \
                + c[5] * lam ** c[6] / (lam2 - c[7] ** c[8])
            for k in range(9, len(c), 2):
                out = out + c[k] * lam ** c[k + 1]
            return out
        a1, a2, a3, a4, a5, a6 = c
        return a1 + a2 / (lam2 - a3 * a3) + a4 / (lam2 - a5 * a5) - a6 * lam2

    def d_n_squared(self, lam):
        """Derivative of n^2 with respect to wavelength in um."""
        c = self.coefficients
        lam2 = lam * lam
        if self.form_id == "rational_two_pole":
            _, B, C, D, E, F = c
            return (-2 * B * C / lam**3 / (1 - C / lam2) ** 2
                    - 2 * D * E / lam**3 / (1 - E / lam2) ** 2
                    - 2 * F * lam)
        if self.form_id == "power_pole":
            out = _pole_derivative(lam, c[1], c[2], c[3] ** c[4]) \
                + _pole_derivative(lam, c[5], c[6], c[7] ** c[8])
            for k in range(9, len(c), 2):
                if c[k + 1] != 0:
                    out = out + c[k] * c[k + 1] * lam ** (c[k + 1] - 1)
            return out
        _, a2, a3, a4, a5, a6 = c
        return (-2 * lam * a2 / (lam2 - a3 * a3) ** 2
                - 2 * lam * a4 / (lam2 - a5 * a5) ** 2
                - 2 * a6 * lam)

    def index(self, lam):
        return np.sqrt(self.n_squared(lam))


def _pole_derivative(lam, strength, power, pole):
    # d/dlam [s lam^p / (lam^2 - q)]
    den = lam * lam - pole
    num_d = power * lam ** (power - 1) * den if power != 0 else 0.0
    return strength * (num_d - lam**power * 2 * lam) / den**2


@dataclass(frozen=True)
class ThermalModel:
    """Additive index correction dn(lam, T), zero at the reference temperature."""

    form_id: str
    coefficients: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        n = len(self.coefficients)
        if self.form_id not in THERMAL_FORMS:
            raise CrystalValidationError(f"unknown thermal form_id {self.form_id!r}")
        expected = {"none": 0, "inverse_cubic": 8, "gayer": 4}[self.form_id]
        if n != expected:
            raise CrystalValidationError(
                f"thermal form {self.form_id} needs {expected} coefficients, got {n}")

    def _cubics(self, lam):
        a = self.coefficients[:4]
        b = self.coefficients[4:]
        n1 = a[0] + a[1] / lam + a[2] / lam**2 + a[3] / lam**3
        n2 = b[0] + b[1] / lam + b[2] / lam**2 + b[3] / lam**3
        return n1, n2

    def _cubic_derivs(self, lam):
        a = self.coefficients[:4]
        b = self.coefficients[4:]
        d1 = -a[1] / lam**2 - 2 * a[2] / lam**3 - 3 * a[3] / lam**4
        d2 = -b[1] / lam**2 - 2 * b[2] / lam**3 - 3 * b[3] / lam**4
        return d1, d2


@dataclass(frozen=True)
class AxisModel:
    """Dispersion of one principal axis: Sellmeier base plus thermal correction."""

    label: str
    sellmeier: SellmeierModel
    thermal: ThermalModel
    wavelength_validity: tuple
    source: str = ""

    @property
    def reference_temperature(self):
        return self.sellmeier.reference_temperature

    def _gayer_n2(self, lam, T):
        a1, a2, a3, a4, a5, a6 = self.sellmeier.coefficients
        b1, b2, b3, b4 = self.thermal.coefficients
        T0 = self.reference_temperature
        f = (T - T0) * (T + T0 + _GAYER_OFFSET)
        g = a3 + b3 * f
        lam2 = lam * lam
        return a1 + b1 * f + (a2 + b2 * f) / (lam2 - g * g) + (a4 + b4 * f) / (lam2 - a5 * a5) - a6 * lam2

    def delta_n(self, lam, T):
        dT = T - self.reference_temperature
        form = self.thermal.form_id
        if form == "none":
            return 0.0 * lam * dT
        if form == "inverse_cubic":
            n1, n2 = self.thermal._cubics(lam)
            return n1 * dT + n2 * dT * dT
        return np.sqrt(self._gayer_n2(lam, T)) - self.sellmeier.index(lam)

    def index(self, lam, T):
        return self.sellmeier.index(lam) + self.delta_n(lam, T)

    def d_index_dT(self, lam, T):
        form = self.thermal.form_id
        if form == "none":
            return 0.0 * lam * T
        if form == "inverse_cubic":
            n1, n2 = self.thermal._cubics(lam)
            return n1 + 2 * n2 * (T - self.reference_temperature)
        a1, a2, a3, a4, a5, a6 = self.sellmeier.coefficients
        b1, b2, b3, b4 = self.thermal.coefficients
        T0 = self.reference_temperature
        f = (T - T0) * (T + T0 + _GAYER_OFFSET)
        g = a3 + b3 * f
        lam2 = lam * lam
        dn2_df = (b1 + b2 / (lam2 - g * g)
                  + (a2 + b2 * f) * 2 * g * b3 / (lam2 - g * g) ** 2
                  + b4 / (lam2 - a5 * a5))
        df_dT = 2 * T + _GAYER_OFFSET
        return dn2_df * df_dT / (2 * np.sqrt(self._gayer_n2(lam, T)))

    def d_index_dlambda(self, lam, T):
        """dn/dlam in 1/um at temperature T."""
        form = self.thermal.form_id
        if form == "gayer":
            a1, a2, a3, a4, a5, a6 = self.sellmeier.coefficients
            b1, b2, b3, b4 = self.thermal.coefficients
            T0 = self.reference_temperature
            f = (T - T0) * (T + T0 + _GAYER_OFFSET)
            g = a3 + b3 * f
            lam2 = lam * lam
            dn2 = (-2 * lam * (a2 + b2 * f) / (lam2 - g * g) ** 2
                   - 2 * lam * (a4 + b4 * f) / (lam2 - a5 * a5) ** 2
                   - 2 * a6 * lam)
            return dn2 / (2 * np.sqrt(self._gayer_n2(lam, T)))
        base = self.sellmeier.d_n_squared(lam) / (2 * self.sellmeier.index(lam))
        if form == "inverse_cubic":
            d1, d2 = self.thermal._cubic_derivs(lam)
            dT = T - self.reference_temperature
            base = base + d1 * dT + d2 * dT * dT
        return base


@dataclass(frozen=True)
class CrystalDispersion:
    """A crystal's principal-axis dispersion models and metadata.

    ``axis_models`` maps axis label to :class:`AxisModel`. The object is
    immutable after construction and safe to share between threads.
    """

    name: str
    axes: tuple
    axis_models: Mapping
    temperature_validity: tuple
    metadata: Mapping = field(default_factory=dict)
    formula: str = ""
    source_path: str = ""
    sha256: str = ""

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        object.__setattr__(self, "axis_models", MappingProxyType(dict(self.axis_models)))
        object.__setattr__(self, "metadata", MappingProxyType(dict(self.metadata)))
        object.__setattr__(self, "temperature_validity", tuple(float(t) for t in self.temperature_validity))

    @property
    def wavelength_validity(self):
        """Intersection of the per-axis wavelength ranges, in nm."""
        lo = max(m.wavelength_validity[0] for m in self.axis_models.values())
        hi = min(m.wavelength_validity[1] for m in self.axis_models.values())
        return (lo, hi)

    def axis(self, label):
        try:
            return self.axis_models[label]
        except KeyError:
            raise KeyError(f"crystal {self.name} has no axis {label!r}; axes are {self.axes}") from None

    @property
    def nonlinear_coefficients(self):
        return dict(self.metadata.get("nonlinear_coefficients_pm_per_V", {}))


def _check_range(crystal, model, wavelength_nm, T):
    wl = np.asarray(wavelength_nm, dtype=float)
    lo, hi = model.wavelength_validity
    where = f"{crystal.name} axis {model.label}"
    if np.any(wl < lo):
        raise OutOfRangeError("wavelength", float(np.min(wl)), "min", lo, where)
    if np.any(wl > hi):
        raise OutOfRangeError("wavelength", float(np.max(wl)), "max", hi, where)
    tlo, thi = crystal.temperature_validity
    if T < tlo:
        raise OutOfRangeError("temperature", float(T), "min", tlo, crystal.name)
    if T > thi:
        raise OutOfRangeError("temperature", float(T), "max", thi, crystal.name)
    return wl / 1000.0


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def refractive_index(crystal, axis, wavelength_nm, T):
    """Refractive index along ``axis`` at vacuum wavelength (nm) and T (degC).

    Accepts scalar or array wavelengths. Raises :class:`OutOfRangeError` when
    outside the validity range; there is no extrapolation.
    """
    model = crystal.axis(axis)
    lam = _check_range(crystal, model, wavelength_nm, T)
    return _scalar(model.index(lam, T))


def sellmeier_index(crystal, axis, wavelength_nm):
    """Index from the Sellmeier base only (the reference-temperature value)."""
    model = crystal.axis(axis)
    lam = _check_range(crystal, model, wavelength_nm, model.reference_temperature)
    return _scalar(model.sellmeier.index(lam))


def dn_dT(crystal, axis, wavelength_nm, T):
    """Thermo-optic coefficient dn/dT in 1/degC (analytic)."""
    model = crystal.axis(axis)
    lam = _check_range(crystal, model, wavelength_nm, T)
    return _scalar(model.d_index_dT(lam, T))


def dn_dlambda(crystal, axis, wavelength_nm, T):
    """Analytic dn/dlambda in 1/nm."""
    model = crystal.axis(axis)
    lam = _check_range(crystal, model, wavelength_nm, T)
    return _scalar(model.d_index_dlambda(lam, T) / 1000.0)


def group_index(crystal, axis, wavelength_nm, T):
    """Group index n - lam dn/dlam."""
    model = crystal.axis(axis)
    lam = _check_range(crystal, model, wavelength_nm, T)
    return _scalar(model.index(lam, T) - lam * model.d_index_dlambda(lam, T))


def wavevector(crystal, axis, wavelength_nm, T):
    """Wavevector magnitude 2 pi n / lam in 1/um."""
    n = refractive_index(crystal, axis, wavelength_nm, T)
    return _scalar(2 * math.pi * np.asarray(n) / (np.asarray(wavelength_nm, dtype=float) / 1000.0))


# --- file IO -----------------------------------------------------------------

def _require(d, key, ctx):
    if key not in d:
        raise CrystalValidationError(f"missing field {key!r} in {ctx}")
    return d[key]


def _range_pair(value, what):
    try:
        lo, hi = (float(v) for v in value)
    except (TypeError, ValueError):
        raise CrystalValidationError(f"{what} must be a [min, max] pair") from None
    return lo, hi


def crystal_from_dict(doc, source_path="", sha256=""):
    """Build and validate a :class:`CrystalDispersion` from a parsed document."""
    if not isinstance(doc, dict):
        raise CrystalValidationError("crystal document must be a JSON object")
    version = _require(doc, "schema_version", "crystal file")
    if version != SCHEMA_VERSION:
        raise CrystalValidationError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    name = _require(doc, "name", "crystal file")
    axes = _require(doc, "axes", "crystal file")
    if not isinstance(axes, list) or not axes or len(set(axes)) != len(axes):
        raise CrystalValidationError("axes must be a non-empty list of unique labels")
    tlo, thi = _range_pair(_require(doc, "temperature_validity", "crystal file"), "temperature_validity")
    if tlo > thi:
        raise CrystalValidationError(f"temperature_validity inverted: {tlo} > {thi}")
    per_axis = _require(doc, "dispersion", "crystal file")
    if set(per_axis) != set(axes):
        missing = sorted(set(axes) - set(per_axis))
        extra = sorted(set(per_axis) - set(axes))
        raise CrystalValidationError(f"dispersion entries do not match axes (missing {missing}, extra {extra})")

    models = {}
    for label in axes:
        entry = per_axis[label]
        ctx = f"axis {label}"
        s = _require(entry, "sellmeier", ctx)
        sell = SellmeierModel(
            form_id=_require(s, "form_id", ctx + " sellmeier"),
            coefficients=_require(s, "coefficients", ctx + " sellmeier"),
            reference_temperature=float(_require(s, "reference_temperature", ctx + " sellmeier")),
        )
        t = _require(entry, "thermal", ctx)
        therm = ThermalModel(form_id=_require(t, "form_id", ctx + " thermal"),
                             coefficients=t.get("coefficients", []))
        if (therm.form_id == "gayer") != (sell.form_id == "gayer"):
            raise CrystalValidationError(f"{ctx}: gayer thermal form requires the gayer Sellmeier form")
        lo, hi = _range_pair(_require(entry, "wavelength_validity", ctx), ctx + " wavelength_validity")
        if not lo < hi:
            raise CrystalValidationError(f"{ctx}: wavelength_validity inverted: {lo} >= {hi}")
        if lo <= 0:
            raise CrystalValidationError(f"{ctx}: wavelengths must be positive")
        if not tlo <= sell.reference_temperature <= thi:
            raise CrystalValidationError(f"{ctx}: reference temperature outside temperature_validity")
        models[label] = AxisModel(label=label, sellmeier=sell, thermal=therm,
                                  wavelength_validity=(lo, hi), source=entry.get("source", ""))

    crystal = CrystalDispersion(
        name=name, axes=tuple(axes), axis_models=models,
        temperature_validity=(tlo, thi), metadata=doc.get("metadata", {}),
        formula=doc.get("formula", ""), source_path=str(source_path), sha256=sha256,
    )
    _check_physical(crystal)
    return crystal


def _check_physical(crystal):
    tlo, thi = crystal.temperature_validity
    temps = sorted({tlo, thi, 0.5 * (tlo + thi)})
    for label, model in crystal.axis_models.items():
        lo, hi = model.wavelength_validity
        lam = np.linspace(lo, hi, 257) / 1000.0
        for T in temps:
            with np.errstate(invalid="ignore", divide="ignore"):
                n = model.index(lam, T)
            if not np.all(np.isfinite(n)) or np.any(n <= 1) or np.any(n >= 5):
                raise CrystalValidationError(
                    f"{crystal.name} axis {label}: index leaves (1, 5) within validity at T={T}")


def crystal_to_dict(crystal):
    """Inverse of :func:`crystal_from_dict`."""
    dispersion = {}
    for label in crystal.axes:
        m = crystal.axis_models[label]
        entry = {
            "sellmeier": {
                "form_id": m.sellmeier.form_id,
                "coefficients": list(m.sellmeier.coefficients),
                "reference_temperature": m.sellmeier.reference_temperature,
            },
            "thermal": {"form_id": m.thermal.form_id, "coefficients": list(m.thermal.coefficients)},
            "wavelength_validity": list(m.wavelength_validity),
        }
        if m.source:
            entry["source"] = m.source
        dispersion[label] = entry
    doc = {"schema_version": SCHEMA_VERSION, "name": crystal.name}
    if crystal.formula:
        doc["formula"] = crystal.formula
    doc["axes"] = list(crystal.axes)
    doc["temperature_validity"] = list(crystal.temperature_validity)
    doc["dispersion"] = dispersion
    doc["metadata"] = _plain(crystal.metadata)
    return doc


def _plain(obj):
    if isinstance(obj, Mapping):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def load_crystal(path):
    """Load and validate a crystal-data file."""
    path = Path(path)
    raw = path.read_bytes()
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CrystalFileError(f"{path}: {exc}") from exc
    return crystal_from_dict(doc, source_path=path, sha256=hashlib.sha256(raw).hexdigest())


def dump_crystal(crystal, path):
    """Write ``crystal`` to ``path`` in the crystal-data format."""
    text = json.dumps(crystal_to_dict(crystal), indent=2) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def builtin_crystal_path(name):
    key = name.lower()
    if key not in BUILTIN_CRYSTALS:
        raise KeyError(f"unknown built-in crystal {name!r}; choose from {BUILTIN_CRYSTALS}")
    return resources.files("spdcphase") / "data" / "crystals" / f"{key}.crystal"


@functools.lru_cache(maxsize=None)
def builtin_crystal(name):
    """Load one of the shipped crystal files by short name (ktp, rtp, knbo3, mgoln)."""
    with resources.as_file(builtin_crystal_path(name)) as p:
        return load_crystal(p)


def resolve_crystal(spec):
    """Accept a built-in short name, a file path, or an already-loaded crystal."""
    if isinstance(spec, CrystalDispersion):
        return spec
    if str(spec).lower() in BUILTIN_CRYSTALS:
        return builtin_crystal(str(spec).lower())
    return load_crystal(spec)
