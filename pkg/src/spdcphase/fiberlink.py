"""Idler transmission over single-mode fiber: dispersion, time-of-flight, link budget."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from importlib import resources
from pathlib import Path

from .entanglement import SourceModel, accidental_rate, chsh_from_visibility

BAND = (1260.0, 1625.0)             # nm
S0_ENVELOPE = (0.073, 0.092)        # ps / (nm^2 km)
LAMBDA0_ENVELOPE = (1300.0, 1324.0)  # nm
WORST_CASE = {"S0": 0.092, "lambda0": 1300.0}
LINK_PRESETS = ("link62", "link93", "typical")


@dataclass(frozen=True)
class LinkParams:
    length_km: float
    attenuation_db: float = 0.0     # total, unless per_km is set
    per_km: bool = False
    S0: float = WORST_CASE["S0"]
    lambda0: float = WORST_CASE["lambda0"]
    window_ns: float | None = None  # overrides the source window when set
    dark_s: float = 0.0             # added to the source's detector dark rates
    dark_i: float = 0.0
    name: str = ""
    strict_envelope: bool = True

    def __post_init__(self):
        if not self.length_km > 0:
            raise ValueError(f"link length must be positive, got {self.length_km}")
        if self.attenuation_db < 0:
            raise ValueError(f"attenuation must be non-negative, got {self.attenuation_db} dB")
        if self.dark_s < 0 or self.dark_i < 0:
            raise ValueError("dark rates must be non-negative")
        if self.window_ns is not None and self.window_ns < 0:
            raise ValueError("coincidence window must be non-negative")
        if self.strict_envelope:
            if not S0_ENVELOPE[0] <= self.S0 <= S0_ENVELOPE[1]:
                raise ValueError(f"S0 {self.S0} outside the single-mode envelope {S0_ENVELOPE}")
            if not LAMBDA0_ENVELOPE[0] <= self.lambda0 <= LAMBDA0_ENVELOPE[1]:
                raise ValueError(f"lambda0 {self.lambda0} outside the single-mode envelope {LAMBDA0_ENVELOPE}")
        elif not self.S0 > 0:
            raise ValueError("S0 must be positive")

    @property
    def total_loss_db(self):
        return self.attenuation_db * self.length_km if self.per_km else self.attenuation_db

    @property
    def transmission(self):
        return 10 ** (-self.total_loss_db / 10)


def load_link(path):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return LinkParams(**data)


def builtin_link(name):
    if name not in LINK_PRESETS:
        raise KeyError(f"unknown link preset {name!r}; choose from {list(LINK_PRESETS)}")
    text = resources.files("spdcphase").joinpath("data").joinpath("links").joinpath(f"{name}.json").read_text(encoding="utf-8")
    return LinkParams(**json.loads(text))


def resolve_link(spec):
    if isinstance(spec, LinkParams):
        return spec
    if spec in LINK_PRESETS:
        return builtin_link(spec)
    if Path(spec).is_file():
        return load_link(spec)
    raise KeyError(f"{spec!r} is neither a link preset nor a file")


def _check_band(lam):
    if not BAND[0] <= lam <= BAND[1]:
        raise ValueError(f"wavelength {lam} nm outside the {BAND[0]:g}-{BAND[1]:g} nm fiber band")


def dispersion_coefficient(link, lam):
    """Chromatic dispersion D in ps/(nm km): (S0/4)(lam - lambda0^4/lam^3)."""
    _check_band(lam)
    return link.S0 / 4 * (lam - link.lambda0 ** 4 / lam ** 3)


def dispersion_broadening(link, lam, dlam):
    """Arrival-time spread (ps) for a spectral width ``dlam`` (nm)."""
    if dlam < 0:
        raise ValueError("spectral width must be non-negative")
    return dispersion_coefficient(link, lam) * link.length_km * dlam


def tof_linewidth(dt, link, lam):
    """Spectral width (nm) that produces arrival-time spread ``dt`` (ps)."""
    dl = dispersion_coefficient(link, lam) * link.length_km
    if not dl > 0:
        raise ValueError(f"dispersion-length product {dl:g} ps/nm is not positive at {lam} nm")
    if dt < 0:
        raise ValueError("time spread must be non-negative")
    return dt / dl


def link_budget(source, link, V_corrected=None):
    """Rates and predicted visibility after sending the idler through ``link``.

    ``V_corrected`` is the source's accidental-free visibility; it defaults to
    the mean of the model's two basis visibilities. Raw visibility follows
    from the fringe model R0 (1 +/- V)/2 + A at the attenuated rates.
    """
    t = link.transmission
    V = 0.5 * (source.V_hv + source.V_da) if V_corrected is None else V_corrected
    if not 0 <= V <= 1:
        raise ValueError("corrected visibility must lie in [0, 1]")
    window = source.window_ns if link.window_ns is None else link.window_ns
    # Pairs and idler singles both scale by t, so eta_s (pairs per idler single)
    # is unchanged while eta_i (pairs per signal single) drops by t.
    received = replace(source, pair_rate=source.pair_rate * t, eta_i=source.eta_i * t,
                       window_ns=window, dark_s=source.dark_s + link.dark_s,
                       dark_i=source.dark_i + link.dark_i)
    A = accidental_rate(received)
    R0 = received.pair_rate
    raw = R0 * V / (R0 + 2 * A) if R0 + 2 * A > 0 else 0.0
    return {
        "transmission": t,
        "loss_db": link.total_loss_db,
        "pair_rate": R0,
        "singles_signal": received.singles_signal,
        "singles_idler": received.singles_idler,
        "accidental_rate": A,
        "accidental_fraction": 2 * A / (R0 + 2 * A) if R0 + 2 * A > 0 else 1.0,
        "V_corrected": V,
        "V_raw": raw,
        "S_raw": chsh_from_visibility(raw),
        "S_corrected": chsh_from_visibility(V),
    }


def link_to_dict(link):
    return asdict(link)
