import json
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spdcphase import entanglement as ent
from spdcphase import fiberlink as fib

import oracles

WORST_93 = fib.LinkParams(93.0, 41.0)
SOURCE = ent.SourceModel(200000.0, V_hv=0.9928, V_da=0.9928, eta_s=0.256, eta_i=0.274, window_ns=1.0)


def test_zero_at_lambda0_and_sign():
    link = fib.LinkParams(10.0, S0=0.08, lambda0=1310.0)
    assert fib.dispersion_coefficient(link, 1310.0) == 0.0
    assert fib.dispersion_coefficient(link, 1300.0) < 0 < fib.dispersion_coefficient(link, 1320.0)


def test_worst_case_value():
    D = fib.dispersion_coefficient(WORST_93, 1455.0)
    assert D == pytest.approx(oracles.fiber_D(0.092, 1300.0, 1455.0), rel=1e-14)
    assert D == pytest.approx(12.14, abs=0.01)
    assert fib.dispersion_broadening(WORST_93, 1455.0, 0.2) == pytest.approx(226.0, abs=5.0)


def test_broadening_linear_in_length():
    short = replace(WORST_93, length_km=62.0)
    ratio = fib.dispersion_broadening(short, 1455.0, 0.2) / fib.dispersion_broadening(WORST_93, 1455.0, 0.2)
    assert ratio == pytest.approx(62 / 93, rel=1e-14)
    assert fib.dispersion_broadening(WORST_93, 1455.0, 0.0) == 0.0


def test_monotone_above_lambda0():
    lam = np.linspace(1301.0, 1625.0, 200)
    D = [fib.dispersion_coefficient(WORST_93, l) for l in lam]
    assert np.all(np.diff(D) > 0)


@settings(max_examples=60, deadline=None)
@given(L=st.floats(1.0, 200.0), lam=st.floats(1330.0, 1625.0), dl=st.floats(1e-3, 5.0),
       S0=st.floats(0.073, 0.092), lam0=st.floats(1300.0, 1324.0))
def test_tof_inverts_broadening(L, lam, dl, S0, lam0):
    link = fib.LinkParams(L, S0=S0, lambda0=lam0)
    dt = fib.dispersion_broadening(link, lam, dl)
    assert fib.tof_linewidth(dt, link, lam) == pytest.approx(dl, rel=1e-9)


def test_tof_definitional_fixture():
    link = fib.LinkParams(50.0, S0=0.09, lambda0=1310.0)
    dt = 0.20 * fib.dispersion_coefficient(link, 1455.0) * 50.0
    assert fib.tof_linewidth(dt, link, 1455.0) == pytest.approx(0.20, rel=1e-12)
    longer = replace(link, length_km=100.0)
    assert fib.tof_linewidth(dt, longer, 1455.0) == pytest.approx(0.10, rel=1e-12)
    with pytest.raises(ValueError):
        fib.tof_linewidth(dt, link, 1310.0)


def test_band_and_envelope_errors():
    with pytest.raises(ValueError):
        fib.dispersion_coefficient(WORST_93, 1000.0)
    with pytest.raises(ValueError):
        fib.LinkParams(10.0, S0=0.2)
    with pytest.raises(ValueError):
        fib.LinkParams(10.0, lambda0=1400.0)
    with pytest.raises(ValueError):
        fib.LinkParams(10.0, attenuation_db=-1.0)
    with pytest.raises(ValueError):
        fib.LinkParams(0.0)
    fib.LinkParams(10.0, S0=0.2, strict_envelope=False)


def test_zero_loss_is_identity():
    b = fib.link_budget(SOURCE, fib.LinkParams(10.0, 0.0))
    assert b["pair_rate"] == SOURCE.pair_rate
    assert b["singles_signal"] == SOURCE.singles_signal
    assert b["singles_idler"] == SOURCE.singles_idler
    assert b["accidental_rate"] == ent.accidental_rate(SOURCE)
    raw = ent.visibility(ent.synthesize_sweep(SOURCE, "H"))
    assert b["V_raw"] == pytest.approx(raw, abs=1e-9)


def test_loss_scales_idler_arm_only():
    b = fib.link_budget(SOURCE, fib.LinkParams(62.0, 24.0))
    t = 10 ** -2.4
    assert b["pair_rate"] == pytest.approx(SOURCE.pair_rate * t)
    assert b["singles_idler"] == pytest.approx(SOURCE.singles_idler * t)
    assert b["singles_signal"] == pytest.approx(SOURCE.singles_signal)


def test_62km_visibility_lower_bound():
    b = fib.link_budget(SOURCE, fib.builtin_link("link62"))
    assert b["V_raw"] >= 0.97
    assert b["S_corrected"] == pytest.approx(2 * math.sqrt(2) * 0.9928)


def test_dark_counts_open_gap_at_high_loss():
    b = fib.link_budget(SOURCE, replace(fib.builtin_link("link93"), dark_i=60.0))
    gap = b["V_corrected"] - b["V_raw"]
    assert gap == pytest.approx(0.011, abs=0.003)


@settings(max_examples=40, deadline=None)
@given(db=st.floats(0.0, 50.0), extra=st.floats(0.0, 10.0), dark=st.floats(0.0, 500.0))
def test_raw_visibility_nonincreasing_in_loss(db, extra, dark):
    a = fib.link_budget(SOURCE, fib.LinkParams(50.0, db, dark_i=dark))
    b = fib.link_budget(SOURCE, fib.LinkParams(50.0, db + extra, dark_i=dark))
    assert b["V_raw"] <= a["V_raw"] + 1e-12


def test_presets_and_files(tmp_path):
    for name in fib.LINK_PRESETS:
        assert fib.builtin_link(name).length_km > 0
    typical = fib.builtin_link("typical")
    assert typical.total_loss_db == pytest.approx(10.0)
    p = tmp_path / "l.json"
    p.write_text(json.dumps({"length_km": 12.0, "attenuation_db": 3.0}))
    assert fib.resolve_link(str(p)).length_km == 12.0
    with pytest.raises(KeyError):
        fib.resolve_link("nowhere")
