"""Acceptance gate: one test and one PASS/FAIL line per criterion.

Run under pytest (lines appear in the terminal summary) or directly with
``python tests/test_acceptance.py``.
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

sys.path.insert(0, str(Path(__file__).parent))

from spdcphase import dispersion as dsp
from spdcphase import entanglement as ent
from spdcphase import fiberlink as fib
from spdcphase import phasematch as pm
from spdcphase import spectrum as spc
from spdcphase.cli import cli

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # pragma: no cover
    ACCEPTANCE_LINES = []

PUMP, T_DESIGN, LENGTH = 405.75, 60.0, 30.0
REPORTED_VIS = {"H": 0.9933, "D": 0.9829, "V": 0.9969, "A": 0.9774}


def report(n, title, ok, detail):
    line = f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_01_triplet_table():
    rows = pm.triplet_table()
    failures = []
    for r in rows:
        cfg = r.config
        tol = 5.0 if r.crystal_name == "KTP" else 8.0
        s = r.solution
        if s is None:
            failures.append(f"{cfg.crystal}@{cfg.lambda_p:g}nm: {r.error}")
            continue
        ds, di = s.lambda_s - cfg.nominal_signal, s.lambda_i - cfg.nominal_idler
        if abs(ds) > tol or abs(di) > tol:
            failures.append(f"{cfg.crystal}@{cfg.lambda_p:g}nm: off by ({ds:+.1f}, {di:+.1f}) nm")
    n_ok = len(rows) - len(failures)
    detail = f"{n_ok}/{len(rows)} table rows within tolerance"
    if failures:
        detail += "; " + "; ".join(failures)
    report(1, "wavelength triplet table", not failures, detail)


def test_criterion_02_linewidth_table():
    targets = {"ncpm": (0.04, 0.24), "qpm0": (0.05, 0.35), "qpm2": (0.26, 1.75)}
    bad, got = [], []
    center = None
    for kind, (ts, ti) in targets.items():
        prof = spc.linewidths(pm.ktp_process(kind), PUMP, T_DESIGN, LENGTH)
        center = center or (prof.center_s, prof.center_i)
        for val, tgt, lab in ((prof.fwhm_s, ts, "s"), (prof.fwhm_i, ti, "i")):
            got.append(f"{kind}.{lab}={val:.4f}")
            if abs(val - tgt) > max(0.25 * tgt, 0.01):
                bad.append(f"{kind}.{lab}")
    center_ok = abs(center[0] - 562.0) <= 0.5 and abs(center[1] - 1459.4) <= 0.5
    report(2, "linewidth table", not bad and center_ok,
           f"center=({center[0]:.3f}, {center[1]:.3f}) nm; " + ", ".join(got) + (f"; out of band: {bad}" if bad else ""))


def test_criterion_03_tuning_rates():
    targets = {"ncpm": (0.13, 0.02), "qpm0": (0.84, 0.05), "qpm2": (2.03, 0.10)}
    parts, ok = [], True
    for kind, (r0, tol) in targets.items():
        rate = pm.tuning_curve(pm.ktp_process(kind), PUMP, (25.0, 100.0), 1.0).rate_i
        ok &= abs(rate - r0) <= tol
        parts.append(f"{kind}={rate:.4f} nm/degC (target {r0}+/-{tol})")
    report(3, "tuning rates 25-100 degC", ok, ", ".join(parts))


def test_criterion_04_temperature_span():
    span = pm.tuning_curve(pm.ktp_process("ncpm"), PUMP, (25.0, 100.0), 1.0).span_i
    in_measured = abs(span - 10.8) <= 2.0
    in_model = abs(span - 9.8) <= 1.5
    report(4, "NCPM idler span", in_measured and in_model,
           f"span={span:.3f} nm; measured band {in_measured}, model band {in_model}")


def test_criterion_05_wavevectors():
    c = dsp.builtin_crystal("ktp")
    (sol,) = pm.solve_spdc(pm.ktp_process("ncpm"), PUMP, T_DESIGN)
    ks = dsp.wavevector(c, "z", sol.lambda_s, T_DESIGN)
    ki = dsp.wavevector(c, "y", sol.lambda_i, T_DESIGN)
    report(5, "wavevectors at 60 degC", abs(ks - 21.0) <= 0.1 and abs(ki - 7.5) <= 0.1,
           f"k_s={ks:.4f}, k_i={ki:.4f} 1/um")


def test_criterion_06_entanglement_arithmetic():
    avg = float(np.mean(list(REPORTED_VIS.values())))
    S = ent.chsh_from_visibility(avg)
    V_hv = 0.5 * (REPORTED_VIS["H"] + REPORTED_VIS["V"])
    V_da = 0.5 * (REPORTED_VIS["D"] + REPORTED_VIS["A"])
    F = ent.fidelity_bound(V_hv, V_da)
    S_corr = ent.chsh_from_visibility(0.9928)
    ok = (abs(avg - 0.9877) <= 1e-4 and abs(S - 2.793) <= 0.002 and abs(F - 0.988) <= 0.002
          and abs(S_corr - 2.808) <= 0.002)
    report(6, "visibility, CHSH and fidelity arithmetic", ok,
           f"avg={100 * avg:.4f}%, S={S:.4f}, F>={F:.4f}, S_corrected={S_corr:.4f}")


def test_criterion_07_accidentals():
    A = ent.accidental_rate(ent.SourceModel(200000.0, eta_s=0.256, eta_i=0.274, window_ns=1.0))
    report(7, "accidental rate", 520 <= A <= 620, f"A={A:.1f}/s")


def test_criterion_08_fiber_dispersion():
    link93 = fib.LinkParams(93.0)
    link62 = fib.LinkParams(62.0)
    d93 = fib.dispersion_broadening(link93, 1455.0, 0.2)
    d62 = fib.dispersion_broadening(link62, 1455.0, 0.2)
    ok = abs(d93 - 226.0) <= 5.0 and math.isclose(d62 / d93, 62 / 93, rel_tol=1e-12)
    report(8, "fiber dispersion bound", ok, f"93 km: {d93:.2f} ps, 62 km: {d62:.2f} ps")


def _derivative_check():
    worst = 0.0
    rng = np.random.default_rng(20)
    for name in dsp.BUILTIN_CRYSTALS:
        c = dsp.builtin_crystal(name)
        tlo, thi = c.temperature_validity
        for label in c.axes:
            lo, hi = c.axis(label).wavelength_validity
            for _ in range(10):
                lam = rng.uniform(lo + 1, hi - 1)
                T = rng.uniform(tlo + 0.2, thi - 0.2) if thi - tlo > 1 else tlo
                fd = (dsp.refractive_index(c, label, lam + 0.1, T)
                      - dsp.refractive_index(c, label, lam - 0.1, T)) / 0.2
                worst = max(worst, abs(dsp.dn_dlambda(c, label, lam, T) - fd) / abs(fd))
                if thi - tlo > 1:
                    fdT = (dsp.refractive_index(c, label, lam, T + 0.1)
                           - dsp.refractive_index(c, label, lam, T - 0.1)) / 0.2
                    worst = max(worst, abs(dsp.dn_dT(c, label, lam, T) - fdT) / abs(fdT))
    return worst


def test_criterion_09_property_suites():
    ncpm = pm.ktp_process("ncpm")
    ktp = dsp.builtin_crystal("ktp")
    energy, round_trip, fwhm_law = 0.0, 0.0, 0.0
    for lp in (400.0, 405.75, 410.0, 420.0):
        for T in (25.0, 60.0, 100.0):
            (sol,) = pm.solve_spdc(ncpm, lp, T)
            energy = max(energy, abs(sol.energy_mismatch))
            for axes in ("zzz", "yyz"):
                bare = pm.ProcessSpec(ktp, *axes)
                period = pm.qpm_period(bare, lp, sol.lambda_s, T)
                found = pm.solve_spdc(bare.with_grating(period), lp, T)
                energy = max(energy, *(abs(s.energy_mismatch) for s in found))
                round_trip = max(round_trip, min(abs(s.lambda_s - sol.lambda_s) for s in found))
            prof = spc.linewidths(ncpm, lp, T, LENGTH)
            fwhm_law = max(fwhm_law, abs(prof.fwhm_i / (prof.fwhm_s * (prof.center_i / prof.center_s) ** 2) - 1))
    sweep_rt, chsh_gap = 0.0, 0.0
    for V in (0.5, 0.9, 0.9877, 0.9928, 1.0):
        m = ent.SourceModel(2e5, V_hv=V, V_da=V)
        for s in "HVDA":
            sweep_rt = max(sweep_rt, abs(ent.visibility(ent.synthesize_sweep(m, s)) - V))
        chsh_gap = max(chsh_gap, abs(ent.chsh_from_counts(ent.synthesize_chsh(m)) - ent.chsh_from_visibility(V)))
    deriv = _derivative_check()
    ok = (energy <= 1e-12 and round_trip <= 1e-6 and fwhm_law <= 1e-6 and sweep_rt <= 1e-6
          and chsh_gap <= 0.002 and deriv <= 1e-6)
    report(9, "property suites", ok,
           f"energy={energy:.1e} 1/nm, period round trip={round_trip:.1e} nm, fwhm law={fwhm_law:.1e}, "
           f"sweep round trip={sweep_rt:.1e}, chsh gap={chsh_gap:.1e}, derivative={deriv:.1e}")


def test_criterion_10_cli_determinism(tmp_path):
    from test_cli import GOLDEN, GOLDEN_RUNS
    mismatched = []
    for name, (args, code) in sorted(GOLDEN_RUNS.items()):
        outs = []
        for k in range(2):
            path = tmp_path / f"{name}.{k}"
            res = CliRunner().invoke(cli, args + ["--output", str(path)])
            assert res.exit_code == code, res.output
            outs.append(path.read_bytes())
        if outs[0] != outs[1] or outs[0] != (GOLDEN / f"{name}.csv").read_bytes():
            mismatched.append(name)
    report(10, "CLI golden determinism", not mismatched,
           f"{len(GOLDEN_RUNS) - len(mismatched)}/{len(GOLDEN_RUNS)} runs byte-identical to golden"
           + (f"; mismatched: {mismatched}" if mismatched else ""))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
