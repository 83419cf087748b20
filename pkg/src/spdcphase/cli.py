"""``spdcphase`` command line: one subcommand per computation, CSV or JSON out.

Every output starts with provenance (tool version, crystal-file hashes, the
fully resolved configuration). Exit codes: 0 success, 2 usage error,
3 solver or validation error; failures print one ``error {json}`` line on
stderr. Output schemas are listed in docs/cli-schemas.md.
"""

from __future__ import annotations

import csv
import functools
import io
import json
import math
import sys

import click

from . import __version__
from . import entanglement as ent
from . import fiberlink as fib
from . import phasematch as pm
from . import spectrum as spc
from .dispersion import resolve_crystal
from .exceptions import (CrystalFileError, CrystalValidationError, FitError, OverSubtractionError,
                         SolverError, SpectrumError)

SCHEMA_VERSION = 1
EXIT_DOMAIN_ERROR = 3

PROCESS_PRESETS = {"ncpm-ktp": "ncpm", "qpm0-ktp": "qpm0", "qpm2-ktp": "qpm2"}

# Source defaults: a ~200k pairs/s |Phi-> source with 1 ns coincidence window.
SOURCE_DEFAULTS = {"pair_rate": 200000.0, "eta_s": 0.256, "eta_i": 0.274, "window_ns": 1.0}

_DOMAIN_ERRORS = (ValueError, KeyError, OSError, SolverError, SpectrumError, FitError,
                  OverSubtractionError, CrystalFileError, CrystalValidationError)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


class Emitter:
    """Collects provenance and rows, then writes CSV or JSON deterministically."""

    def __init__(self, command, config, crystals=()):
        self.command = command
        self.config = config
        self.crystals = {}
        for c in crystals:
            self.add_crystal(c)

    def add_crystal(self, c):
        self.crystals[c.name] = c.sha256

    def provenance(self):
        return {
            "tool": "spdcphase",
            "version": __version__,
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "crystals": dict(sorted(self.crystals.items())),
            "config": self.config,
        }

    def render(self, fields, rows, fmt):
        if fmt == "json":
            doc = {"provenance": self.provenance(),
                   "rows": [{k: _jsonable(r.get(k)) for k in fields} for r in rows]}
            return json.dumps(doc, indent=2, sort_keys=False) + "\n"
        buf = io.StringIO()
        prov = self.provenance()
        buf.write(f"# spdcphase {prov['version']} schema {prov['schema_version']} command {self.command}\n")
        for name, sha in prov["crystals"].items():
            buf.write(f"# crystal {name} sha256={sha}\n")
        buf.write("# config " + json.dumps(self.config, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(r.get(k)) for k in fields])
        return buf.getvalue()

    def write(self, fields, rows, fmt, output):
        text = self.render(fields, rows, fmt)
        if output in (None, "-"):
            click.echo(text, nl=False)
        else:
            with open(output, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)


def _domain_errors(f):
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except _DOMAIN_ERRORS as exc:
            msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
            click.echo("error " + json.dumps({"type": type(exc).__name__, "message": str(msg)}), err=True)
            sys.exit(EXIT_DOMAIN_ERROR)
    return wrapper


def output_options(f):
    f = click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
                     show_default=True, help="Output format.")(f)
    f = click.option("--output", "-o", default=None, help="Write to this file instead of stdout.")(f)
    return f


def process_options(f):
    opts = [
        click.option("--process", "process", default="ncpm-ktp", show_default=True,
                     help="Preset (ncpm-ktp, qpm0-ktp, qpm2-ktp) or 'custom' with --axes."),
        click.option("--crystal", default="ktp", show_default=True, help="Built-in crystal name or crystal file."),
        click.option("--axes", default=None, help="Custom process axes as pump,signal,idler (e.g. y,z,y)."),
        click.option("--period", type=float, default=None, help="Poling period in um (overrides preset design)."),
        click.option("--order", type=int, default=1, show_default=True, help="QPM order."),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


def _build_process(process, crystal, axes, period, order):
    c = resolve_crystal(crystal)
    if axes is not None:
        parts = [a.strip() for a in axes.split(",")]
        if len(parts) != 3:
            raise click.BadParameter("expected three comma-separated axes", param_hint="--axes")
        p = pm.ProcessSpec(c, *parts)
        if period is not None:
            p = p.with_grating(period, order)
        return p
    if process not in PROCESS_PRESETS:
        raise click.BadParameter(f"choose from {sorted(PROCESS_PRESETS)} or give --axes", param_hint="--process")
    return pm.ktp_process(PROCESS_PRESETS[process], crystal=c, period=period, m=order)


def _process_config(p, process, axes):
    g = p.grating
    return {"process": process if axes is None else "custom", "process_label": p.label,
            "crystal": p.crystal.name, "axes": [p.pump_axis, p.signal_axis, p.idler_axis],
            "period_um": None if g is None else g.period, "order": None if g is None else g.order,
            "search_nm": None if p.search is None else list(p.search)}


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="spdcphase")
def cli():
    """SPDC source design: phasematching, linewidths, entanglement metrics, fiber links."""


@cli.command()
@process_options
@click.option("--pump", type=float, required=True, help="Pump wavelength, nm.")
@click.option("--temperature", "-T", type=float, required=True, help="Crystal temperature, degC.")
@click.option("--search", nargs=2, type=float, default=None, help="Signal search window LO HI, nm.")
@click.option("--step", type=float, default=pm.DEFAULT_GRID_STEP, show_default=True, help="Scan grid step, nm.")
@output_options
@_domain_errors
def solve(process, crystal, axes, period, order, pump, temperature, search, step, fmt, output):
    """Phasematched (signal, idler) pairs for one pump wavelength and temperature."""
    p = _build_process(process, crystal, axes, period, order)
    sols = pm.solve_spdc(p, pump, temperature, search=search, step=step)
    cfg = {**_process_config(p, process, axes), "pump_nm": pump, "temperature_c": temperature,
           "search_nm": list(search) if search else _process_config(p, process, axes)["search_nm"],
           "step_nm": step}
    rows = [{"lambda_p_nm": s.lambda_p, "lambda_s_nm": s.lambda_s, "lambda_i_nm": s.lambda_i,
             "temperature_c": s.temperature, "delta_k_per_um": s.delta_k} for s in sols]
    Emitter("solve", cfg, [p.crystal]).write(
        ["lambda_p_nm", "lambda_s_nm", "lambda_i_nm", "temperature_c", "delta_k_per_um"], rows, fmt, output)


@cli.command()
@process_options
@click.option("--pump", type=float, required=True, help="Pump wavelength, nm.")
@click.option("--from", "t_from", type=float, required=True, help="First temperature, degC.")
@click.option("--to", "t_to", type=float, required=True, help="Last temperature, degC.")
@click.option("--step", type=float, default=1.0, show_default=True, help="Temperature step, degC.")
@click.option("--grid-step", type=float, default=pm.DEFAULT_GRID_STEP, show_default=True,
              help="Wavelength scan step, nm.")
@output_options
@_domain_errors
def tune(process, crystal, axes, period, order, pump, t_from, t_to, step, grid_step, fmt, output):
    """Signal and idler versus temperature; the least-squares rates go in the header."""
    p = _build_process(process, crystal, axes, period, order)
    curve = pm.tuning_curve(p, pump, (t_from, t_to), step=step, grid_step=grid_step)
    cfg = {**_process_config(p, process, axes), "pump_nm": pump, "from_c": t_from, "to_c": t_to,
           "step_c": step, "grid_step_nm": grid_step,
           "rate_i_nm_per_c": curve.rate_i, "rate_s_nm_per_c": curve.rate_s}
    rows = [{"temperature_c": T, "lambda_s_nm": s, "lambda_i_nm": i} for T, s, i in curve.samples]
    Emitter("tune", cfg, [p.crystal]).write(["temperature_c", "lambda_s_nm", "lambda_i_nm"], rows, fmt, output)


TRIPLET_FIELDS = ["crystal", "pump_axis", "signal_axis", "idler_axis", "lambda_p_nm", "temperature_c",
                  "lambda_s_nm", "lambda_i_nm", "nominal_s_nm", "nominal_i_nm", "d_label", "d_pm_per_v",
                  "n_solutions", "error"]


def _read_triplet_config(path):
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    out = []
    for r in csv.DictReader(lines):
        def opt(key):
            v = (r.get(key) or "").strip()
            return float(v) if v else None
        out.append(pm.TripletConfig(r["crystal"].strip(), r["pump_axis"].strip(), r["signal_axis"].strip(),
                                    r["idler_axis"].strip(), float(r["lambda_p_nm"]), float(r["temperature_c"]),
                                    (r.get("d_label") or "").strip(), opt("nominal_s_nm"), opt("nominal_i_nm")))
    return out


@cli.command()
@click.option("--all", "use_all", is_flag=True, help="Solve the built-in reference triplet table.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="CSV of rows: crystal,pump_axis,signal_axis,idler_axis,lambda_p_nm,temperature_c[,d_label,...].")
@output_options
@_domain_errors
def triplets(use_all, config_path, fmt, output):
    """NCPM wavelength triplets for a table of crystals, axes, pumps and temperatures.

    Rows that fail (for example outside a dispersion model's validity) are
    reported with an error message; the exit code is then 3.
    """
    if use_all == (config_path is not None):
        raise click.UsageError("give exactly one of --all or --config")
    configs = pm.REFERENCE_TRIPLETS if use_all else _read_triplet_config(config_path)
    table = pm.triplet_table(configs)
    em = Emitter("triplets", {"source": "reference" if use_all else "config", "rows": len(configs),
                              "step_nm": pm.DEFAULT_GRID_STEP})
    rows = []
    for r in table:
        cfg = r.config
        try:
            em.add_crystal(resolve_crystal(cfg.crystal))
        except _DOMAIN_ERRORS:
            pass
        sol = r.solution
        rows.append({"crystal": r.crystal_name, "pump_axis": cfg.pump_axis, "signal_axis": cfg.signal_axis,
                     "idler_axis": cfg.idler_axis, "lambda_p_nm": cfg.lambda_p, "temperature_c": cfg.temperature,
                     "lambda_s_nm": None if sol is None else sol.lambda_s,
                     "lambda_i_nm": None if sol is None else sol.lambda_i,
                     "nominal_s_nm": cfg.nominal_signal, "nominal_i_nm": cfg.nominal_idler,
                     "d_label": cfg.d_label, "d_pm_per_v": r.d_value, "n_solutions": len(r.solutions),
                     "error": r.error})
    em.write(TRIPLET_FIELDS, rows, fmt, output)
    if any(r.error for r in table):
        sys.exit(EXIT_DOMAIN_ERROR)


@cli.command()
@process_options
@click.option("--pump", type=float, default=pm.DESIGN_PUMP, show_default=True, help="Pump wavelength, nm.")
@click.option("--temperature", "-T", type=float, default=pm.DESIGN_TEMPERATURE, show_default=True,
              help="Crystal temperature, degC.")
@click.option("--length", type=float, default=30.0, show_default=True, help="Crystal length, mm.")
@click.option("--profile", is_flag=True, help="Emit the sampled spectrum instead of the summary row.")
@output_options
@_domain_errors
def linewidth(process, crystal, axes, period, order, pump, temperature, length, profile, fmt, output):
    """Signal and idler FWHM of the sinc^2 phasematching spectrum."""
    p = _build_process(process, crystal, axes, period, order)
    prof = spc.linewidths(p, pump, temperature, length)
    cfg = {**_process_config(p, process, axes), "pump_nm": pump, "temperature_c": temperature,
           "length_mm": length, "profile": profile}
    em = Emitter("linewidth", cfg, [p.crystal])
    if profile:
        em.write(["lambda_s_nm", "lambda_i_nm", "intensity"], prof.rows(), fmt, output)
        return
    row = {"process": p.label, "center_s_nm": prof.center_s, "center_i_nm": prof.center_i,
           "fwhm_s_nm": prof.fwhm_s, "fwhm_i_nm": prof.fwhm_i, "length_mm": length}
    em.write(list(row), [row], fmt, output)


@cli.command()
@click.option("--process", "process", default="qpm0-ktp", show_default=True,
              help="QPM preset whose axes are poled (qpm0-ktp, qpm2-ktp) or 'custom' with --axes.")
@click.option("--crystal", default="ktp", show_default=True, help="Built-in crystal name or crystal file.")
@click.option("--axes", default=None, help="Custom axes pump,signal,idler.")
@click.option("--pump", type=float, default=pm.DESIGN_PUMP, show_default=True, help="Pump wavelength, nm.")
@click.option("--temperature", "-T", type=float, default=pm.DESIGN_TEMPERATURE, show_default=True,
              help="Design temperature, degC.")
@click.option("--signal", type=float, default=None,
              help="Target signal wavelength, nm. Default: the NCPM y,z,y solution at the design point.")
@click.option("--order", type=int, default=1, show_default=True, help="QPM order (odd).")
@click.option("--alpha", type=float, default=pm.DEFAULT_EXPANSION_COEFFICIENT, show_default=True,
              help="Thermal expansion coefficient of the period, 1/degC.")
@click.option("--delta-t", type=float, default=75.0, show_default=True,
              help="Temperature excursion for the expansion term, degC.")
@output_options
@_domain_errors
def poling(process, crystal, axes, pump, temperature, signal, order, alpha, delta_t, fmt, output):
    """Poling period that phasematches a target triplet, plus its thermal-expansion term."""
    c = resolve_crystal(crystal)
    if axes is not None:
        parts = [a.strip() for a in axes.split(",")]
        if len(parts) != 3:
            raise click.BadParameter("expected three comma-separated axes", param_hint="--axes")
        p = pm.ProcessSpec(c, *parts)
    else:
        key = PROCESS_PRESETS.get(process)
        if key not in ("qpm0", "qpm2"):
            raise click.BadParameter("choose qpm0-ktp or qpm2-ktp, or give --axes", param_hint="--process")
        pa, sa, ia, label = pm.KTP_PROCESSES[key]
        p = pm.ProcessSpec(c, pa, sa, ia, label=label)
    if signal is None:
        ref = pm.ProcessSpec(c, *pm.KTP_PROCESSES["ncpm"][:3])
        sols = pm.solve_spdc(ref, pump, temperature)
        if len(sols) != 1:
            raise SolverError(f"NCPM reference has {len(sols)} solutions at the design point")
        signal = sols[0].lambda_s
    period = pm.qpm_period(p, pump, signal, temperature, order)
    # Mismatch a temperature change induces in the birefringent part, for comparison.
    dk_T = abs(pm.delta_k(p, pump, signal, temperature + delta_t) - pm.delta_k(p, pump, signal, temperature))
    term = pm.poling_thermal_term(period, order, alpha, delta_t)
    cfg = {"process": process if axes is None else "custom", "crystal": c.name,
           "axes": [p.pump_axis, p.signal_axis, p.idler_axis], "pump_nm": pump, "temperature_c": temperature,
           "signal_nm": signal, "order": order, "alpha_per_c": alpha, "delta_t_c": delta_t}
    row = {"process": p.label, "lambda_p_nm": pump, "lambda_s_nm": signal,
           "lambda_i_nm": float(pm.idler_wavelength(pump, signal)), "temperature_c": temperature,
           "order": order, "period_um": period, "expansion_dk_per_um": term,
           "index_dk_per_um": dk_T, "expansion_ratio": term / dk_T if dk_T > 0 else None}
    Emitter("poling", cfg, [c]).write(list(row), [row], fmt, output)


SWEEP_SUMMARY_FIELDS = ["setting", "visibility", "offset", "amplitude", "phase_deg", "chsh_s", "fidelity_lower"]


@cli.command()
@click.option("--ideal", is_flag=True, help="Perfect source: unit visibilities, no accidentals.")
@click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Fit measured sweeps from CSV instead of synthesizing.")
@click.option("--pair-rate", type=float, default=SOURCE_DEFAULTS["pair_rate"], show_default=True)
@click.option("--v-hv", type=float, default=1.0, show_default=True, help="True H/V-basis visibility.")
@click.option("--v-da", type=float, default=1.0, show_default=True, help="True D/A-basis visibility.")
@click.option("--eta-s", type=float, default=SOURCE_DEFAULTS["eta_s"], show_default=True)
@click.option("--eta-i", type=float, default=SOURCE_DEFAULTS["eta_i"], show_default=True)
@click.option("--window", type=float, default=SOURCE_DEFAULTS["window_ns"], show_default=True,
              help="Coincidence window, ns.")
@click.option("--angle-step", type=float, default=5.0, show_default=True, help="Idler analyzer step, deg.")
@click.option("--integration", type=float, default=1.0, show_default=True, help="Seconds per point.")
@click.option("--seed", type=int, default=None, help="Poisson-sample counts with this seed.")
@click.option("--hwp", is_flag=True, help="Angles (input and output) are half-wave-plate dial degrees.")
@click.option("--subtract", type=float, default=None, help="Subtract this accidental rate (1/s) before fitting.")
@click.option("--points", is_flag=True, help="Emit sweep points rather than fit summary.")
@output_options
@_domain_errors
def sweep(ideal, input_path, pair_rate, v_hv, v_da, eta_s, eta_i, window, angle_step, integration, seed,
          hwp, subtract, points, fmt, output):
    """Polarization-correlation sweeps for H, V, D, A and the derived V, S and fidelity bound."""
    scale = 0.5 if hwp else 1.0   # HWP dial -> polarization plane
    cfg = {"hwp": hwp, "subtract_per_s": subtract}
    if input_path is not None:
        with open(input_path, encoding="utf-8") as fh:
            records = ent.sweeps_from_csv(fh.read())
        records = [ent.SweepRecord(r.signal_setting, tuple((b * scale, c, t) for b, c, t in r.points))
                   for r in records]
        cfg.update({"input": click.format_filename(input_path)})
    else:
        if ideal:
            model = ent.SourceModel(pair_rate=pair_rate)
        else:
            model = ent.SourceModel(pair_rate=pair_rate, V_hv=v_hv, V_da=v_da, eta_s=eta_s, eta_i=eta_i,
                                    window_ns=window)
        angles = ent.default_sweep_angles(angle_step)
        records = [ent.synthesize_sweep(model, s, angles, integration, seed) for s in ("H", "V", "D", "A")]
        cfg.update({"ideal": ideal, "pair_rate": pair_rate, "V_hv": model.V_hv, "V_da": model.V_da,
                    "eta_s": model.eta_s, "eta_i": model.eta_i, "window_ns": model.window_ns,
                    "angle_step_deg": angle_step, "integration_s": integration, "seed": seed,
                    "accidental_rate": ent.accidental_rate(model)})
    em = Emitter("sweep", cfg)
    if subtract is not None:
        records = [ent.subtract_accidentals(r, subtract) for r in records]
    if points:
        rows = [{"signal_setting": r.signal_setting, "beta_deg": b / scale, "coincidences_per_s": c,
                 "integration_s": t} for r in records for b, c, t in r.points]
        em.write(list(ent.SWEEP_FIELDS), rows, fmt, output)
        return
    records = [r if r.fitted is not None else ent.fit_sweep(r) for r in records]
    summary = ent.visibility_summary(records)
    rows = []
    for r in records:
        f = r.fitted
        rows.append({"setting": r.signal_setting, "visibility": f.visibility, "offset": f.offset,
                     "amplitude": f.amplitude, "phase_deg": f.phase / scale})
    avg = min(summary["average"], 1.0)
    row = {"setting": "average", "visibility": summary["average"], "chsh_s": ent.chsh_from_visibility(avg)}
    if "V_hv" in summary and "V_da" in summary:
        row["fidelity_lower"] = ent.fidelity_bound(min(summary["V_hv"], 1.0), min(summary["V_da"], 1.0))
    rows.append(row)
    em.write(SWEEP_SUMMARY_FIELDS, rows, fmt, output)


LINK_FIELDS = ["link", "length_km", "loss_db", "transmission", "pair_rate", "singles_signal", "singles_idler",
               "accidental_rate", "V_raw", "V_corrected", "S_raw", "S_corrected", "dispersion_ps_per_nm_km",
               "broadening_ps", "tof_linewidth_nm"]


@cli.command()
@click.option("--link", "links", multiple=True, default=("link62", "link93"), show_default=True,
              help="Link preset (link62, link93, typical) or JSON file; repeatable.")
@click.option("--pair-rate", type=float, default=SOURCE_DEFAULTS["pair_rate"], show_default=True)
@click.option("--eta-s", type=float, default=SOURCE_DEFAULTS["eta_s"], show_default=True)
@click.option("--eta-i", type=float, default=SOURCE_DEFAULTS["eta_i"], show_default=True)
@click.option("--window", type=float, default=SOURCE_DEFAULTS["window_ns"], show_default=True,
              help="Coincidence window, ns.")
@click.option("--v-corrected", type=float, default=0.9928, show_default=True,
              help="Accidental-free source visibility.")
@click.option("--dark-i", type=float, default=0.0, show_default=True, help="Idler detector dark rate, 1/s.")
@click.option("--wavelength", type=float, default=1455.0, show_default=True, help="Idler wavelength, nm.")
@click.option("--bandwidth", type=float, default=0.2, show_default=True, help="Idler bandwidth, nm.")
@click.option("--tof", type=float, default=None, help="Measured arrival-time spread, ps, to invert.")
@output_options
@_domain_errors
def link(links, pair_rate, eta_s, eta_i, window, v_corrected, dark_i, wavelength, bandwidth, tof, fmt, output):
    """Rates, visibility, S and dispersion after sending the idler over fiber links."""
    source = ent.SourceModel(pair_rate=pair_rate, V_hv=v_corrected, V_da=v_corrected, eta_s=eta_s,
                             eta_i=eta_i, window_ns=window, dark_i=dark_i)
    rows, resolved = [], []
    for spec in links:
        lp = fib.resolve_link(spec)
        resolved.append(fib.link_to_dict(lp))
        b = fib.link_budget(source, lp, V_corrected=v_corrected)
        rows.append({"link": lp.name or str(spec), "length_km": lp.length_km, "loss_db": b["loss_db"],
                     "transmission": b["transmission"], "pair_rate": b["pair_rate"],
                     "singles_signal": b["singles_signal"], "singles_idler": b["singles_idler"],
                     "accidental_rate": b["accidental_rate"], "V_raw": b["V_raw"],
                     "V_corrected": b["V_corrected"], "S_raw": b["S_raw"], "S_corrected": b["S_corrected"],
                     "dispersion_ps_per_nm_km": fib.dispersion_coefficient(lp, wavelength),
                     "broadening_ps": fib.dispersion_broadening(lp, wavelength, bandwidth),
                     "tof_linewidth_nm": None if tof is None else fib.tof_linewidth(tof, lp, wavelength)})
    cfg = {"links": resolved, "pair_rate": pair_rate, "eta_s": eta_s, "eta_i": eta_i, "window_ns": window,
           "V_corrected": v_corrected, "dark_i": dark_i, "wavelength_nm": wavelength,
           "bandwidth_nm": bandwidth, "tof_ps": tof}
    Emitter("link", cfg).write(LINK_FIELDS, rows, fmt, output)


def main(argv=None):
    cli.main(args=argv, prog_name="spdcphase")


if __name__ == "__main__":
    main()
