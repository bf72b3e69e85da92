"""Command-line entry point: ``hgpw <kind> [--config PATH] [--seed N] [--out DIR] [--mesh M]``.

Each run writes its data products (CSV), a report (report.json) and a manifest
(manifest.json: resolved config, seed, versions, input digests) to the output
directory. Exit codes: 0 ok, 2 configuration, 3 numerical, 4 I/O.
"""

from __future__ import annotations

import argparse
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import KINDS, ConfigError, Scenario, cross_section, detection_chain, emitter_config, parse_config
from .correlation import CorrelationError, g2_full, g2_normalize, g2_start_stop, histogram_lifetime
from .coupling import beta_from_measurement, spectral_efficiency
from .fitting import FitError, fit_cos2, fit_exponential, fit_g2, fit_saturation
from .geometry import build_mesh, region_masks
from .io import (RecordFormatError, budget_from_sections, read_curve, read_g2_histogram,
                 read_lifetime_histogram, read_numeric_csv, read_photon_records, sha256, stream_for,
                 write_csv, write_histogram, write_json, write_photon_records, write_sweep)
from .modesolver import (SWEEP_COLUMNS, ModeSolverError, energy_fractions, gap_sweep, propagation_length,
                         select_hybrid, solve_modes, sweep_table)
from .photophysics import expected_signal_rate, polarization_scan, simulate_cw, simulate_pulsed

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
NUMERIC_ERRORS = (ModeSolverError, FitError, CorrelationError, np.linalg.LinAlgError, FloatingPointError,
                  ArithmeticError)
IO_ERRORS = (OSError, RecordFormatError)

FRACTION_KEYS = ("core", "gap", "metal", "spacer", "cover", "substrate", "air")


def versions():
    return {"hgpw": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


# --- steps --------------------------------------------------------------------
# each step gets the scenario, the output dir and the products of earlier steps,
# and returns (report dict, products dict)

def _step_mode_solve(sc: Scenario, out: Path, prev):
    mesh_cfg, solver = sc.section("mesh"), sc.section("solver")
    mesh = build_mesh(cross_section(sc.sections), mesh_cfg["policy"], mesh_cfg["wavelength"])
    modes = solve_modes(mesh, mesh_cfg["wavelength"], solver["n_guess"], solver["count"])
    masks = region_masks(mesh)
    hybrid = select_hybrid(modes, masks)
    rows = []
    for i, m in enumerate(modes):
        L, _ = propagation_length(m)
        f = energy_fractions(m, masks)
        rows.append([i, float(m.n_eff.real), float(m.n_eff.imag), float(L), float(m.eigen_residual)]
                    + [float(f[k]) for k in FRACTION_KEYS])
    write_csv(out / "modes.csv", ["mode", "neff_re", "neff_im", "L_um", "residual"]
              + [f"frac_{k}" for k in FRACTION_KEYS], rows)
    u = hybrid.energy_density
    write_csv(out / "hybrid_energy_density.csv", ["x_nm", "y_nm", "u"],
              ([float(x), float(y), float(u[i, j])] for i, x in enumerate(mesh.xc) for j, y in enumerate(mesh.yc)))
    L, infinite = propagation_length(hybrid)
    report = {"mesh_cells": [int(mesh.xc.size), int(mesh.yc.size)], "modes": len(modes),
              "hybrid": {"mode": int(next(i for i, m in enumerate(modes) if m is hybrid)),
                         "neff_re": float(hybrid.n_eff.real), "neff_im": float(hybrid.n_eff.imag),
                         "L_um": None if infinite else float(L),
                         "fractions": {k: float(v) for k, v in energy_fractions(hybrid, masks).items()}}}
    return report, {"modes": out / "modes.csv"}


def _step_gap_sweep(sc: Scenario, out: Path, prev):
    mesh_cfg, solver, sweep = sc.section("mesh"), sc.section("solver"), sc.section("sweep")
    rows = gap_sweep(cross_section(sc.sections), sweep["gaps"], mesh_cfg["wavelength"], mesh_cfg["policy"],
                     solver["n_guess"], solver["count"], sweep["workers"])
    table = sweep_table(rows)
    write_sweep(table, out / "sweep.csv")
    return {"rows": [dict(zip(SWEEP_COLUMNS, map(float, r))) for r in table]}, {"sweep": out / "sweep.csv"}


def _records_name(fmt):
    return "records.bin" if fmt == "bin" else "records.csv"


def _step_simulate_cw(sc: Scenario, out: Path, prev):
    em, chain, cw = emitter_config(sc.sections), detection_chain(sc.sections), sc.section("cw")
    streams = simulate_cw(em, chain, cw["intensity"], cw["angle_deg"], cw["duration_s"], sc.seed,
                          workers=cw["workers"])
    path = write_photon_records(streams, out / _records_name(cw["format"]))
    expected = expected_signal_rate(em, chain, cw["intensity"], cw["angle_deg"])
    report = {"channels": {str(s.channel): {"events": len(s), "rate_cps": len(s) / cw["duration_s"],
                                            "expected_signal_cps": float(e)}
                           for s, e in zip(streams, expected)}}
    return report, {"records": path, "duration_s": cw["duration_s"]}


def _step_simulate_pulsed(sc: Scenario, out: Path, prev):
    em, chain, pu = emitter_config(sc.sections), detection_chain(sc.sections), sc.section("pulsed")
    streams = simulate_pulsed(em, chain, pu["rep_period_ns"], pu["excitation_prob"], pu["n_pulses"], sc.seed,
                              workers=pu["workers"])
    path = write_photon_records(streams, out / _records_name(pu["format"]))
    duration = pu["n_pulses"] * pu["rep_period_ns"] * 1e-9
    report = {"duration_s": duration, "channels": {str(s.channel): {"events": len(s)} for s in streams}}
    return report, {"records": path, "duration_s": duration}


def _step_polarization(sc: Scenario, out: Path, prev):
    em, chain, po = emitter_config(sc.sections), detection_chain(sc.sections), sc.section("polarization")
    if not 1 <= po["channel"] <= len(chain.channels):
        raise ConfigError([f"[polarization] channel {po['channel']} not in 1..{len(chain.channels)}"])
    scan = polarization_scan(em, chain, po["intensity"], po["angles"], po["dwell_s"], sc.seed,
                             channel=po["channel"] - 1)
    theta = np.array([a for a, _ in scan])
    rate = np.array([r for _, r in scan])
    sigma = np.sqrt(np.maximum(rate * po["dwell_s"], 1.0)) / po["dwell_s"]
    write_csv(out / "polarization.csv", ["theta_deg", "rate", "sigma"], zip(theta, rate, sigma))
    fit = fit_cos2(theta, rate, sigma)
    return {"fit": fit.as_dict()}, {"polarization": out / "polarization.csv"}


def _step_correlate(sc: Scenario, out: Path, prev):
    co = sc.section("correlate")
    records = co["records"] or prev.get("records")
    if records is None:
        raise ConfigError(["[correlate] records is required"])
    streams = read_photon_records(records)
    duration = co["duration_s"]  # None: span of the records
    if co["mode"] == "lifetime":
        hist = histogram_lifetime(stream_for(streams, co["channel_a"]), stream_for(streams, co["sync_channel"]),
                                  co["bin_ps"], co["range_ps"])
        write_histogram(hist, out / "lifetime.csv")
        return ({"bins": int(hist.counts.size), "events": int(hist.counts.sum()), "floor": hist.floor},
                {"histogram": out / "lifetime.csv", "model": "exponential"})
    a = stream_for(streams, co["channel_a"])
    b = a if co["channel_b"] == co["channel_a"] else stream_for(streams, co["channel_b"])
    estimator = g2_full if co["estimator"] == "full" else g2_start_stop
    raw = estimator(a, b, co["bin_ps"], co["max_delay_ps"], duration_s=duration)
    write_histogram(raw, out / "g2_counts.csv")
    norm = g2_normalize(raw)
    write_histogram(norm, out / "g2.csv")
    report = {"bins": int(raw.counts.size), "coincidences": int(raw.counts.sum()),
              "acquisition_s": raw.acquisition_s, "rate_a": raw.rate_a, "rate_b": raw.rate_b}
    return report, {"histogram": out / "g2.csv", "model": "g2"}


def _step_fit(sc: Scenario, out: Path, prev):
    fi = sc.section("fit")
    data = fi["data"] or prev.get("histogram") or prev.get("polarization")
    if data is None:
        raise ConfigError(["[fit] data is required"])
    model = fi["model"]
    if model == "g2":
        res = fit_g2(read_g2_histogram(data), fi["s"], fi["tau_ns"], fi["sigma_ps"], fi["convolve"],
                     fi["max_delay_ps"])
    elif model == "exponential":
        res = fit_exponential(read_lifetime_histogram(data), (fi["window_start_ps"], fi["window_stop_ps"]))
    elif model == "saturation":
        d = read_numeric_csv(data, ["intensity", "rate", "sigma"])
        res = fit_saturation(d["intensity"], d["rate"], d["sigma"], fi["parameterization"])
    else:
        d = read_numeric_csv(data, ["theta_deg", "rate", "sigma"])
        res = fit_cos2(d["theta_deg"], d["rate"], d["sigma"])
    write_json(out / "fit.json", {"model": model, **res.as_dict()})
    return {"model": model, **res.as_dict()}, {"fit": out / "fit.json"}


def _step_beta(sc: Scenario, out: Path, prev):
    sections = dict(sc.sections)
    spec = sc.section("spectral")
    report = {}
    if spec.get("spectrum") is not None:
        eta = spectral_efficiency(read_curve(spec["spectrum"]).normalized(), read_curve(spec["grating"]),
                                  read_curve(spec["optics"]) if spec.get("optics") else None)
        report["eta_spectral"] = eta
        sections["eta"] = {"value": eta, "sigma": sections["eta"]["sigma"]}
    budget = budget_from_sections(sections)
    res = beta_from_measurement(budget)
    report.update(res.as_dict())
    report["inputs"] = {k: {"value": getattr(budget, k).value, "sigma": getattr(budget, k).sigma}
                        for k in ("tau_ns", "alpha", "r_inf", "eta")}
    write_json(out / "beta.json", report)
    return report, {"beta": out / "beta.json"}


def _step_reproduce(sc: Scenario, out: Path, prev):
    from .reproduce import run_all
    rp = sc.section("reproduce")
    results = run_all(seed=sc.seed, quick=rp["quick"], workers=rp["workers"])
    write_csv(out / "acceptance.csv", ["criterion", "passed", "summary"],
              ([r["name"], int(r["passed"]), r["summary"]] for r in results))
    return {"criteria": results, "all_passed": all(r["passed"] for r in results)}, {}


STEPS = {
    "mode-solve": _step_mode_solve, "gap-sweep": _step_gap_sweep, "simulate-cw": _step_simulate_cw,
    "simulate-pulsed": _step_simulate_pulsed, "polarization": _step_polarization,
    "correlate": _step_correlate, "fit": _step_fit, "beta": _step_beta, "reproduce-paper": _step_reproduce,
}


def run_scenario(sc: Scenario):
    """Run every step of ``sc`` into ``sc.out``; returns the report dict."""
    out = Path(sc.out)
    out.mkdir(parents=True, exist_ok=True)
    for p in sc.inputs:
        if not Path(p).exists():
            raise FileNotFoundError(f"input file not found: {p}")
    reports, prev, products = {}, {}, {}
    for i, step in enumerate(sc.steps):
        rep, prod = STEPS[step](sc, out, prev)
        key = step if len(sc.steps) == 1 else f"{i + 1}:{step}"
        reports[key] = rep
        prev.update(prod)
        products.update({k: v for k, v in prod.items() if isinstance(v, Path)})
    report = {"kind": sc.kind, "steps": list(sc.steps), "seed": sc.seed, "results": reports}
    write_json(out / "report.json", report)
    manifest = {
        "config": sc.resolved(), "seed": sc.seed, "versions": versions(),
        "inputs": {str(p): sha256(p) for p in sc.inputs if Path(p).is_file()},
        "outputs": {str(Path(p).name): sha256(p) for p in sorted(products.values())},
    }
    write_json(out / "manifest.json", manifest)
    return report


def build_parser():
    ap = argparse.ArgumentParser(prog="hgpw", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="kind", required=True)
    for kind in KINDS + ("run",):
        p = sub.add_parser(kind, help="run a composite config (kind/steps from the file)" if kind == "run"
                           else f"{kind} scenario")
        p.add_argument("--config", type=Path, help="scenario INI file or a previous manifest.json")
        p.add_argument("--seed", type=int, help="64-bit master seed (overrides the config)")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--mesh", choices=("coarse", "default", "fine"), help="mesh policy override")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        sc = parse_config(args.config, args.kind, {"seed": args.seed, "out": args.out, "mesh": args.mesh})
        report = run_scenario(sc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IO_ERRORS as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NUMERIC_ERRORS as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:  # invalid values caught by the model constructors
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"wrote {sc.out}/report.json")
    if sc.kind == "reproduce-paper" and not report["results"]["reproduce-paper"]["all_passed"]:
        return 1
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
