"""One-command reproduction of the headline numbers.

Each ``check_*`` function runs one scenario end to end and returns a dict with
the measured quantities, a ``passed`` flag and a one-line ``summary``. The
tolerances are the acceptance bounds; ``quick=True`` shrinks statistics and
meshes for smoke runs (the bounds are then not expected to hold).
"""

from __future__ import annotations

import hashlib
import tempfile
import time
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from .correlation import g2_full, g2_normalize, histogram_lifetime
from .coupling import CouplingBudget, beta_from_measurement
from .fitting import fit_cos2, fit_exponential, fit_g2, fit_saturation
from .geometry import CrossSection, build_mesh, layered_mesh
from .materials import ConstantIndex
from .modesolver import RESIDUAL_TOL, gap_sweep, solve_modes
from .photophysics import (Channel, DetectionChain, EmitterConfig, poisson_streams, polarization_scan,
                           saturation_scan, simulate_cw, simulate_pulsed)

DEFAULT_SEED = 20250601
TAU_NS = 2.74

# criterion name -> check function name, in run order
ACCEPTANCE_RUNS = (
    ("beta", "check_beta"),
    ("lifetime", "check_lifetime"),
    ("saturation", "check_saturation"),
    ("g2", "check_g2"),
    ("polarization", "check_polarization"),
    ("slab_oracle", "check_slab_oracle"),
    ("gap_trends", "check_gap_trends"),
    ("poisson_null", "check_poisson_null"),
    ("determinism", "check_determinism"),
)


def _result(name, passed, summary, t0, **values):
    return {"name": name, "passed": bool(passed), "summary": summary,
            "runtime_s": round(time.perf_counter() - t0, 3), **values}


def check_beta(**_):
    t0 = time.perf_counter()
    r = beta_from_measurement(CouplingBudget.reference())
    ok = abs(r.beta - 0.116) <= 0.001 and abs(r.sigma - 0.015) <= 0.001
    return _result("beta", ok, f"beta = {r.beta:.4f} +- {r.sigma:.4f}", t0, beta=r.beta, sigma=r.sigma)


def lifetime_setup():
    emitter = EmitterConfig(lifetime_ns=TAU_NS)
    chain = DetectionChain((Channel("free", 0.02),), dark_rate=100.0, jitter_ps=50.0)
    return emitter, chain


def check_lifetime(seed=DEFAULT_SEED, quick=False, workers=1, **_):
    t0 = time.perf_counter()
    emitter, chain = lifetime_setup()
    n = 2_000_000 if quick else 10_000_000
    sync, det = simulate_pulsed(emitter, chain, 50.0, 0.5, n, seed, workers=workers)
    hist = histogram_lifetime(det, sync, 16, 40_000)
    fit = fit_exponential(hist, (500, 30_000))
    tau, err = fit["tau"], fit.error("tau")
    ok = abs(tau - TAU_NS) <= 0.03
    return _result("lifetime", ok, f"tau = {tau:.4f} +- {err:.4f} ns from {int(hist.counts.sum())} counts",
                   t0, tau_ns=tau, tau_err=err)


SATURATION_CASES = (  # (I_sat kW/cm^2, sigma, R_inf cps, sigma)
    (90.0, 8.0, 160e3, 6e3),
    (104.0, 10.0, 96e3, 3e3),
)


def saturation_once(i_sat, r_inf, seed, dwell_s=1.0, n_points=8):
    """Scan 0.1..10 I_sat and fit; returns the FitResult."""
    emitter = EmitterConfig(lifetime_ns=TAU_NS, i_sat=i_sat)
    chain = DetectionChain((Channel("free", r_inf * TAU_NS * 1e-9),))
    intens = i_sat * np.geomspace(0.1, 10, n_points)
    scan = saturation_scan(emitter, chain, intens, dwell_s, seed)
    rate = np.array([r for _, r in scan])
    sigma = np.sqrt(np.maximum(rate * dwell_s, 1.0)) / dwell_s
    return fit_saturation(intens, rate, sigma)


def check_saturation(seed=DEFAULT_SEED, quick=False, **_):
    t0 = time.perf_counter()
    n_seeds = 20 if quick else 100
    fails, worst = 0, []
    for case, (i_sat, si, r_inf, sr) in enumerate(SATURATION_CASES):
        dev = []
        for k in range(n_seeds):
            fit = saturation_once(i_sat, r_inf, (seed, case, k))
            di, dr = abs(fit["i_sat"] - i_sat) / si, abs(fit["r_inf"] - r_inf) / sr
            dev.append(max(di, dr))
            fails += di > 1 or dr > 1
        worst.append(max(dev))
    rate = fails / (n_seeds * len(SATURATION_CASES))
    return _result("saturation", rate <= 0.05,
                   f"failure rate {rate:.3f} over {n_seeds} seeds x {len(SATURATION_CASES)} cases "
                   f"(worst deviation {max(worst):.2f} sigma)", t0, failure_rate=rate)


G2_SIGMA_PS = 455.0     # combined timing spread of a detector pair
G2_RHO2 = 0.75          # generating signal fraction squared
G2_RHO2_ALT = 0.80      # source whose IRF-aware g2(0) is 0.20 (reported alongside)
G2_SIGNAL_CPS = 3.0e5   # per channel


def g2_setup(branches, rho2=G2_RHO2):
    """Emitter plus a two-detector chain on ``branches`` with signal fraction sqrt(rho2).

    Per-detector jitter is sigma/sqrt(2), so the delay between two detectors
    spreads by sigma.
    """
    emitter = EmitterConfig(lifetime_ns=TAU_NS, i_sat=100.0,
                            branching={"wg_left": 0.058, "wg_right": 0.058, "free": 0.884})
    rho = np.sqrt(rho2)
    # at S = 1 the emission rate is 1/(2 tau)
    effs = [G2_SIGNAL_CPS * 2 * TAU_NS * 1e-9 / emitter.branching[b] for b in branches]
    chain = DetectionChain(tuple(Channel(b, e) for b, e in zip(branches, effs)),
                           background_rate=G2_SIGNAL_CPS * (1 - rho) / rho,
                           jitter_ps=G2_SIGMA_PS / np.sqrt(2))
    return emitter, chain


def g2_pair(a, b, duration_s):
    hist = g2_normalize(g2_full(a, b, 128, 50_000, duration_s=duration_s))
    plain = fit_g2(hist, 1.0, TAU_NS)
    conv = fit_g2(hist, 1.0, TAU_NS, G2_SIGMA_PS, convolve=True)
    return hist, plain, conv


def g2_study(rho2, seed, duration_s, workers=1, task=50):
    """Auto (one free-space detector with itself) and cross (two waveguide ports) g2 fits."""
    em, chain = g2_setup(["free"], rho2)
    (s,) = simulate_cw(em, chain, 100.0, None, duration_s, seed, workers=workers, task=task + 1)
    _, a_plain, a_conv = g2_pair(s, s, duration_s)
    del s
    em, chain = g2_setup(["wg_left", "wg_right"], rho2)
    left, right = simulate_cw(em, chain, 100.0, None, duration_s, seed, workers=workers, task=task + 2)
    _, c_plain, c_conv = g2_pair(left, right, duration_s)
    return {"cross_plain": c_plain.extra["g2_0"], "cross_conv": c_conv.extra["g2_0"],
            "cross_conv_err": c_conv.extra["g2_0_err"], "auto_plain": a_plain.extra["g2_0"],
            "auto_conv": a_conv.extra["g2_0"], "auto_conv_err": a_conv.extra["g2_0_err"]}


def check_g2(seed=DEFAULT_SEED, quick=False, workers=1, **_):
    t0 = time.perf_counter()
    T = 10.0 if quick else 60.0
    r = g2_study(G2_RHO2, seed, T, workers)
    agree = abs(r["auto_conv"] - r["cross_conv"]) <= np.hypot(r["auto_conv_err"], r["cross_conv_err"])
    ok = abs(r["cross_plain"] - 0.25) <= 0.03 and abs(r["cross_conv"] - 0.20) <= 0.02 and agree
    alt = g2_study(G2_RHO2_ALT, seed, T, workers, task=60)
    summary = (f"rho^2={G2_RHO2}: cross raw {r['cross_plain']:.3f} (target 0.25+-0.03), IRF-aware "
               f"{r['cross_conv']:.3f} +- {r['cross_conv_err']:.3f} (target 0.20+-0.02), auto IRF-aware "
               f"{r['auto_conv']:.3f} +- {r['auto_conv_err']:.3f}; rho^2={G2_RHO2_ALT}: raw "
               f"{alt['cross_plain']:.3f}, IRF-aware {alt['cross_conv']:.3f}")
    return _result("g2", ok, summary, t0, **r, auto_cross_agree=bool(agree),
                   alt={"rho2": G2_RHO2_ALT, **alt})


def check_polarization(seed=DEFAULT_SEED, quick=False, **_):
    t0 = time.perf_counter()
    emitter = EmitterConfig(lifetime_ns=TAU_NS, i_sat=90.0, dipole_angle_deg=6.0)
    chain = DetectionChain((Channel("free", 1e-3),), dark_rate=200.0)
    angles = np.arange(-90.0, 91.0, 10.0)
    scan = polarization_scan(emitter, chain, 45.0, angles, 0.2 if quick else 1.0, seed)
    rate = np.array([r for _, r in scan])
    dwell = 0.2 if quick else 1.0
    fit = fit_cos2(angles, rate, np.sqrt(np.maximum(rate * dwell, 1)) / dwell)
    th, err = fit["theta0"], fit.error("theta0")
    return _result("polarization", abs(th - 6.0) <= 2.0, f"theta0 = {th:.2f} +- {err:.2f} deg", t0,
                   theta0=th, theta0_err=err)


def slab_te0_index(n_core, n_clad, thickness, wavelength):
    """Fundamental TE root of the symmetric slab dispersion relation."""
    k0 = 2 * np.pi / wavelength

    def f(n):
        kx = k0 * np.sqrt(n_core**2 - n**2)
        g = k0 * np.sqrt(n**2 - n_clad**2)
        return kx * np.tan(kx * thickness / 2) - g

    # on the fundamental branch kx d/2 < pi/2
    n_lo = max(n_clad, np.sqrt(max(n_core**2 - (np.pi / (k0 * thickness)) ** 2, 0))) + 1e-12
    return brentq(f, n_lo, n_core - 1e-12, xtol=1e-14)


def check_slab_oracle(**_):
    t0 = time.perf_counter()
    wl, n1, n2, d = 785.0, 2.4, 1.45, 300.0
    exact = slab_te0_index(n1, n2, d, wl)
    clad, core = ConstantIndex("SiO2", n2), ConstantIndex("TiO2", n1)
    mesh = layered_mesh([("substrate", 1200, clad), ("core", d, core), ("cover", 1200, clad)],
                        width=400, wavelength=wl, h_max=5.0)
    modes = solve_modes(mesh, wl, n_guess=2.1, count=4)
    best = min(modes, key=lambda m: abs(m.n_eff - exact))
    dn = abs(best.n_eff.real - exact)
    worst_res = max(m.eigen_residual for m in modes)
    ok = dn <= 1e-4 and worst_res <= RESIDUAL_TOL
    return _result("slab_oracle", ok, f"|dn| = {dn:.2e}, max residual {worst_res:.1e}", t0,
                   exact=exact, n_eff=best.n_eff.real, delta=dn, max_residual=worst_res)


TREND_GAPS = (100.0, 200.0, 300.0, 500.0, 1000.0)


def edge_distance(cs: CrossSection, x, y):
    """Distance from (x, y) to the nearest of the four gold corners at the gap."""
    y0, y1 = cs.metal_span
    corners = [(sx * cs.gap / 2, yy) for sx in (-1, 1) for yy in (y0, y1)]
    return min(np.hypot(x - cx, y - cy) for cx, cy in corners)


def check_gap_trends(quick=False, workers=1, **_):
    t0 = time.perf_counter()
    base = CrossSection()
    rows = gap_sweep(base, TREND_GAPS, policy="coarse" if quick else "default", workers=workers)
    frac_gap = [r.fractions["gap"] for r in rows]
    length = [r.length_um for r in rows]
    dec = all(a > b for a, b in zip(frac_gap, frac_gap[1:]))
    inc = all(a < b for a, b in zip(length, length[1:]))
    f1000 = rows[-1].fractions
    core_max = max(f1000, key=f1000.get) == "core"
    m200 = rows[1].mode
    u = m200.energy_density
    i, j = np.unravel_index(np.argmax(u), u.shape)
    dist = edge_distance(base.with_gap(200.0), m200.mesh.xc[i], m200.mesh.yc[j])
    at_edge = dist <= 10.0
    ok = dec and inc and core_max and at_edge
    summary = (f"gap fraction {['%.3f' % f for f in frac_gap]}, L_um {['%.1f' % v for v in length]}, "
               f"largest at 1000 nm: {max(f1000, key=f1000.get)}, peak at 200 nm {dist:.1f} nm from a gold edge")
    return _result("gap_trends", ok, summary, t0, frac_gap=frac_gap, length_um=length,
                   decreasing=dec, increasing=inc, core_largest=core_max, peak_edge_distance_nm=dist)


def check_poisson_null(seed=DEFAULT_SEED, **_):
    t0 = time.perf_counter()
    # 10^6 events in 1 s; 1 us bins hold ~2.5e5 coincidences each
    a, b = poisson_streams([5e5, 5e5], 1.0, seed)
    g = g2_normalize(g2_full(a, b, 1_000_000, 20_000_000, duration_s=1.0)).g2
    dev = float(np.max(np.abs(g - 1)))
    return _result("poisson_null", dev <= 0.02, f"max |g2 - 1| = {dev:.4f} over {g.size} bins "
                   f"({len(a) + len(b)} events)", t0, max_deviation=dev)


def _digest(streams):
    from .io import write_photon_records
    with tempfile.TemporaryDirectory() as tmp:
        p = write_photon_records(streams, Path(tmp) / "r.csv")
        return hashlib.sha256(p.read_bytes()).hexdigest()


def check_determinism(seed=DEFAULT_SEED, **_):
    t0 = time.perf_counter()
    em, chain = g2_setup(["wg_left", "wg_right"])
    em_p, chain_p = lifetime_setup()
    runs = {
        "cw": lambda w: simulate_cw(em, chain, 100.0, None, 3.0, seed, workers=w),
        "pulsed": lambda w: simulate_pulsed(em_p, chain_p, 50.0, 0.5, 3_000_000, seed, workers=w),
        "poisson": lambda w: poisson_streams([1e4, 2e4], 2.0, seed),
    }
    same = {}
    for name, fn in runs.items():
        same[name] = len({_digest(fn(1)), _digest(fn(1)), _digest(fn(3))}) == 1
    scans = [saturation_once(90.0, 160e3, seed, dwell_s=0.2).values.tobytes() for _ in range(2)]
    same["saturation_fit"] = scans[0] == scans[1]
    ok = all(same.values())
    return _result("determinism", ok, ", ".join(f"{k}: {'identical' if v else 'DIFFERS'}"
                                                 for k, v in same.items()), t0, identical=same)


def run_all(seed=DEFAULT_SEED, quick=False, workers=1, only=None):
    seed = DEFAULT_SEED if seed is None else seed
    out = []
    for name, fn in ACCEPTANCE_RUNS:
        if only and name not in only:
            continue
        out.append(globals()[fn](seed=seed, quick=quick, workers=workers))
    return out
