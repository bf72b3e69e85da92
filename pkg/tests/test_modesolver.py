import dataclasses

import numpy as np
import pytest
from scipy.optimize import brentq

from hgpw.geometry import CrossSection, build_mesh, layered_mesh, region_masks
from hgpw.materials import ConstantIndex, Tabulated, gold
from hgpw.modesolver import (RESIDUAL_TOL, ModeSolverError, NoGuidedModeError, energy_fractions, gap_sweep,
                             guided_emission_estimate, propagation_length, select_hybrid, solve_modes,
                             sweep_table)

WL = 785.0


def slab_te0(n1, n2, d, wl):
    """Independent oracle: symmetric-slab TE0 root from the even-mode equation, bracketed by scanning."""
    k0 = 2 * np.pi / wl

    def f(n):
        u = k0 * np.sqrt(n1**2 - n**2) * d / 2
        w = k0 * np.sqrt(n**2 - n2**2) * d / 2
        return u * np.sin(u) - w * np.cos(u)  # u tan u = w without the poles

    ns = np.linspace(n2 + 1e-9, n1 - 1e-9, 20001)
    vals = f(ns)
    i = np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[-1]  # largest root = fundamental
    return brentq(f, ns[i], ns[i + 1], xtol=1e-15)


def test_slab_te0_matches_dispersion_relation():
    exact = slab_te0(2.4, 1.45, 300.0, WL)
    assert exact == pytest.approx(2.2247964, abs=1e-7)
    clad, core = ConstantIndex("SiO2", 1.45), ConstantIndex("TiO2", 2.4)
    mesh = layered_mesh([("substrate", 1200, clad), ("core", 300, core), ("cover", 1200, clad)],
                        width=400, h_max=5.0)
    modes = solve_modes(mesh, WL, n_guess=2.1)
    assert min(abs(m.n_eff.real - exact) for m in modes) <= 1e-4
    assert all(m.eigen_residual <= RESIDUAL_TOL for m in modes)


def test_uniform_medium_mode_below_medium_index():
    mesh = layered_mesh([("substrate", 4000, ConstantIndex("SiO2", 1.45))], width=400, h_max=20.0)
    modes = solve_modes(mesh, WL, n_guess=1.45, count=2, require_guided=False)
    assert 1.40 < modes[0].n_eff.real < 1.45
    with pytest.raises(NoGuidedModeError):
        solve_modes(mesh, WL, n_guess=1.45, count=2)


def test_guess_outside_index_range():
    mesh = layered_mesh([("substrate", 400, ConstantIndex("SiO2", 1.45))], width=100, h_max=20.0)
    with pytest.raises(ValueError, match="outside material index range"):
        solve_modes(mesh, WL, n_guess=3.0)


def test_device_modes_invariants(device_200):
    mesh, modes, hybrid = device_200
    masks = region_masks(mesh)
    for m in modes:
        assert m.n_eff.imag >= 0
        assert m.eigen_residual <= RESIDUAL_TOL
        assert np.all(np.isfinite(m.e_field)) and np.all(np.isfinite(m.h_field))
        assert m.energy() > 0
        assert sum(energy_fractions(m, masks).values()) == pytest.approx(1.0, abs=1e-9)
    assert [m.n_eff.real for m in modes] == sorted((m.n_eff.real for m in modes), reverse=True)


def test_hybrid_forward_power_flow(device_200):
    mesh, _, hybrid = device_200
    e, h = hybrid.e_field, hybrid.h_field
    sz = np.real(e[..., 0] * np.conj(h[..., 1]) - e[..., 1] * np.conj(h[..., 0]))
    assert np.sum(sz * mesh.areas) > 0


def test_energy_peak_at_gold_edge(device_200):
    mesh, _, hybrid = device_200
    cs = CrossSection(gap=200.0)
    u = hybrid.energy_density
    i, j = np.unravel_index(np.argmax(u), u.shape)
    y0, y1 = cs.metal_span
    assert abs(abs(mesh.xc[i]) - 100.0) <= 2.0
    assert min(abs(mesh.yc[j] - y0), abs(mesh.yc[j] - y1)) <= 2.0


def test_mirror_symmetry(device_200):
    mesh, _, hybrid = device_200
    a = np.linalg.norm(hybrid.e_field, axis=-1)
    b = a[::-1, :]
    strong = a > 1e-3 * a.max()
    rel = np.abs(a - b)[strong] / np.maximum(a, b)[strong]
    assert rel.max() <= 0.01


def test_lossless_gold_gives_real_index():
    g = gold()
    lossless = Tabulated("gold_lossless", g.wavelength_nm, g.eps.real.astype(complex))
    mesh = build_mesh(CrossSection(gap=200.0), "coarse", WL)
    mats = dict(mesh.region_materials, metal=lossless)
    mesh = dataclasses.replace(mesh, region_materials=mats)
    mode = select_hybrid(solve_modes(mesh, WL))
    assert abs(mode.n_eff.imag) <= 1e-10
    L, infinite = propagation_length(mode)
    assert infinite and np.isinf(L)


@pytest.mark.slow
def test_mesh_convergence():
    cs = CrossSection(gap=200.0)
    n = {}
    for policy in ("default", "fine"):
        mesh = build_mesh(cs, policy, WL)
        n[policy] = select_hybrid(solve_modes(mesh, WL)).n_eff
    assert abs(n["fine"] - n["default"]) <= 5e-3


def test_propagation_length_values(device_200):
    _, _, hybrid = device_200
    m = dataclasses.replace(hybrid, n_eff=complex(2.2, 1e-3))
    L, inf = propagation_length(m)
    assert not inf and L == pytest.approx(62.47, abs=0.005)
    assert propagation_length(dataclasses.replace(hybrid, n_eff=complex(2.2, 2e-3)))[0] == pytest.approx(L / 2)
    assert propagation_length(dataclasses.replace(hybrid, n_eff=complex(2.2, 0.0))) == (np.inf, True)


def test_masks_must_partition(device_200):
    mesh, _, hybrid = device_200
    masks = region_masks(mesh)
    masks["gap"] = masks["core"]
    with pytest.raises(ValueError, match="partition"):
        energy_fractions(hybrid, masks)


def test_sweep_needs_two_gaps():
    with pytest.raises(ValueError, match="need >=2 gaps"):
        gap_sweep(CrossSection(), [200.0])


def test_sweep_annotates_failing_gap():
    with pytest.raises(ModeSolverError, match="gap 5000 nm"):
        gap_sweep(CrossSection(), [200.0, 5000.0], policy="coarse")


def test_sweep_trends_and_parallel_determinism():
    base = CrossSection()
    rows = gap_sweep(base, [200.0, 1000.0], policy="coarse")
    again = gap_sweep(base, [200.0, 1000.0], policy="coarse", workers=2)
    assert sweep_table(rows) == sweep_table(again)
    r200, r1000 = rows
    assert r200.length_um < r1000.length_um
    assert r200.fractions["gap"] > r1000.fractions["gap"]
    assert max(r1000.fractions, key=r1000.fractions.get) == "core"


def test_emission_estimate_projection_rules(device_200):
    mesh, _, hybrid = device_200
    y_dip = CrossSection().metal_span[0] + 30.0
    # the field at the gap centre is mostly along x; a dipole along z sees only e_z
    r1 = guided_emission_estimate(hybrid, (0.0, y_dip), (1, 0, 0), 1.8, gamma_other=1.0, n_group=2.5)
    r2 = guided_emission_estimate(hybrid, (40.0, y_dip), (1, 0, 0), 1.8, gamma_other=1.0, n_group=2.5)
    from hgpw.modesolver import field_at
    e1, e2 = field_at(hybrid, (0.0, y_dip)), field_at(hybrid, (40.0, y_dip))
    ratio = r1["gamma_wg_over_gamma_hom"] / r2["gamma_wg_over_gamma_hom"]
    assert ratio == pytest.approx(abs(e1[0]) ** 2 / abs(e2[0]) ** 2, rel=1e-12)
    # orthogonal orientation: build a unit vector perpendicular to Re and Im of e
    e = field_at(hybrid, (0.0, y_dip))
    d = np.cross(e.real, e.imag)
    if np.linalg.norm(d) < 1e-12 * np.linalg.norm(e) ** 2:
        d = np.cross(e.real, [0.0, 0.0, 1.0]) if abs(e.real[2]) < np.linalg.norm(e.real) else [1.0, 0, 0]
    res = guided_emission_estimate(hybrid, (0.0, y_dip), d, 1.8, gamma_other=1.0, n_group=2.5)
    assert res["gamma_wg_over_gamma_hom"] == pytest.approx(0.0, abs=1e-12 * r1["gamma_wg_over_gamma_hom"])
    assert res["beta_estimate"] == pytest.approx(0.0, abs=1e-10)
    with pytest.raises(ValueError, match="outside the domain"):
        guided_emission_estimate(hybrid, (1e5, y_dip), (1, 0, 0), 1.8)


def test_emission_estimate_near_measured_beta(device_200):
    _, _, hybrid = device_200
    tau_s = 2.74e-9
    y_dip = CrossSection().metal_span[0] + 30.0
    # rates in units of 1/tau; the homogeneous-medium rate is taken as 1/tau
    res = guided_emission_estimate(hybrid, (0.0, y_dip), (1, 0, 0), 1.8,
                                   gamma_other=1 / tau_s, gamma_hom=1 / tau_s)
    assert 0.115 / 3 <= res["beta_estimate"] <= 0.115 * 3
    assert 2.0 < res["n_group"] < 4.0
