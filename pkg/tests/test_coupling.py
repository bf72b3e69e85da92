import numpy as np
import pytest
from hypothesis import given, strategies as st

from hgpw.coupling import (CouplingBudget, Curve, GaussianGrating, Measured, beta_from_measurement,
                           beta_monte_carlo, detected_rate, gamma_total, gaussian_line, gaussian_spectrum,
                           spectral_efficiency)

# frozen from scipy.integrate.quad on the three-anchor grating (independent of the trapezoid code)
FLAT_700_900 = 0.02285404060190108       # flat unit-area spectrum on 700-900 nm
GAUSS_785_20THZ = 0.06426125881179548   # 20 THz FWHM line at 785 nm, truncated to 740-840 nm


def budget(**kw):
    vals = dict(tau_ns=Measured(2.74, 0.02), alpha=Measured(0.555, 0.010), r_inf=Measured(96e3, 3e3),
                eta=Measured(4.1e-3, 0.5e-3))
    vals.update(kw)
    return CouplingBudget(**vals)


def test_beta_reference_budget():
    res = beta_from_measurement(budget())
    assert res.beta == pytest.approx(0.1156, abs=5e-4)
    assert res.sigma == pytest.approx(0.0147, abs=5e-4)
    assert not res.unphysical
    assert CouplingBudget.reference() == budget()


def test_beta_unity_closure():
    # a perfectly coupled emitter: R_inf = eta alpha / tau
    tau, alpha, eta = 2.74, 0.6, 0.01
    b = budget(alpha=Measured(alpha), eta=Measured(eta), r_inf=Measured(eta * alpha / (tau * 1e-9)),
               tau_ns=Measured(tau))
    assert beta_from_measurement(b).beta == pytest.approx(1.0, rel=1e-12)


def test_unphysical_flag():
    b = budget(r_inf=Measured(2e6), eta=Measured(1e-3))
    assert beta_from_measurement(b).unphysical


def test_monte_carlo_agrees_with_linear_propagation():
    lin = beta_from_measurement(budget())
    mean, std = beta_monte_carlo(budget(), n=200_000, seed=1)
    assert mean == pytest.approx(lin.beta, rel=0.05)
    assert std == pytest.approx(lin.sigma, rel=0.10)


def test_gamma_total_examples():
    assert gamma_total(2.74, 0.555, 1.0) == pytest.approx(1.0128e8, rel=1e-4)
    assert gamma_total(2.74, 0.555, 0.0) == 0.0
    assert gamma_total(2.74, 1.0, 1e12) == pytest.approx(1 / 2.74e-9, rel=1e-9)
    with pytest.raises(ValueError):
        gamma_total(0.0, 0.5, 1.0)


def test_detected_rate_and_closure_identity():
    b = budget()
    res = beta_from_measurement(b)
    for s in (0.1, 1.0, 10.0):
        # detected = beta * Gamma_tot * eta at every pump level
        assert detected_rate(b, s) == pytest.approx(res.beta * gamma_total(2.74, 0.555, s) * 4.1e-3, rel=1e-12)
    assert detected_rate(b, 1.0) == pytest.approx(48e3)
    with pytest.raises(ValueError):
        detected_rate(b, -1)


@given(k=st.floats(0.1, 10))
def test_uncertainty_scales_with_inputs(k):
    base = beta_from_measurement(budget())
    scaled = beta_from_measurement(budget(tau_ns=Measured(2.74, 0.02 * k), alpha=Measured(0.555, 0.010 * k),
                                          r_inf=Measured(96e3, 3e3 * k), eta=Measured(4.1e-3, 0.5e-3 * k)))
    assert scaled.sigma == pytest.approx(k * base.sigma, rel=1e-9)
    assert scaled.beta == base.beta


def test_contributions_sum_to_relative_variance():
    res = beta_from_measurement(budget())
    assert sum(res.contributions.values()) == pytest.approx((res.sigma / res.beta) ** 2, rel=1e-12)
    assert max(res.contributions, key=res.contributions.get) == "eta"


@pytest.mark.parametrize("kw", [dict(alpha=Measured(0.4)), dict(alpha=Measured(1.2)), dict(eta=Measured(0.0)),
                                dict(eta=Measured(1.5)), dict(tau_ns=Measured(-1.0)),
                                dict(r_inf=Measured(1.0, -1.0))])
def test_budget_validation(kw):
    with pytest.raises(ValueError):
        budget(**kw)


def test_grating_through_anchors():
    g = GaussianGrating.through()
    assert g(765.0) == pytest.approx(0.02)
    assert g(800.0) == pytest.approx(0.10)
    assert g(830.0) == pytest.approx(0.02)
    with pytest.raises(ValueError, match="peaked"):
        GaussianGrating.through(((700, 0.1), (750, 0.05), (800, 0.1)))


def test_narrow_line_reads_grating_at_line():
    g = GaussianGrating.through()
    wl = np.linspace(799, 801, 4001)
    assert spectral_efficiency(gaussian_line(800.0, 1e-3, wl), g) == pytest.approx(0.100, abs=1e-3)


def test_flat_spectrum_regression():
    g = GaussianGrating.through()
    wl = np.linspace(700, 900, 20001)
    flat = Curve(wl, np.full(wl.size, 1 / 200.0))
    assert spectral_efficiency(flat, g) == pytest.approx(FLAT_700_900, rel=1e-6)


def test_broad_spectrum_regression():
    g = GaussianGrating.through()
    wl = np.linspace(740, 840, 20001)
    assert spectral_efficiency(gaussian_spectrum(785.0, 20.0, wl), g) == pytest.approx(GAUSS_785_20THZ, rel=1e-6)


@given(a=st.floats(0.0, 1.0), b=st.floats(0.0, 1.0))
def test_monotone_in_grating(a, b):
    wl = np.linspace(760, 840, 801)
    s = gaussian_spectrum(800.0, 5.0, wl)
    g = GaussianGrating.through()
    lo, hi = sorted((a, b))
    assert spectral_efficiency(s, g, Curve(wl, np.full(wl.size, lo))) <= \
        spectral_efficiency(s, g, Curve(wl, np.full(wl.size, hi))) + 1e-15


def test_disjoint_supports_and_normalisation():
    s = gaussian_line(800.0, 2.0, np.linspace(780, 820, 401))
    with pytest.raises(ValueError, match="overlap"):
        spectral_efficiency(s, Curve(np.array([900.0, 950.0]), np.array([0.1, 0.1])))
    with pytest.raises(ValueError, match="normalised"):
        spectral_efficiency(Curve(np.array([1.0, 2.0]), np.array([5.0, 5.0])), GaussianGrating.through())
    with pytest.raises(ValueError, match="increasing"):
        Curve(np.array([2.0, 1.0]), np.array([1.0, 1.0]))
