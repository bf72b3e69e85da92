import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hgpw.materials import (ConstantIndex, DrudeLorentz, MaterialError, Tabulated, dispersive_energy_factor,
                            gold, library, permittivity)

# hand interpolation between the 756.0012 and 821.0874 nm rows of the shipped table
GOLD_785 = complex(-22.927496762551815, 1.4298391971262725)


def test_air_is_unity():
    assert permittivity(ConstantIndex("air", 1.0), 633.0) == 1 + 0j


def test_constant_index_squares():
    assert permittivity(ConstantIndex("SiO2", 1.45), 785.0) == pytest.approx(2.1025 + 0j, abs=1e-15)
    eps = permittivity(ConstantIndex("lossy", 0.2, 4.8), 785.0)
    assert eps == complex(0.2, 4.8) ** 2


def test_gold_785_matches_hand_interpolation():
    lo_wl, lo = 756.0012, complex(-20.610164, 1.271760)
    hi_wl, hi = 821.0874, complex(-25.811289, 1.626560)
    f = (785.0 - lo_wl) / (hi_wl - lo_wl)
    assert lo + f * (hi - lo) == pytest.approx(GOLD_785, abs=1e-12)
    assert permittivity(gold(), 785.0) == pytest.approx(GOLD_785, abs=1e-12)


def test_table_entries_are_exact():
    g = gold()
    for wl, eps in zip(g.wavelength_nm, g.eps):
        assert permittivity(g, wl) == eps


def test_out_of_range_is_an_error():
    with pytest.raises(MaterialError, match="outside"):
        permittivity(gold(), 300.0)
    with pytest.raises(MaterialError):
        permittivity(gold(), 2500.0)


def test_malformed_tables_rejected(tmp_path):
    with pytest.raises(MaterialError, match="increasing"):
        Tabulated("bad", [800.0, 700.0], [1 + 0j, 1 + 0j])
    with pytest.raises(MaterialError, match="passivity"):
        Tabulated("bad", [700.0, 800.0], [1 - 0.1j, 1 + 0j])
    p = tmp_path / "t.csv"
    p.write_text("wavelength_nm,eps_real,eps_imag\n700,1,0\n800,x,0\n")
    with pytest.raises(MaterialError, match=":3"):
        Tabulated.from_csv(p)


def test_csv_round_trip(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("wavelength_nm,eps_real,eps_imag\n700,2.0,0.1\n900,3.0,0.3\n")
    m = Tabulated.from_csv(p)
    assert permittivity(m, 800.0) == pytest.approx(2.5 + 0.2j)


def test_negative_k_rejected():
    with pytest.raises(MaterialError):
        ConstantIndex("gain", 1.5, -0.1)


def test_drude_lorentz_is_passive_and_metallic():
    m = DrudeLorentz("drude", 1.0, 9.0, 0.07)
    eps = permittivity(m, np.linspace(500, 1500, 50))
    assert np.all(eps.imag >= 0)
    assert np.all(eps.real < 0)


def test_dispersive_factor_constant_material():
    # non-dispersive: d(w eps)/dw = eps
    assert dispersive_energy_factor(ConstantIndex("TiO2", 2.4), 785.0) == pytest.approx(5.76, rel=1e-12)


def test_dispersive_factor_gold_positive():
    # Brillouin energy density stays positive in the metal even though Re eps < 0
    assert dispersive_energy_factor(gold(), 785.0) > 0


@given(st.floats(765.0, 830.0))
def test_shipped_materials_passive(wl):
    for m in library().values():
        assert np.imag(permittivity(m, wl)) >= 0


@given(st.floats(413.3, 1937.2))
def test_interpolation_between_bracketing_rows(wl):
    g = gold()
    i = np.searchsorted(g.wavelength_nm, wl) - 1
    i = min(max(i, 0), g.wavelength_nm.size - 2)
    a, b = g.eps[i], g.eps[i + 1]
    eps = permittivity(g, wl)
    for part in (np.real, np.imag):
        lo, hi = sorted((part(a), part(b)))
        assert lo - 1e-12 <= part(eps) <= hi + 1e-12


def test_library_overrides():
    lib = library({"TiO2": 2.5, "lossy": (1.0, 0.5)})
    assert permittivity(lib["TiO2"], 800.0) == pytest.approx(6.25)
    assert permittivity(lib["lossy"], 800.0) == complex(1.0, 0.5) ** 2
