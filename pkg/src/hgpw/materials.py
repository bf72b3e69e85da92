"""Material dispersion models.

Time convention used everywhere in the package: fields vary as exp(-i*omega*t),
so passive (absorbing) media have Im(eps) >= 0 and decaying guided modes have
Im(n_eff) >= 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

HC_EV_NM = 1239.841984  # photon energy [eV] * wavelength [nm]


class MaterialError(ValueError):
    pass


@dataclass(frozen=True)
class ConstantIndex:
    name: str
    n: float
    k: float = 0.0

    def __post_init__(self):
        if self.k < 0:
            raise MaterialError(f"{self.name}: extinction coefficient must be >= 0")

    def permittivity(self, wavelength_nm):
        wl = np.asarray(wavelength_nm, dtype=float)
        _check_positive(self.name, wl)
        eps = complex(self.n, self.k) ** 2
        return np.full(wl.shape, eps, dtype=complex) if wl.ndim else eps

    @property
    def valid_range(self):
        return (0.0, np.inf)


@dataclass(frozen=True)
class Tabulated:
    """Permittivity table, linearly interpolated in wavelength.

    Queries outside the tabulated range raise instead of extrapolating.
    """

    name: str
    wavelength_nm: np.ndarray
    eps: np.ndarray = field(repr=False)

    def __post_init__(self):
        wl = np.asarray(self.wavelength_nm, dtype=float)
        eps = np.asarray(self.eps, dtype=complex)
        if wl.ndim != 1 or wl.shape != eps.shape or wl.size < 2:
            raise MaterialError(f"{self.name}: malformed table")
        if np.any(np.diff(wl) <= 0):
            raise MaterialError(f"{self.name}: table wavelengths must be strictly increasing")
        if np.any(eps.imag < 0):
            raise MaterialError(f"{self.name}: table violates passivity (Im eps < 0)")
        object.__setattr__(self, "wavelength_nm", wl)
        object.__setattr__(self, "eps", eps)

    @property
    def valid_range(self):
        return (float(self.wavelength_nm[0]), float(self.wavelength_nm[-1]))

    def permittivity(self, wavelength_nm):
        wl = np.asarray(wavelength_nm, dtype=float)
        lo, hi = self.valid_range
        if np.any((wl < lo) | (wl > hi)) or np.any(~np.isfinite(wl)):
            raise MaterialError(
                f"{self.name}: wavelength outside tabulated range [{lo:g}, {hi:g}] nm"
            )
        re = np.interp(wl, self.wavelength_nm, self.eps.real)
        im = np.interp(wl, self.wavelength_nm, self.eps.imag)
        out = re + 1j * im
        return out if wl.ndim else complex(out)

    @classmethod
    def from_csv(cls, path, name=None):
        path = Path(path)
        return cls(name or path.stem, *_read_table(path.read_text(encoding="utf-8"), str(path)))


@dataclass(frozen=True)
class DrudeLorentz:
    """eps(w) = eps_inf - wp^2/(w^2 + i g w) + sum_j f_j w_j^2/(w_j^2 - w^2 - i g_j w).

    All frequencies in eV. ``oscillators`` holds (f_j, w_j, g_j) triples.
    """

    name: str
    eps_inf: float
    plasma_ev: float
    damping_ev: float
    oscillators: tuple = ()
    valid_nm: tuple = (200.0, 2000.0)

    def __post_init__(self):
        if self.damping_ev < 0 or any(g < 0 or f < 0 for f, _, g in self.oscillators):
            raise MaterialError(f"{self.name}: negative damping or strength breaks passivity")

    @property
    def valid_range(self):
        return self.valid_nm

    def permittivity(self, wavelength_nm):
        wl = np.asarray(wavelength_nm, dtype=float)
        lo, hi = self.valid_nm
        if np.any((wl < lo) | (wl > hi)):
            raise MaterialError(f"{self.name}: wavelength outside [{lo:g}, {hi:g}] nm")
        w = HC_EV_NM / wl
        eps = self.eps_inf - self.plasma_ev**2 / (w**2 + 1j * self.damping_ev * w)
        for f, w0, g in self.oscillators:
            eps = eps + f * w0**2 / (w0**2 - w**2 - 1j * g * w)
        return eps if wl.ndim else complex(eps)


MaterialModel = ConstantIndex | Tabulated | DrudeLorentz


def _check_positive(name, wl):
    if np.any(~(wl > 0)):
        raise MaterialError(f"{name}: wavelength must be positive")


def _read_table(text, source):
    reader = csv.reader(text.splitlines())
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["wavelength_nm", "eps_real", "eps_imag"]:
        raise MaterialError(f"{source}: expected header 'wavelength_nm,eps_real,eps_imag'")
    wl, eps = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            a, b, c = (float(v) for v in row)
        except ValueError:
            raise MaterialError(f"{source}:{lineno}: malformed row {row!r}") from None
        wl.append(a)
        eps.append(complex(b, c))
    return np.array(wl), np.array(eps)


def permittivity(material: MaterialModel, wavelength_nm):
    """Complex relative permittivity of ``material`` at vacuum wavelength(s) in nm."""
    return material.permittivity(wavelength_nm)


def dispersive_energy_factor(material: MaterialModel, wavelength_nm, rel_step=1e-3):
    """Re[d(omega*eps)/d(omega)] by central difference in angular frequency."""
    w0 = 1.0 / float(wavelength_nm)
    wp, wm = w0 * (1 + rel_step), w0 * (1 - rel_step)
    ep = permittivity(material, 1.0 / wp)
    em = permittivity(material, 1.0 / wm)
    return float(np.real((wp * ep - wm * em) / (wp - wm)))


def gold() -> Tabulated:
    """Johnson & Christy gold, 413-1937 nm, shipped with the package."""
    text = resources.files("hgpw.data").joinpath("gold_johnson_christy.csv").read_text("utf-8")
    return Tabulated("gold", *_read_table(text, "gold_johnson_christy.csv"))


DEFAULT_INDICES = {"TiO2": 2.40, "SiO2": 1.45, "anthracene": 1.80, "GaP": 3.2, "air": 1.0}


def library(overrides: dict | None = None) -> dict[str, MaterialModel]:
    """Named materials used by the device. ``overrides`` maps name -> index or model."""
    lib: dict[str, MaterialModel] = {k: ConstantIndex(k, n) for k, n in DEFAULT_INDICES.items()}
    lib["gold"] = gold()
    for key, value in (overrides or {}).items():
        if isinstance(value, (int, float)):
            lib[key] = ConstantIndex(key, float(value))
        elif isinstance(value, Sequence) and len(value) == 2:
            lib[key] = ConstantIndex(key, float(value[0]), float(value[1]))
        else:
            lib[key] = value
    return lib
