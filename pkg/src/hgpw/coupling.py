"""Emitter-waveguide coupling efficiency from detected rates.

beta = Gamma_wg / Gamma_tot with Gamma_tot = alpha (1/tau) S/(1+S) and
R_grat = Gamma_wg eta_grat = R_inf S/(1+S), hence beta = (tau/alpha) R_inf / eta.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Measured:
    value: float
    sigma: float = 0.0

    @property
    def rel(self):
        return self.sigma / self.value


@dataclass(frozen=True)
class CouplingBudget:
    tau_ns: Measured
    alpha: Measured
    r_inf: Measured   # counts/s at the grating detector, fully saturated
    eta: Measured     # grating out-coupling x collection x detection

    def __post_init__(self):
        for name in ("tau_ns", "alpha", "r_inf", "eta"):
            q = getattr(self, name)
            if not q.value > 0:
                raise ValueError(f"{name} must be > 0")
            if q.sigma < 0:
                raise ValueError(f"{name} uncertainty must be >= 0")
        if not 0.5 < self.alpha.value <= 1:
            raise ValueError("alpha must lie in (0.5, 1]")
        if not 0 < self.eta.value <= 1:
            raise ValueError("eta must lie in (0, 1]")

    @classmethod
    def reference(cls):
        """The measured single-molecule budget used as the default."""
        return cls(Measured(2.74, 0.02), Measured(0.555, 0.010), Measured(96e3, 3e3),
                   Measured(4.1e-3, 0.5e-3))


@dataclass(frozen=True)
class BetaResult:
    beta: float
    sigma: float
    contributions: dict = field(default_factory=dict)  # input -> (sigma_i/x_i)^2
    unphysical: bool = False

    def as_dict(self):
        return {"beta": self.beta, "sigma_beta": self.sigma, "relative_variance": dict(self.contributions),
                "unphysical": self.unphysical}


def beta_from_measurement(budget: CouplingBudget) -> BetaResult:
    """beta = (tau/alpha) (R_inf/eta), first-order propagation with independent inputs."""
    tau_s = budget.tau_ns.value * 1e-9
    beta = tau_s / budget.alpha.value * budget.r_inf.value / budget.eta.value
    contrib = {name: getattr(budget, name).rel ** 2 for name in ("tau_ns", "alpha", "r_inf", "eta")}
    rel = np.sqrt(sum(contrib.values()))
    return BetaResult(float(beta), float(beta * rel), contrib, unphysical=not 0 <= beta <= 1)


def beta_monte_carlo(budget: CouplingBudget, n=100_000, seed=0):
    """Sampling check of the linearised uncertainty: (mean, std) of beta over Gaussian inputs."""
    rng = np.random.default_rng(seed)
    draw = {k: rng.normal(getattr(budget, k).value, getattr(budget, k).sigma, n)
            for k in ("tau_ns", "alpha", "r_inf", "eta")}
    b = draw["tau_ns"] * 1e-9 / draw["alpha"] * draw["r_inf"] / draw["eta"]
    return float(b.mean()), float(b.std(ddof=1))


def gamma_total(tau_ns, alpha, s):
    """Total emission rate alpha (1/tau) S/(1+S), in 1/s."""
    if not tau_ns > 0 or s < 0:
        raise ValueError("need tau > 0 and S >= 0")
    return alpha / (tau_ns * 1e-9) * s / (1 + s)


def detected_rate(budget: CouplingBudget, s):
    """Grating detector rate R_inf S/(1+S)."""
    if s < 0:
        raise ValueError("S must be >= 0")
    return budget.r_inf.value * s / (1 + s)


# --- spectral efficiency ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class Curve:
    """Tabulated function of wavelength (nm), linear between samples, zero outside."""

    wavelength_nm: np.ndarray
    values: np.ndarray
    name: str = ""

    def __post_init__(self):
        wl = np.asarray(self.wavelength_nm, float)
        v = np.asarray(self.values, float)
        if wl.shape != v.shape or wl.ndim != 1 or np.any(np.diff(wl) <= 0):
            raise ValueError(f"curve {self.name!r}: wavelengths must be 1-D and strictly increasing")
        object.__setattr__(self, "wavelength_nm", wl)
        object.__setattr__(self, "values", v)

    def __call__(self, wl):
        return np.interp(wl, self.wavelength_nm, self.values, left=0.0, right=0.0)

    @property
    def support(self):
        return float(self.wavelength_nm[0]), float(self.wavelength_nm[-1])

    def integral(self):
        return float(np.trapezoid(self.values, self.wavelength_nm))

    def normalized(self):
        return Curve(self.wavelength_nm, self.values / self.integral(), self.name)


GRATING_ANCHORS = ((765.0, 0.02), (800.0, 0.10), (830.0, 0.02))


@dataclass(frozen=True)
class GaussianGrating:
    """eta_g(lambda) = peak exp(-(lambda - center)^2 / (2 width^2))."""

    peak: float
    center_nm: float
    width_nm: float

    def __call__(self, wl):
        return self.peak * np.exp(-0.5 * ((np.asarray(wl, float) - self.center_nm) / self.width_nm) ** 2)

    def curve(self, wl):
        return Curve(np.asarray(wl, float), self(wl), "grating")

    @classmethod
    def through(cls, anchors=GRATING_ANCHORS):
        """Least-squares Gaussian through (wavelength, efficiency) anchors, fitted in log space.

        With three anchors the fit is exact.
        """
        wl, eta = np.array(anchors, float).T
        c2, c1, c0 = np.polyfit(wl, np.log(eta), 2)
        if c2 >= 0:
            raise ValueError("anchors do not describe a peaked curve")
        width = np.sqrt(-1 / (2 * c2))
        center = c1 * width**2
        peak = np.exp(c0 + center**2 / (2 * width**2))
        return cls(float(peak), float(center), float(width))


C_NM_THZ = 299792.458  # speed of light in nm*THz


def gaussian_spectrum(center_nm, fwhm_thz, wl):
    """Emission spectrum Gaussian in frequency, returned as a normalised density per nm."""
    wl = np.asarray(wl, float)
    nu, nu0 = C_NM_THZ / wl, C_NM_THZ / center_nm
    sig = fwhm_thz / (2 * np.sqrt(2 * np.log(2)))
    dens = np.exp(-0.5 * ((nu - nu0) / sig) ** 2) * C_NM_THZ / wl**2
    return Curve(wl, dens, "spectrum").normalized()


def gaussian_line(center_nm, sigma_nm, wl):
    wl = np.asarray(wl, float)
    return Curve(wl, np.exp(-0.5 * ((wl - center_nm) / sigma_nm) ** 2), "spectrum").normalized()


def spectral_efficiency(spectrum: Curve, grating, optics=None):
    """eta = int s(lambda) eta_g(lambda) T(lambda) d lambda, trapezoid on the union grid.

    ``grating`` and ``optics`` may be Curves or callables; callables are sampled
    on the grid of the tabulated inputs. The integral runs over the overlap of
    the tabulated supports.
    """
    if abs(spectrum.integral() - 1) > 1e-6:
        raise ValueError("spectrum must be normalised to unit area")
    tables = [c for c in (spectrum, grating, optics) if isinstance(c, Curve)]
    lo = max(c.support[0] for c in tables)
    hi = min(c.support[1] for c in tables)
    if lo >= hi:
        raise ValueError("wavelength supports of the inputs do not overlap")
    grid = np.unique(np.concatenate([c.wavelength_nm for c in tables]))
    grid = np.unique(np.concatenate([[lo, hi], grid[(grid > lo) & (grid < hi)]]))
    integrand = spectrum(grid) * grating(grid) * (1.0 if optics is None else optics(grid))
    return float(np.trapezoid(integrand, grid))
