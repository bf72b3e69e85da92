"""Levenberg-Marquardt least squares and the model fits used on photon data."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .correlation import CorrelationHistogram, LifetimeHistogram, convolve_irf

FD_REL_STEP = 1e-6
MAX_ITER = 200
GRAD_TOL = 1e-8


class FitError(ValueError):
    pass


class SingularMatrixError(FitError):
    pass


@dataclass
class FitResult:
    names: list
    values: np.ndarray
    errors: np.ndarray
    covariance: np.ndarray
    chi2: float
    chi2_red: float
    dof: int
    converged: bool
    iterations: int
    flags: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.values[self.names.index(name)]

    def error(self, name):
        return self.errors[self.names.index(name)]

    def as_dict(self):
        return {
            "parameters": {n: float(v) for n, v in zip(self.names, self.values)},
            "errors": {n: float(e) for n, e in zip(self.names, self.errors)},
            "covariance": self.covariance.tolist(),
            "chi2": self.chi2,
            "chi2_red": self.chi2_red,
            "dof": self.dof,
            "converged": self.converged,
            "iterations": self.iterations,
            "flags": list(self.flags),
            **{k: v for k, v in self.extra.items() if isinstance(v, (int, float, str, bool))},
        }

    def to_json(self):
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


def numerical_jacobian(model, x, p, rel_step=FD_REL_STEP):
    """d model / d p by central differences, step rel_step * |p_i| (rel_step if p_i == 0)."""
    p = np.asarray(p, float)
    cols = []
    for i in range(p.size):
        h = rel_step * abs(p[i]) if p[i] != 0 else rel_step
        up, dn = p.copy(), p.copy()
        up[i] += h
        dn[i] -= h
        cols.append((model(x, up) - model(x, dn)) / (2 * h))
    return np.column_stack(cols)


def lm_minimize(model, x, y, sigma, p0, bounds=None, names=None, max_iter=MAX_ITER):
    """Minimise sum(((y - model(x, p)) / sigma)**2) by Levenberg-Marquardt.

    Damping starts at 1e-3 and is multiplied by 10 on a rejected step and
    divided by 10 on an accepted one; the damped normal matrix is
    J^T W J + lambda diag(J^T W J). Bounds are enforced by projection.
    Convergence requires the projected gradient of chi2 with respect to
    log|p| to have norm <= 1e-8 (1 + chi2).
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    sigma = np.asarray(sigma, float) * np.ones_like(y)
    p = np.asarray(p0, float).copy()
    names = list(names) if names is not None else [f"p{i}" for i in range(p.size)]
    if y.size < p.size:
        raise FitError(f"need at least {p.size} data points, got {y.size}")
    if np.any(~(sigma > 0)):
        raise FitError("all sigma must be > 0")
    lo, hi = (np.full(p.size, -np.inf), np.full(p.size, np.inf)) if bounds is None else (
        np.asarray(bounds[0], float), np.asarray(bounds[1], float))
    p = np.clip(p, lo, hi)
    w = 1.0 / sigma**2

    def chi2_of(q):
        r = (y - model(x, q)) / sigma
        return float(r @ r)

    def grad_norm(q, g):
        scale = np.where(q != 0, np.abs(q), 1.0)
        gs = -2 * g * scale  # d chi2 / d log|p|
        at_lo = (q <= lo) & (gs > 0)
        at_hi = (q >= hi) & (gs < 0)
        gs = np.where(at_lo | at_hi, 0.0, gs)
        return float(np.linalg.norm(gs))

    lam = 1e-3
    chi2 = chi2_of(p)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        J = numerical_jacobian(model, x, p)
        A = J.T @ (w[:, None] * J)
        g = J.T @ (w * (y - model(x, p)))
        if grad_norm(p, g) <= GRAD_TOL * (1 + abs(chi2)):
            converged = True
            break
        d = np.diag(A).copy()
        if np.any(d <= 0) or np.linalg.cond(A) > 1e15:
            raise SingularMatrixError("singular normal matrix: parameters not identifiable from data")
        improved = small = False
        while lam < 1e16:
            step = np.linalg.solve(A + lam * np.diag(d), g)
            trial = np.clip(p + step, lo, hi)
            c2 = chi2_of(trial)
            if c2 <= chi2:
                improved = True
                small = np.all(np.abs(trial - p) <= 1e-15 * (np.abs(p) + 1e-300))
                p, lam = trial, max(lam / 10, 1e-12)
                chi2 = c2
                break
            lam *= 10
        if not improved or small:
            J = numerical_jacobian(model, x, p)
            g = J.T @ (w * (y - model(x, p)))
            # no further decrease is representable; accept if the gradient is at round-off level
            converged = grad_norm(p, g) <= 1e-6 * (1 + abs(chi2))
            break

    J = numerical_jacobian(model, x, p)
    A = J.T @ (w[:, None] * J)
    if np.any(np.diag(A) <= 0) or np.linalg.cond(A) > 1e15:
        raise SingularMatrixError("singular normal matrix at solution")
    dof = max(y.size - p.size, 1)
    chi2_red = chi2 / dof
    cov = np.linalg.inv(A) * chi2_red
    cov = 0.5 * (cov + cov.T)
    flags = [] if converged else ["not_converged"]
    if it >= max_iter and not converged:
        flags.append("max_iterations")
    return FitResult(names, p, np.sqrt(np.clip(np.diag(cov), 0, None)), cov, chi2, chi2_red,
                     y.size - p.size, converged, it, flags)


# --- saturation ------------------------------------------------------------

def saturation_model(intensity, r_inf, i_sat):
    s = np.asarray(intensity, float) / i_sat
    return r_inf * s / (1 + s)


def saturation_jacobian(intensity, r_inf, i_sat):
    i = np.asarray(intensity, float)
    return np.column_stack([i / (i_sat + i), -r_inf * i / (i_sat + i) ** 2])


def fit_saturation(intensity, rate, sigma, parameterization="i_sat"):
    """Fit R = R_inf S/(1+S), S = I/I_sat. ``parameterization='inverse'`` fits 1/I_sat instead."""
    i = np.asarray(intensity, float)
    r = np.asarray(rate, float)
    if i.size < 3:
        raise FitError("saturation fit needs >= 3 points")
    # initial guess from the Lineweaver-Burk form 1/R = 1/R_inf + (I_sat/R_inf)/I
    pos = (r > 0) & (i > 0)
    r_inf0, i_sat0 = (float(r.max()) if r.size else 0.0), float(np.median(i))
    if pos.sum() >= 2:
        slope, icpt = np.polyfit(1 / i[pos], 1 / r[pos], 1, w=r[pos])
        if icpt > 0 and slope > 0:
            r_inf0, i_sat0 = 1 / icpt, slope / icpt
    if parameterization == "inverse":
        res = lm_minimize(lambda x, p: saturation_model(x, p[0], 1 / p[1]), i, r, sigma,
                          [r_inf0, 1 / i_sat0], bounds=([0, 0], [np.inf, np.inf]),
                          names=["r_inf", "inv_i_sat"])
    else:
        res = lm_minimize(lambda x, p: saturation_model(x, p[0], p[1]), i, r, sigma,
                          [r_inf0, i_sat0], bounds=([0, 1e-300], [np.inf, np.inf]),
                          names=["r_inf", "i_sat"])
    if i.max() < 5 * i.min():
        res.flags.append("intensity_span_below_5x")
    return res


# --- lifetime ---------------------------------------------------------------

def fit_exponential(hist: LifetimeHistogram, window_ps, reweight=3):
    """Fit A exp(-t/tau) to the background-corrected histogram inside ``window_ps``.

    The first pass weights by the raw counts (sigma = 1 for empty bins); later
    passes use the fitted variance, since observed-count weights bias tau low
    when bins are sparse. tau in ns.
    """
    t0, t1 = window_ps
    sel = (hist.centers_ps >= t0) & (hist.centers_ps <= t1)
    if sel.sum() < 5:
        raise FitError("fit window contains fewer than 5 bins")
    t = hist.centers_ps[sel] / 1000.0
    y = hist.corrected[sel]
    sig = np.sqrt(np.where(hist.counts[sel] > 0, hist.counts[sel], 1.0))

    semilog = _semilog_fit(t, y, sig)
    tau0 = semilog[0] if semilog and 0 < semilog[0] < 100 * (t[-1] - t[0]) else (t[-1] - t[0]) / 2
    a0 = max(float(y[0]), 1.0) * np.exp(t[0] / tau0)

    def model(x, p):
        return p[0] * np.exp(-x / p[1])

    try:
        res = lm_minimize(model, t, y, sig, [a0, tau0], bounds=([0, 1e-6], [np.inf, np.inf]),
                          names=["A", "tau"])
        # re-weight with the fitted variance (model + floor); the fixed point is the Poisson ML fit
        for _ in range(reweight):
            var = np.clip(model(t, res.values) + hist.floor, 1e-3, None)
            res = lm_minimize(model, t, y, np.sqrt(var), res.values, bounds=([0, 1e-6], [np.inf, np.inf]),
                              names=["A", "tau"])
    except SingularMatrixError:
        res = FitResult(["A", "tau"], np.array([np.nan, np.inf]), np.array([np.nan, np.inf]),
                        np.full((2, 2), np.nan), np.nan, np.nan, int(sel.sum()) - 2, False, 0,
                        ["singular"])
    span = t[-1] - t[0]
    if not (np.isfinite(res["tau"]) and res["tau"] < 10 * span and res.error("tau") < res["tau"]):
        res.converged = False
        res.flags.append("tau_unbounded")
    if semilog:
        res.extra["tau_semilog"], res.extra["tau_semilog_err"] = semilog
        res.extra["semilog_consistent"] = bool(
            abs(semilog[0] - res["tau"]) <= np.hypot(semilog[1], res.error("tau")))
    return res


def _semilog_fit(t, y, sig):
    """Weighted straight line through log(y); returns (tau, sigma_tau) or None."""
    pos = y > 3 * sig  # log of noise-dominated bins is strongly biased
    if pos.sum() < 3:
        return None
    ly = np.log(y[pos])
    w = (y[pos] / sig[pos]) ** 2
    X = np.column_stack([np.ones(pos.sum()), t[pos]])
    A = X.T @ (w[:, None] * X)
    coef = np.linalg.solve(A, X.T @ (w * ly))
    if coef[1] >= 0:
        return None
    cov = np.linalg.inv(A)
    tau = -1 / coef[1]
    return float(tau), float(np.sqrt(cov[1, 1]) * tau**2)


# --- g2 ---------------------------------------------------------------------

def g2_kernel(t_ns, s, tau_ns):
    return np.exp(-(1 + s) * np.abs(t_ns) / tau_ns)


def convolved_g2_kernel(centers_ps, bin_width_ps, s, tau_ns, sigma_ps, oversample_sigma=8):
    """exp(-(1+S)|t|/tau) convolved with the Gaussian IRF and averaged over each bin."""
    if sigma_ps == 0:
        return g2_kernel(np.asarray(centers_ps) / 1000.0, s, tau_ns)
    sub = int(np.ceil(bin_width_ps / (sigma_ps / oversample_sigma)))
    sub += (sub + 1) % 2  # odd, so a sub-sample sits on each bin centre
    h = bin_width_ps / sub
    pad = int(np.ceil(6 * sigma_ps / h))
    start = centers_ps[0] - 0.5 * bin_width_ps + 0.5 * h
    n = centers_ps.size * sub
    fine = start + (np.arange(-pad, n + pad)) * h
    conv = convolve_irf(g2_kernel(fine / 1000.0, s, tau_ns), h, sigma_ps)[pad:pad + n]
    return conv.reshape(centers_ps.size, sub).mean(axis=1)


def fit_g2(hist: CorrelationHistogram, s, tau_ns, sigma_ps=0.0, convolve=False, max_delay_ps=None,
           weights="model", reweight=3):
    """Fit g2 = 1 - B exp(-(1+S)|t|/tau) with S and tau fixed; B is the only free parameter.

    With ``convolve`` the model is IRF-convolved before comparison. The
    reported g2(0) = 1 - B always refers to the unconvolved model.

    ``weights='model'`` takes bin variances from the fitted curve (Poisson
    variance scales with the expected count), re-fitting ``reweight`` times.
    Weighting by the observed counts instead ('data') pulls the fit towards
    bins that fluctuated low, which deepens the dip at modest statistics.
    """
    if not (s > 0 and tau_ns > 0):
        raise FitError("S and tau must be positive")
    if weights not in ("model", "data"):
        raise ValueError("weights must be 'model' or 'data'")
    t = hist.centers_ps
    y, err = hist.g2, hist.errors
    sel = np.ones(t.size, bool) if max_delay_ps is None else np.abs(t) <= max_delay_ps
    y, err = y[sel], err[sel]
    err = np.where(err > 0, err, np.min(err[err > 0]) if np.any(err > 0) else 1.0)
    k = (convolved_g2_kernel(t, hist.bin_width_ps, s, tau_ns, sigma_ps) if convolve
         else g2_kernel(t / 1000.0, s, tau_ns))[sel]
    # counts per unit g2: g2 = n / norm and err = sqrt(n) / norm
    good = (y > 0) & (hist.errors[sel] > 0)
    norm = float(np.median(y[good] / err[good] ** 2)) if good.any() else None

    def solve(sig):
        # linear in B: closed-form start, LM polishes and supplies covariance
        wk = k / sig**2
        b0 = float(np.sum(wk * (1 - y)) / np.sum(wk * k))
        res = lm_minimize(lambda x, p: 1 - p[0] * k, np.arange(k.size), y, sig, [min(max(b0, 0), 1)],
                          bounds=([0.0], [1.0]), names=["B"])
        return res, b0

    res, b0 = solve(err)
    if weights == "model" and norm is not None:
        for _ in range(reweight):
            model = np.clip(1 - res["B"] * k, 0.5 / norm, None)
            res, b0 = solve(np.sqrt(model / norm))
    if b0 > 1:
        warnings.warn(f"fit wants B = {b0:.3f} > 1; clamped to 1")
        res.flags.append("B_clamped")
    res.extra["g2_0"] = float(1 - res["B"])
    res.extra["g2_0_err"] = float(res.error("B"))
    res.extra["convolved"] = bool(convolve)
    res.extra["weights"] = weights
    return res


# --- polarisation -----------------------------------------------------------

def cos2_model(theta_deg, amplitude, theta0_deg, offset):
    return amplitude * np.cos(np.deg2rad(np.asarray(theta_deg) - theta0_deg)) ** 2 + offset


def _canonical_angle(theta):
    th = (theta + 90.0) % 180.0 - 90.0
    return 90.0 if th == -90.0 else th


def fit_cos2(theta_deg, rate, sigma):
    """Fit R = amplitude cos^2(theta - theta0) + offset; theta0 returned in (-90, 90]."""
    th = np.asarray(theta_deg, float)
    r = np.asarray(rate, float)
    if th.size < 5 or np.ptp(th) < 120:
        raise FitError("degenerate span: need >= 5 angles over >= 120 degrees")
    x = np.deg2rad(2 * th)
    X = np.column_stack([np.ones_like(x), np.cos(x), np.sin(x)])
    c, *_ = np.linalg.lstsq(X, r, rcond=None)
    amp0 = 2 * np.hypot(c[1], c[2])
    th0 = np.rad2deg(np.arctan2(c[2], c[1])) / 2
    off0 = c[0] - amp0 / 2
    res = lm_minimize(lambda x_, p: cos2_model(x_, *p), th, r, sigma, [amp0, th0, off0],
                      names=["amplitude", "theta0", "offset"])
    if res["amplitude"] < 0:  # A cos^2(u) = A - A cos^2(u - 90)
        a = res["amplitude"]
        res.values = np.array([-a, res["theta0"] + 90.0, res["offset"] + a])
        jac = np.array([[-1, 0, 0], [0, 1, 0], [1, 0, 1]], float)
        res.covariance = jac @ res.covariance @ jac.T
        res.errors = np.sqrt(np.clip(np.diag(res.covariance), 0, None))
    res.values[1] = _canonical_angle(res.values[1])
    return res
