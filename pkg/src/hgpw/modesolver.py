"""Full-vector finite-difference mode solver and derived guided-mode quantities.

Yee placement on the rectilinear mesh (cell edges x_i, y_j):

    Ex  (xc_i, y_j)   Ey  (x_i, yc_j)   Ez  (x_i, y_j)
    Hx  (x_i, yc_j)   Hy  (xc_i, y_j)   Hz  (xc_i, yc_j)

Fields vary as exp(i*(beta*z - omega*t)). The outer boundary is a perfect
electric conductor, i.e. tangential E vanishes on the domain walls. The
transverse-E operator is normalised by k0**2 so that its eigenvalue is n_eff**2.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator

from .geometry import REGIONS, CrossSection, Mesh, build_mesh, region_masks
from .materials import dispersive_energy_factor

log = logging.getLogger(__name__)

EPS0 = 8.8541878128e-12
MU0 = 1.25663706212e-6
Z0 = np.sqrt(MU0 / EPS0)

RESIDUAL_TOL = 1e-8
ARPACK_TOL = 1e-10
ARPACK_MAXITER = 500


class ModeSolverError(RuntimeError):
    pass


class NoGuidedModeError(ModeSolverError):
    pass


@dataclass(frozen=True, eq=False)
class ModeSolution:
    n_eff: complex
    wavelength: float
    e_field: np.ndarray = field(repr=False)  # (nx, ny, 3) at cell centres
    h_field: np.ndarray = field(repr=False)  # (nx, ny, 3), A/m for e_field in V/m
    eigen_residual: float = 0.0
    mesh: Mesh = field(default=None, repr=False)
    # raw Yee-grid transverse vector, kept for overlap tracking between solves
    vector: np.ndarray = field(default=None, repr=False)

    @property
    def energy_density(self):
        """Time-averaged energy density per cell (dispersive form), J/m^3 up to scale."""
        return _energy_density(self.mesh, self.wavelength, self.e_field, self.h_field)

    def energy(self):
        return float(np.sum(self.energy_density * self.mesh.areas))


def _diff_1d(edges):
    """Forward (nodes -> centres) and backward (centres -> nodes) 1D derivatives."""
    d = np.diff(edges)
    n = d.size
    fwd = sp.diags([-1.0 / d, 1.0 / d], [0, 1], shape=(n, n + 1), format="csr")
    c = 0.5 * (edges[1:] + edges[:-1])
    dd = np.empty(n + 1)
    dd[1:-1] = np.diff(c)
    dd[0], dd[-1] = d[0] / 2, d[-1] / 2
    bwd = sp.diags([1.0 / dd[:-1], -1.0 / dd[1:]], [0, -1], shape=(n + 1, n), format="csr")
    return fwd, bwd


def _edge_average(eps, w, axis):
    """Average cell values onto the n+1 edges along ``axis`` with weights ``w`` (cell sizes)."""
    eps = np.moveaxis(eps, axis, 0)
    w = w.reshape((-1,) + (1,) * (eps.ndim - 1))
    num = np.zeros((eps.shape[0] + 1,) + eps.shape[1:], dtype=eps.dtype)
    den = np.zeros((eps.shape[0] + 1,) + (1,) * (eps.ndim - 1))
    num[:-1] += eps * w
    num[1:] += eps * w
    den[:-1] += w
    den[1:] += w
    return np.moveaxis(num / den, 0, axis)


@dataclass(frozen=True, eq=False)
class _Operators:
    nx: int
    ny: int
    curl: sp.csr_matrix      # [Ex; Ey] -> dEy/dx - dEx/dy at centres
    div: sp.csr_matrix       # [Ex; Ey] -> div(eps E_t) at nodes
    grad: sp.csr_matrix      # nodes -> [d/dx on Ex grid; d/dy on Ey grid]
    curl_back: sp.csr_matrix  # centres -> [-d/dy on Ex grid; d/dx on Ey grid]
    eps_t: np.ndarray
    eps_z: np.ndarray
    node_mask: np.ndarray
    interior: np.ndarray     # indices of non-boundary transverse unknowns
    k0: float


def _operators(mesh: Mesh, wavelength) -> _Operators:
    nx, ny = mesh.shape
    eps = mesh.permittivity_at(wavelength)
    fx, bx = _diff_1d(mesh.x)
    fy, by = _diff_1d(mesh.y)
    I = sp.identity
    ex_n, ey_n = nx * (ny + 1), (nx + 1) * ny

    dy_ex = sp.kron(I(nx), fy)            # Ex -> centres
    dx_ey = sp.kron(fx, I(ny))            # Ey -> centres
    curl = sp.hstack([-dy_ex, dx_ey]).tocsr()
    curl_back = sp.vstack([-sp.kron(I(nx), by), sp.kron(bx, I(ny))]).tocsr()

    eps_x = _edge_average(eps, mesh.dy, axis=1)        # (nx, ny+1)
    eps_y = _edge_average(eps, mesh.dx, axis=0)        # (nx+1, ny)
    eps_z = _edge_average(_edge_average(eps, mesh.dx, 0), mesh.dy, 1)  # (nx+1, ny+1)
    eps_t = np.concatenate([eps_x.ravel(), eps_y.ravel()])

    div = sp.hstack([sp.kron(bx, I(ny + 1)), sp.kron(I(nx + 1), by)]).tocsr()
    grad = sp.vstack([sp.kron(fx, I(ny + 1)), sp.kron(I(nx + 1), fy)]).tocsr()

    node_mask = np.zeros((nx + 1, ny + 1), bool)
    node_mask[1:-1, 1:-1] = True
    ex_int = np.zeros((nx, ny + 1), bool)
    ex_int[:, 1:-1] = True
    ey_int = np.zeros((nx + 1, ny), bool)
    ey_int[1:-1, :] = True
    interior = np.flatnonzero(np.concatenate([ex_int.ravel(), ey_int.ravel()]))
    assert interior.size <= ex_n + ey_n
    return _Operators(nx, ny, curl, div, grad, curl_back, eps_t, eps_z.ravel(),
                      node_mask.ravel(), interior, 2 * np.pi / wavelength)


def transverse_operator(mesh: Mesh, wavelength):
    """Sparse operator A with A @ [Ex; Ey] = n_eff**2 [Ex; Ey] on interior unknowns."""
    ops = _operators(mesh, wavelength)
    inv_ez = sp.diags(np.where(ops.node_mask, 1.0 / ops.eps_z, 0.0))
    full = (sp.diags(ops.eps_t)
            + (ops.curl_back @ ops.curl
               + ops.grad @ inv_ez @ ops.div @ sp.diags(ops.eps_t)) / ops.k0**2)
    full = full.tocsr()
    idx = ops.interior
    return full[idx][:, idx].tocsc(), ops


def _fields(ops: _Operators, vec_int, n_eff):
    nx, ny, k0 = ops.nx, ops.ny, ops.k0
    beta = k0 * n_eff
    et = np.zeros(nx * (ny + 1) + (nx + 1) * ny, dtype=complex)
    et[ops.interior] = vec_int
    div = ops.div @ (ops.eps_t * et)
    ez = np.where(ops.node_mask, 1j * div / (beta * ops.eps_z), 0.0)
    grad_ez = ops.grad @ ez
    hz = ops.curl @ et / (1j * k0)
    n_ex = nx * (ny + 1)
    ex, ey = et[:n_ex].reshape(nx, ny + 1), et[n_ex:].reshape(nx + 1, ny)
    dez_dx, dez_dy = grad_ez[:n_ex].reshape(nx, ny + 1), grad_ez[n_ex:].reshape(nx + 1, ny)
    hx = (dez_dy - 1j * beta * ey) / (1j * k0)   # on Ey positions
    hy = (1j * beta * ex - dez_dx) / (1j * k0)   # on Ex positions
    ez = ez.reshape(nx + 1, ny + 1)

    e = np.stack([
        0.5 * (ex[:, 1:] + ex[:, :-1]),
        0.5 * (ey[1:, :] + ey[:-1, :]),
        0.25 * (ez[1:, 1:] + ez[:-1, 1:] + ez[1:, :-1] + ez[:-1, :-1]),
    ], axis=-1)
    h = np.stack([
        0.5 * (hx[1:, :] + hx[:-1, :]),
        0.5 * (hy[:, 1:] + hy[:, :-1]),
        hz.reshape(nx, ny),
    ], axis=-1) / Z0
    return e, h


def _energy_factor(mesh: Mesh, wavelength):
    fac = np.empty(mesh.shape)
    for code, region in enumerate(REGIONS):
        sel = mesh.labels == code
        if sel.any():
            fac[sel] = dispersive_energy_factor(mesh.region_materials[region], wavelength)
    return fac


def _energy_density(mesh, wavelength, e, h):
    fac = _energy_factor(mesh, wavelength)
    return 0.25 * EPS0 * fac * np.sum(np.abs(e) ** 2, -1) + 0.25 * MU0 * np.sum(np.abs(h) ** 2, -1)


def _residual(A, lam, v):
    return float(np.linalg.norm(A @ v - lam * v) / np.linalg.norm(v))


def _refine(A, lam, v, max_iter=4):
    """Rayleigh-quotient-style refinement with a fresh factorisation at the eigenvalue."""
    res = _residual(A, lam, v)
    eye = sp.identity(A.shape[0], format="csc")
    for _ in range(max_iter):
        if res <= 0.01 * RESIDUAL_TOL:
            break
        lu = spla.splu((A - lam * eye).tocsc())
        w = lu.solve(v)
        w /= np.linalg.norm(w)
        lam_new = np.vdot(w, A @ w)
        res_new = _residual(A, lam_new, w)
        if res_new >= res:
            break
        lam, v, res = lam_new, w, res_new
    return lam, v, res


def material_index_range(mesh: Mesh, wavelength):
    present = np.unique(mesh.labels)
    ns = [np.sqrt(mesh.region_materials[REGIONS[c]].permittivity(wavelength)).real for c in present]
    return float(min(ns)), float(max(ns))


def default_guess(mesh: Mesh, wavelength):
    """Core index: the upper hybrid branch sits just below it (or above, for narrow gaps)."""
    return float(np.sqrt(mesh.region_materials["core"].permittivity(wavelength)).real)


def solve_modes(mesh: Mesh, wavelength=None, n_guess=None, count=4, require_guided=True):
    """Modes nearest ``n_guess``, sorted by Re(n_eff) descending.

    Each accepted mode has eigen-residual <= 1e-8 in the n_eff**2-normalised
    operator; modes that cannot be refined to that level are dropped.
    """
    wavelength = float(mesh.wavelength if wavelength is None else wavelength)
    if n_guess is None:
        n_guess = default_guess(mesh, wavelength)
    lo, hi = material_index_range(mesh, wavelength)
    if not lo - 1e-12 <= n_guess <= hi + 1e-12:
        raise ValueError(f"n_guess {n_guess} outside material index range [{lo:.4g}, {hi:.4g}]")
    A, ops = transverse_operator(mesh, wavelength)
    k = min(count, A.shape[0] - 2)
    try:
        # fixed start vector: ARPACK's default random start breaks bit-reproducibility
        vals, vecs = spla.eigs(A, k=k, sigma=n_guess**2, which="LM", tol=ARPACK_TOL,
                               maxiter=ARPACK_MAXITER, v0=np.ones(A.shape[0], complex))
    except spla.ArpackNoConvergence as exc:
        raise ModeSolverError(
            f"eigensolver did not converge within {ARPACK_MAXITER} iterations "
            f"({len(exc.eigenvalues)} of {k} modes converged)"
        ) from exc

    n_sub = np.sqrt(mesh.region_materials["substrate"].permittivity(wavelength)).real
    modes = []
    for lam, v in zip(vals, vecs.T):
        lam, v, res = _refine(A, lam, v)
        if res > RESIDUAL_TOL:
            log.warning("dropping mode n^2=%s: residual %.2e", lam, res)
            continue
        n_eff = np.sqrt(lam)
        if n_eff.real < 0:
            n_eff = -n_eff
        e, h = _fields(ops, v, n_eff)
        modes.append(_normalise(mesh, wavelength, n_eff, e, h, v, res))
    if require_guided:
        modes = [m for m in modes if m.n_eff.real > n_sub]
        if not modes:
            raise NoGuidedModeError(
                f"no guided mode found: all Re(n_eff) below substrate index {n_sub:.4f}"
            )
    modes.sort(key=lambda m: -m.n_eff.real)
    return modes


def _normalise(mesh, wavelength, n_eff, e, h, v, res):
    u = _energy_density(mesh, wavelength, e, h)
    total = float(np.sum(u * mesh.areas))
    if not (np.isfinite(total) and total > 0):
        raise ModeSolverError("mode has non-positive or non-finite energy")
    scale = 1.0 / np.sqrt(total)
    flat = e.reshape(-1)
    phase = flat[np.argmax(np.abs(flat))]
    scale = scale * np.conj(phase) / abs(phase)
    return ModeSolution(n_eff=complex(n_eff), wavelength=wavelength, e_field=e * scale,
                        h_field=h * scale, eigen_residual=res, mesh=mesh, vector=v * scale)


def propagation_length(mode: ModeSolution):
    """1/e intensity decay length in um; returns (L, is_infinite)."""
    im = mode.n_eff.imag if isinstance(mode, ModeSolution) else complex(mode).imag
    wl = mode.wavelength if isinstance(mode, ModeSolution) else None
    return _propagation_length(wl, im)


LOSSLESS_TOL = 1e-10  # |Im n_eff| below this is solver round-off


def _propagation_length(wavelength_nm, im_neff):
    if im_neff <= LOSSLESS_TOL:
        return np.inf, True
    return wavelength_nm / (4 * np.pi * im_neff) / 1000.0, False


def energy_fractions(mode: ModeSolution, masks: dict | None = None):
    """Fraction of the mode's time-averaged energy in each masked region."""
    mesh = mode.mesh
    if masks is None:
        masks = region_masks(mesh)
    n = mesh.labels.size
    cover = np.zeros(n, int)
    for idx in masks.values():
        np.add.at(cover, idx, 1)
    if np.any(cover != 1):
        raise ValueError("masks do not partition the mesh")
    w = (mode.energy_density * mesh.areas).ravel()
    total = w.sum()
    return {r: float(w[idx].sum() / total) for r, idx in masks.items()}


def gap_window(mesh: Mesh, margin=250.0):
    """Flat indices of cells within ``margin`` nm laterally of the gap opening."""
    gap_cols = np.flatnonzero(np.any(mesh.labels == REGIONS.index("gap"), axis=1))
    if gap_cols.size == 0:
        return np.arange(mesh.labels.size)
    lo, hi = mesh.x[gap_cols[0]] - margin, mesh.x[gap_cols[-1] + 1] + margin
    cols = (mesh.xc >= lo) & (mesh.xc <= hi)
    return np.flatnonzero(np.broadcast_to(cols[:, None], mesh.shape).ravel())


def select_hybrid(modes, masks=None, margin=250.0):
    """Mode with the largest energy fraction in core plus gap, counted under the gap opening.

    Restricting to a lateral window around the gap rejects the box-like slab
    modes spread under the metal, which carry a large core fraction too.
    """
    mesh = modes[0].mesh
    if masks is None:
        masks = region_masks(mesh)
    window = gap_window(mesh, margin)
    target = np.intersect1d(np.concatenate([masks["core"], masks["gap"]]), window)

    def score(m):
        w = (m.energy_density * mesh.areas).ravel()
        return w[target].sum() / w.sum()
    return max(modes, key=score)


def _overlap(a: ModeSolution, b: ModeSolution):
    num = abs(np.vdot(a.vector, b.vector))
    return num / (np.linalg.norm(a.vector) * np.linalg.norm(b.vector))


def track_mode(reference: ModeSolution, wavelength, count=4):
    """Mode at ``wavelength`` (same mesh) with the largest field overlap with ``reference``."""
    modes = solve_modes(reference.mesh, wavelength, n_guess=reference.n_eff.real,
                        count=count, require_guided=False)
    return max(modes, key=lambda m: _overlap(reference, m))


def group_index(mode: ModeSolution, dlambda=1.0, count=4):
    """n_g = n - lambda dn/dlambda from central differences of Re(n_eff) at lambda +- dlambda."""
    wl = mode.wavelength
    plus = track_mode(mode, wl + dlambda, count)
    minus = track_mode(mode, wl - dlambda, count)
    dn = (plus.n_eff.real - minus.n_eff.real) / (2 * dlambda)
    return mode.n_eff.real - wl * dn


def hybrid_mode(mesh: Mesh, wavelength=None, n_guess=None, count=4):
    modes = solve_modes(mesh, wavelength, n_guess, count)
    return select_hybrid(modes, region_masks(mesh))


@dataclass
class SweepRow:
    gap: float
    n_eff: complex
    length_um: float
    fractions: dict
    error: str | None = None
    mode: ModeSolution | None = field(default=None, repr=False)


def _sweep_one(base: CrossSection, gap, wavelength, policy, n_guess, count):
    try:
        mesh = build_mesh(base.with_gap(gap), policy, wavelength)
        mode = hybrid_mode(mesh, wavelength, n_guess, count)
    except Exception as exc:  # annotated and re-raised by gap_sweep
        raise ModeSolverError(f"gap {gap:g} nm: {exc}") from exc
    L, _ = propagation_length(mode)
    return SweepRow(gap=float(gap), n_eff=mode.n_eff, length_um=L,
                    fractions=energy_fractions(mode), mode=mode)


def gap_sweep(base: CrossSection, gaps, wavelength=785.0, policy="default", n_guess=None,
              count=4, workers=1):
    """One row per gap width; rows are independent solves."""
    gaps = list(gaps)
    if len(gaps) < 2:
        raise ValueError("need >=2 gaps")
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(lambda g: _sweep_one(base, g, wavelength, policy, n_guess, count), gaps))
    return [_sweep_one(base, g, wavelength, policy, n_guess, count) for g in gaps]


SWEEP_COLUMNS = ("gap_nm", "neff_re", "neff_im", "L_um", "frac_core", "frac_gap", "frac_metal",
                 "frac_spacer", "frac_cover", "frac_substrate", "frac_air")


def sweep_table(rows):
    out = []
    for r in rows:
        f = r.fractions
        out.append((r.gap, r.n_eff.real, r.n_eff.imag, r.length_um, f["core"], f["gap"], f["metal"],
                    f["spacer"], f["cover"], f["substrate"], f["air"]))
    return out


def field_at(mode: ModeSolution, position):
    """Complex E vector at (x, y) nm, bilinear between cell centres."""
    mesh = mode.mesh
    x, y = position
    if not (mesh.x[0] <= x <= mesh.x[-1] and mesh.y[0] <= y <= mesh.y[-1]):
        raise ValueError(f"dipole position {position} outside the domain")
    interp = RegularGridInterpolator((mesh.xc, mesh.yc), mode.e_field, bounds_error=False,
                                     fill_value=None)
    return interp([[x, y]])[0]


def guided_emission_estimate(mode: ModeSolution, position, orientation, environment_index,
                             gamma_other=None, gamma_hom=1.0, n_group=None):
    """Emission rate into one direction of the guided mode, relative to a homogeneous medium.

    Gamma_wg / Gamma_hom = 3 lambda^2 n_g / (8 pi n_env) * |d.e(r0)|^2 / int Re[d(w eps)/dw] |e|^2 dA

    With ``gamma_other`` (same units as ``gamma_hom``) also returns
    beta = 2 Gamma_wg / (2 Gamma_wg + gamma_other), both directions counted.
    This is a single-mode estimate, not a full emission simulation.
    """
    d = np.asarray(orientation, dtype=float)
    d = d / np.linalg.norm(d)
    e0 = field_at(mode, position)
    proj = abs(np.dot(d, e0)) ** 2
    mesh = mode.mesh
    fac = _energy_factor(mesh, mode.wavelength)
    norm = float(np.sum(fac * np.sum(np.abs(mode.e_field) ** 2, -1) * mesh.areas))
    if n_group is None:
        n_group = group_index(mode)
    wl = mode.wavelength
    ratio = 3 * wl**2 * n_group / (8 * np.pi * environment_index) * proj / norm
    out = {"gamma_wg_over_gamma_hom": float(ratio), "n_group": float(n_group)}
    if gamma_other is not None:
        g_wg = ratio * gamma_hom
        out["beta_estimate"] = float(2 * g_wg / (2 * g_wg + gamma_other)) if g_wg > 0 else 0.0
    return out
