"""HGPW cross-section and its nonuniform rectilinear mesh.

Coordinates: x is lateral (gap centred at x = 0), y is vertical (substrate
bottom at y = 0), z is the propagation direction. All lengths in nm.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from .materials import MaterialModel, library

REGIONS = ("substrate", "core", "spacer", "metal", "gap", "cover", "air")

DEFAULT_REGION_MATERIALS = {
    "substrate": "SiO2",
    "core": "TiO2",
    "spacer": "SiO2",
    "metal": "gold",
    "gap": "anthracene",
    "cover": "anthracene",
    "air": "air",
}


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class CrossSection:
    gap: float = 200.0
    core_thickness: float = 300.0
    spacer_thickness: float = 80.0
    metal_thickness: float = 100.0
    cover_thickness: float = 60.0
    substrate_thickness: float = 1500.0
    air_thickness: float = 1000.0
    domain_width: float = 4000.0
    region_materials: dict = field(default_factory=lambda: dict(DEFAULT_REGION_MATERIALS))
    materials: dict = field(default_factory=library, repr=False)

    def __post_init__(self):
        for name in ("gap", "core_thickness", "spacer_thickness", "metal_thickness",
                     "cover_thickness", "substrate_thickness", "air_thickness", "domain_width"):
            value = getattr(self, name)
            if not value > 0:
                if name == "gap":
                    raise GeometryError("degenerate gap: gap width must be > 0")
                raise GeometryError(f"nonpositive dimension: {name} = {value}")
        if self.gap >= self.domain_width:
            raise GeometryError(
                f"gap width {self.gap} nm must be smaller than the lateral domain {self.domain_width} nm"
            )
        unknown = set(self.region_materials) - set(REGIONS)
        if unknown:
            raise GeometryError(f"unknown region(s): {sorted(unknown)}")
        missing = [r for r in REGIONS if r not in self.region_materials]
        if missing:
            raise GeometryError(f"no material assigned to region(s): {missing}")
        for region, mat in self.region_materials.items():
            if mat not in self.materials:
                raise GeometryError(f"unknown material name {mat!r} for region {region!r}")

    # vertical interfaces, bottom to top
    @property
    def y_interfaces(self):
        t = [self.substrate_thickness, self.core_thickness, self.spacer_thickness,
             self.metal_thickness, self.cover_thickness, self.air_thickness]
        return np.concatenate([[0.0], np.cumsum(t)])

    @property
    def metal_span(self):
        y = self.y_interfaces
        return float(y[3]), float(y[4])

    @property
    def height(self):
        return float(self.y_interfaces[-1])

    def material(self, region) -> MaterialModel:
        return self.materials[self.region_materials[region]]

    def with_gap(self, gap):
        return replace(self, gap=float(gap))

    def label_at(self, x, y):
        """Region label codes (indices into REGIONS) for points x, y."""
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        yi = self.y_interfaces
        layer = np.clip(np.searchsorted(yi, y, side="right") - 1, 0, 5)
        # layer index -> region: 0 substrate, 1 core, 2 spacer, 3 metal/gap, 4 cover, 5 air
        codes = np.array([0, 1, 2, 3, 5, 6])[layer]
        in_gap = (layer == 3) & (np.abs(x) < self.gap / 2)
        return np.where(in_gap, REGIONS.index("gap"), codes)


def build_cross_section(config: dict | None = None) -> CrossSection:
    """CrossSection from a flat dict of overrides; unspecified fields take defaults.

    Recognised keys are the CrossSection field names plus ``materials`` (name ->
    index, (n, k) pair or model) and ``region_materials`` (region -> name).
    """
    config = dict(config or {})
    mats = library(config.pop("materials", None))
    regions = dict(DEFAULT_REGION_MATERIALS)
    regions.update(config.pop("region_materials", {}) or {})
    valid = {f for f in CrossSection.__dataclass_fields__} - {"materials", "region_materials"}
    unknown = set(config) - valid
    if unknown:
        raise GeometryError(f"unknown cross-section keys: {sorted(unknown)}")
    return CrossSection(**{k: float(v) for k, v in config.items()},
                        region_materials=regions, materials=mats)


@dataclass(frozen=True)
class MeshPolicy:
    h_fine: float = 1.95   # cell size within `zone` of metal edges
    zone: float = 24.0
    growth: float = 1.2
    h_max: dict = field(default_factory=lambda: {
        "substrate": 60.0, "core": 15.0, "spacer": 8.0, "metal": 12.0,
        "cover": 6.0, "air": 60.0, "lateral": 60.0, "gap": 15.0,
    })


POLICIES = {
    "coarse": MeshPolicy(growth=1.35, h_max={
        "substrate": 100.0, "core": 25.0, "spacer": 12.0, "metal": 20.0,
        "cover": 10.0, "air": 100.0, "lateral": 100.0, "gap": 25.0}),
    "default": MeshPolicy(),
}


@dataclass(frozen=True, eq=False)
class Mesh:
    """Rectilinear mesh: cell edges, per-cell region codes and materials."""

    x: np.ndarray
    y: np.ndarray
    labels: np.ndarray  # (nx, ny) region codes into REGIONS
    region_materials: dict  # region name -> MaterialModel
    wavelength: float = 785.0

    def __post_init__(self):
        for name, e in (("x", self.x), ("y", self.y)):
            if e.ndim != 1 or np.any(np.diff(e) <= 0):
                raise GeometryError(f"{name} edges must be strictly increasing")
        if self.labels.shape != (self.x.size - 1, self.y.size - 1):
            raise GeometryError("label array does not match mesh shape")

    @property
    def shape(self):
        return self.labels.shape

    @property
    def dx(self):
        return np.diff(self.x)

    @property
    def dy(self):
        return np.diff(self.y)

    @property
    def xc(self):
        return 0.5 * (self.x[1:] + self.x[:-1])

    @property
    def yc(self):
        return 0.5 * (self.y[1:] + self.y[:-1])

    @property
    def areas(self):
        return np.outer(self.dx, self.dy)

    def at_wavelength(self, wavelength):
        return replace(self, wavelength=float(wavelength))

    def permittivity_at(self, wavelength):
        eps = np.empty(self.shape, dtype=complex)
        for code, region in enumerate(REGIONS):
            sel = self.labels == code
            if sel.any():
                eps[sel] = self.region_materials[region].permittivity(wavelength)
        return eps

    @cached_property
    def permittivity(self):
        return self.permittivity_at(self.wavelength)

    def refined(self):
        """Every cell split in half along x and y."""
        def split(e):
            out = np.empty(2 * e.size - 1)
            out[::2] = e
            out[1::2] = 0.5 * (e[1:] + e[:-1])
            return out
        labels = np.repeat(np.repeat(self.labels, 2, axis=0), 2, axis=1)
        return replace(self, x=split(self.x), y=split(self.y), labels=labels)


def _grade_interval(a, b, refine_pts, h_fine, zone, growth, h_max, min_cells=4, samples=4000):
    s = np.linspace(a, b, samples)
    if len(refine_pts):
        d = np.min(np.abs(s[:, None] - np.asarray(refine_pts)[None, :]), axis=1)
        h = np.where(d <= zone, h_fine, h_fine + (d - zone) * (growth - 1.0))
    else:
        h = np.full_like(s, h_max)
    h = np.minimum(h, h_max)
    inv = 1.0 / h
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (inv[1:] + inv[:-1]) * np.diff(s))])
    n = max(min_cells, int(np.ceil(cum[-1] - 1e-9)))
    nodes = np.interp(np.linspace(0.0, cum[-1], n + 1), cum, s)
    nodes[0], nodes[-1] = a, b
    return nodes


def _grade(breaks, kinds, refine_pts, policy: MeshPolicy):
    out = [np.array([breaks[0]])]
    for (a, b), kind in zip(zip(breaks[:-1], breaks[1:]), kinds):
        out.append(_grade_interval(a, b, refine_pts, policy.h_fine, policy.zone, policy.growth,
                                   policy.h_max[kind])[1:])
    return np.concatenate(out)


def build_mesh(cs: CrossSection, policy: str = "default", wavelength: float = 785.0) -> Mesh:
    """Mesh honouring all layer interfaces, refined to <= 2 nm around the metal edges.

    ``fine`` splits every ``default`` cell in half along both axes.
    """
    if policy == "fine":
        return build_mesh(cs, "default", wavelength).refined()
    if policy not in POLICIES:
        raise GeometryError(f"unknown mesh policy {policy!r}")
    pol = POLICIES[policy]
    half_w, half_g = cs.domain_width / 2, cs.gap / 2
    if half_w - half_g < 2 * pol.zone:
        raise GeometryError(
            f"lateral domain {cs.domain_width} nm too small for gap {cs.gap} nm and edge refinement"
        )
    # x: build the right half and mirror, so the mesh is symmetric about the gap centre
    xr = _grade([0.0, half_g, half_w], ["gap", "lateral"], [half_g], pol)
    x = np.concatenate([-xr[:0:-1], xr])
    x[np.abs(x) < 1e-12] = 0.0

    yi = cs.y_interfaces
    y_metal = [yi[3], yi[4]]
    kinds = ["substrate", "core", "spacer", "metal", "cover", "air"]
    y = _grade(list(yi), kinds, y_metal, pol)

    labels = cs.label_at(*np.meshgrid(0.5 * (x[1:] + x[:-1]), 0.5 * (y[1:] + y[:-1]), indexing="ij"))
    mats = {r: cs.material(r) for r in REGIONS}
    return Mesh(x=x, y=y, labels=labels.astype(np.int8), region_materials=mats,
                wavelength=float(wavelength))


def layered_mesh(layers, width, wavelength=785.0, h_max=5.0, nx=4):
    """x-invariant mesh from ``layers`` = [(region, thickness, MaterialModel), ...] bottom to top.

    Used for slab and uniform-medium checks; region names must come from REGIONS
    and each name may map to one material only.
    """
    breaks = np.concatenate([[0.0], np.cumsum([t for _, t, _ in layers])])
    y = np.concatenate([[0.0]] + [
        _grade_interval(a, b, [], 1.0, 0.0, 1.0, h_max)[1:] for a, b in zip(breaks[:-1], breaks[1:])
    ])
    x = np.linspace(-width / 2, width / 2, nx + 1)
    yc = 0.5 * (y[1:] + y[:-1])
    layer = np.clip(np.searchsorted(breaks, yc, side="right") - 1, 0, len(layers) - 1)
    codes = np.array([REGIONS.index(r) for r, _, _ in layers])[layer]
    mats = {r: m for r, _, m in layers}
    for r in REGIONS:
        mats.setdefault(r, layers[0][2])
    labels = np.broadcast_to(codes, (nx, yc.size)).astype(np.int8).copy()
    return Mesh(x=x, y=y, labels=labels, region_materials=mats, wavelength=float(wavelength))


def region_mask(mesh: Mesh, label: str) -> np.ndarray:
    """Flat (C-order) indices of cells carrying ``label``."""
    if label not in REGIONS:
        raise GeometryError(f"unknown region label {label!r}")
    return np.flatnonzero(mesh.labels.ravel() == REGIONS.index(label))


def region_masks(mesh: Mesh) -> dict[str, np.ndarray]:
    return {r: region_mask(mesh, r) for r in REGIONS}
