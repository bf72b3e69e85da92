import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hgpw.geometry import (REGIONS, CrossSection, GeometryError, build_cross_section, build_mesh, layered_mesh,
                           region_mask, region_masks)
from hgpw.materials import ConstantIndex


def corner_points(cs):
    y0, y1 = cs.metal_span
    return [(s * cs.gap / 2, y) for s in (-1, 1) for y in (y0, y1)]


def test_device_cross_section_defaults():
    cs = build_cross_section({"gap": 200})
    assert (cs.core_thickness, cs.spacer_thickness, cs.cover_thickness) == (300, 80, 60)
    assert cs.region_materials["core"] == "TiO2"
    assert cs.region_materials["metal"] == "gold"


def test_wide_gap_differs_only_in_gap():
    a, b = build_cross_section({"gap": 200}), build_cross_section({"gap": 1000})
    fields = [f for f in CrossSection.__dataclass_fields__ if f not in ("gap", "materials")]
    assert all(getattr(a, f) == getattr(b, f) for f in fields)
    assert (a.gap, b.gap) == (200, 1000)


@pytest.mark.parametrize("cfg, msg", [
    ({"gap": 0}, "degenerate gap"),
    ({"metal_thickness": 0}, "nonpositive dimension"),
    ({"core_thickness": -5}, "nonpositive dimension"),
    ({"domain_width": 150}, "smaller than the lateral domain"),
    ({"gap_widthh": 200}, "unknown cross-section keys"),
    ({"region_materials": {"core": "unobtainium"}}, "unknown material name"),
])
def test_cross_section_rejections(cfg, msg):
    with pytest.raises(GeometryError, match=msg):
        build_cross_section(cfg)


def test_domain_too_small_for_refinement():
    with pytest.raises(GeometryError, match="too small"):
        build_mesh(CrossSection(gap=200, domain_width=260), "default")


@pytest.fixture(scope="module")
def default_mesh():
    return CrossSection(), build_mesh(CrossSection(), "default")


def test_mesh_resolution_at_metal_corners(default_mesh):
    cs, mesh = default_mesh
    for cx, cy in corner_points(cs):
        nx = np.abs(mesh.xc - cx) <= 20
        ny = np.abs(mesh.yc - cy) <= 20
        assert mesh.dx[nx].max() <= 2.0
        assert mesh.dy[ny].max() <= 2.0


def test_every_layer_has_four_cells(default_mesh):
    cs, mesh = default_mesh
    yi = cs.y_interfaces
    for a, b in zip(yi[:-1], yi[1:]):
        assert np.sum((mesh.yc > a) & (mesh.yc < b)) >= 4
    assert np.sum(np.abs(mesh.xc) < cs.gap / 2) >= 4


def test_area_and_refinement(default_mesh):
    cs, mesh = default_mesh
    area = cs.domain_width * cs.height
    assert abs(mesh.areas.sum() - area) <= 1e-9 * area
    fine = build_mesh(cs, "fine")
    assert fine.areas.sum() == pytest.approx(mesh.areas.sum(), rel=1e-15)
    assert fine.labels.size / mesh.labels.size == pytest.approx(4.0, rel=0.1)
    assert fine.dx.max() == pytest.approx(mesh.dx.max() / 2)


def test_masks_partition_and_gap_area(default_mesh):
    cs, mesh = default_mesh
    masks = region_masks(mesh)
    allidx = np.concatenate(list(masks.values()))
    assert allidx.size == mesh.labels.size
    assert np.array_equal(np.sort(allidx), np.arange(mesh.labels.size))
    gap_area = mesh.areas.ravel()[masks["gap"]].sum()
    cell = max(mesh.dx.max(), mesh.dy.max())
    assert abs(gap_area - cs.gap * cs.metal_thickness) <= cell * (2 * cs.gap + 2 * cs.metal_thickness)


def test_unknown_label():
    mesh = build_mesh(CrossSection(), "coarse")
    with pytest.raises(GeometryError, match="unknown region"):
        region_mask(mesh, "moat")


@given(gap=st.floats(50, 1500), width=st.floats(2500, 5000))
def test_labels_mirror_symmetric_and_partitioned(gap, width):
    cs = CrossSection(gap=gap, domain_width=width)
    mesh = build_mesh(cs, "coarse")
    assert np.array_equal(mesh.labels, mesh.labels[::-1, :])
    assert np.allclose(mesh.x, -mesh.x[::-1])
    counts = sum(len(region_mask(mesh, r)) for r in REGIONS)
    assert counts == mesh.labels.size


@given(st.floats(-3000, 3000), st.floats(0, 3040))
def test_every_point_has_one_label(x, y):
    code = int(CrossSection().label_at(x, y))
    assert 0 <= code < len(REGIONS)


def test_layered_mesh_regions():
    m = layered_mesh([("substrate", 100, ConstantIndex("a", 1.45)), ("core", 50, ConstantIndex("b", 2.4))],
                     width=40, h_max=5)
    assert m.areas.sum() == pytest.approx(40 * 150)
    assert len(region_mask(m, "core")) == 4 * 10
