from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helishape.errors import (
    CapacityError,
    ConfigError,
    DomainError,
    InvalidSpecError,
    PreconditionError,
    ResolutionError,
)
from helishape.geometry import (
    Ball,
    Ellipsoid,
    StarShaped,
    Torus,
    Union,
    VoxelDomain,
    ball_condition,
    components,
    diameter,
    equal_volume_ball_radius,
    hausdorff,
    normalize_components,
    packing_volume_bound,
    rasterize,
    relative_hausdorff,
    spec_from_text,
    spec_to_text,
    voxel_from_text,
    voxel_to_text,
)
from helishape.geometry.specs import closure_gap, translate
from helishape.geometry.voxel import packing_point_count

O = (0.0, 0.0, 0.0)


# --- specs -----------------------------------------------------------------


def test_spec_invariants_rejected():
    with pytest.raises(InvalidSpecError):
        Ball(O, -1.0)
    with pytest.raises(InvalidSpecError):
        Ellipsoid(O, (1.0, 2.0, 1.0))
    with pytest.raises(InvalidSpecError):
        Torus(O, 0.3, 0.5)
    with pytest.raises(InvalidSpecError):
        Union((Ball(O, 1.0), Ball((1.5, 0, 0), 1.0)))


def test_analytic_volumes(oracles):
    assert Ball(O, 1.0).volume() == pytest.approx(oracles["unit_ball_volume"])
    assert Ellipsoid(O, (2.0, 1.0, 1.0)).volume() == pytest.approx(2 * oracles["unit_ball_volume"])
    assert Torus(O, 1.0, 0.4).volume() == pytest.approx(2 * math.pi**2 * 0.16)


@pytest.mark.parametrize("spec", [Ball(O, 1.0), Ellipsoid(O, (1.3, 1.0, 0.7)), Torus(O, 1.0, 0.4)])
def test_rasterized_volume_converges(spec):
    errs = [abs(rasterize(spec, h).volume() - spec.volume()) / spec.volume() for h in (0.2, 0.1, 0.05)]
    assert errs[-1] < 0.02
    assert errs[-1] < errs[0]


def test_rasterize_on_global_lattice_with_margin():
    d = rasterize(Ball((0.123, -0.4, 0.77), 0.6), 0.1)
    off = d.origin / d.h
    assert np.allclose(off, np.round(off))
    m = d.mask
    assert not (m[:2].any() or m[-2:].any() or m[:, :2].any() or m[:, :, -2:].any())


def test_voxel_domain_rejects_touching_mask():
    mask = np.zeros((6, 6, 6), dtype=bool)
    mask[1, 3, 3] = True
    with pytest.raises(InvalidSpecError):
        VoxelDomain(np.zeros(3), 0.1, mask)


def test_spec_text_roundtrip_all_kinds():
    specs = [
        Ball((0.1, 0.2, 0.3), 0.9),
        Ellipsoid(O, (1.5, 1.0, 0.5), (0.1, 0.2, 0.3)),
        Torus((0.0, 0.0, 1.0), 1.0, 0.3),
        StarShaped(O, 1.0, ((2, 0, 0.1), (3, -1, 0.05))),
        Union((Ball(O, 1.0), Torus((4.0, 0, 0), 1.0, 0.3))),
    ]
    for s in specs:
        assert spec_from_text(spec_to_text(s)) == s


def test_spec_text_errors_carry_line_numbers():
    with pytest.raises(ConfigError) as e:
        spec_from_text("kind = ball\ncenter = 0, 0\nradius = 1\n")
    assert e.value.line == 2
    with pytest.raises(ConfigError) as e:
        spec_from_text("kind = ball\nradius 1\n")
    assert e.value.line == 2
    with pytest.raises(ConfigError):
        spec_from_text("kind = cube\n")


@settings(max_examples=15, deadline=None)
@given(r=st.floats(0.3, 0.8), cx=st.floats(-0.5, 0.5), h=st.sampled_from([0.1, 0.15]))
def test_voxel_text_roundtrip(r, cx, h):
    d = rasterize(Ball((cx, 0.0, 0.0), r), h)
    e = voxel_from_text(voxel_to_text(d))
    assert e.digest() == d.digest()


# --- measurements --------------------------------------------------------------


def test_equal_volume_radius():
    assert equal_volume_ball_radius(4 * math.pi / 3) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        equal_volume_ball_radius(0.0)


def test_diameter_of_ball_and_ellipsoid():
    assert diameter(rasterize(Ball(O, 1.0), 0.1)) == pytest.approx(2.0, abs=0.2)
    assert diameter(rasterize(Ellipsoid(O, (2.0, 1.0, 1.0)), 0.1)) == pytest.approx(4.0, abs=0.2)


def test_packing_bound_counts():
    assert packing_point_count(1.0, 0.5) == 1
    assert packing_point_count(100.0, 0.5) == 2
    vol = 4 * math.pi / 3
    assert packing_volume_bound(2.0, 0.4) == pytest.approx(vol * 0.2**3)


def test_components_and_normalization():
    u = Union((Ball((-3.0, 0, 0), 0.6), Ball((3.0, 0, 0), 0.5)))
    d = rasterize(u, 0.1)
    assert d.n_components == 2
    assert sum(c.n_inside for c in components(d)) == d.n_inside
    n = normalize_components(d, 2.0)
    assert n.n_inside == d.n_inside
    assert n.n_components == 2
    assert np.linalg.norm(n.inside_centers(), axis=1).max() <= 2.0
    with pytest.raises(CapacityError):
        normalize_components(d, 0.4)


# --- ball condition ---------------------------------------------------------------


def test_ball_condition_ball():
    rep = ball_condition(rasterize(Ball(O, 1.0), 0.1), r_cap=3.0)
    assert rep.r_interior == pytest.approx(1.0, abs=0.2)
    assert rep.r_exterior == 3.0
    assert rep.r_uniform == rep.r_interior


@pytest.mark.parametrize("axes", ["2,1,1", "1.5,1,1", "1.3,1,0.7"])
def test_ball_condition_ellipsoid_matches_curvature_oracle(axes, oracles):
    h = 0.05
    rho = oracles["ellipsoid_min_curvature_radius"][axes]
    d = rasterize(Ellipsoid(O, tuple(float(a) for a in axes.split(","))), h)
    rep = ball_condition(d, r_cap=2.0)
    assert abs(rep.r_interior - rho) <= 2 * h
    assert rep.r_exterior == 2.0


def test_ball_condition_torus(oracles):
    h = 0.05
    t = oracles["torus_radii"]
    rep = ball_condition(rasterize(Torus(O, t["major"], t["minor"]), h), r_cap=2.0)
    assert abs(rep.r_interior - t["interior"]) <= 2 * h
    assert abs(rep.r_exterior - t["exterior"]) <= 2 * h
    # the exterior witness sits on the inner equator
    w = rep.exterior_witness
    assert math.hypot(w[0], w[1]) < t["major"]


def test_ball_condition_resolution_error():
    with pytest.raises(ResolutionError):
        ball_condition(rasterize(Ball(O, 1.0), 0.1), r_cap=0.15)


# --- Hausdorff ------------------------------------------------------------------


def test_hausdorff_concentric_balls():
    h = 0.05
    a, b = rasterize(Ball(O, 1.0), h), rasterize(Ball(O, 0.6), h)
    assert hausdorff(a, b) == pytest.approx(0.4, abs=2 * h)
    assert hausdorff(a, a) == 0.0


def test_relative_hausdorff_sees_holes():
    h = 0.1
    big = rasterize(Ball(O, 1.0), h)
    shifted = rasterize(Ball((0.3, 0, 0), 1.0), h)
    rho = relative_hausdorff(big, shifted, R0=2.0)
    assert 0.0 < rho <= 0.3 + 2 * h
    with pytest.raises(PreconditionError):
        relative_hausdorff(big, shifted, R0=0.8)


@settings(max_examples=10, deadline=None)
@given(st.lists(st.tuples(st.floats(-0.4, 0.4), st.floats(0.3, 0.7)), min_size=3, max_size=3))
def test_hausdorff_metric_axioms(params):
    h = 0.1
    ds = [rasterize(Ball((x, 0.0, 0.0), r), h) for x, r in params]
    tol = 2 * h
    for i in range(3):
        for j in range(3):
            dij = hausdorff(ds[i], ds[j])
            assert dij == pytest.approx(hausdorff(ds[j], ds[i]))
            for k in range(3):
                assert dij <= hausdorff(ds[i], ds[k]) + hausdorff(ds[k], ds[j]) + tol


def test_translate_and_gap():
    a = Ball(O, 1.0)
    b = translate(a, (3.0, 0.0, 0.0))
    # a conservative estimate: never above the true gap, short by at most the sampling spacing
    gap = closure_gap(a, b)
    assert 0.9 <= gap <= 1.0
    assert closure_gap(a, translate(a, (1.5, 0.0, 0.0))) < 0
