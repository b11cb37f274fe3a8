import math

import numpy as np
import pytest

from spincat.catastrophe import (
    bifurcation_branch,
    circle_potential,
    classify_point,
    locate_triple_point,
    maxwell_branches,
    maxwell_oracle,
)
from spincat.errors import NotFoundError
from spincat.semiclassic import ReducedParams, potential_reduced_d1, potential_reduced_d2, reduce_params
from spincat.spinops import SpinModel

FE8 = SpinModel(10, D=-0.295, E=0.056, B40=1.15e-6, B42=-1.15e-6, B44=-2.18e-5)
CASE2 = SpinModel(10, D=0.4, E=-0.03, B40=-1.2e-4, ref_spin=10)


@pytest.mark.parametrize("phi_c", [0.0, math.pi])
def test_bifurcation_points_are_degenerate_critical_points(phi_c):
    r3, r4, r5 = -0.3, 0.05, 0.02
    curve = bifurcation_branch(r3, r4, r5, phi_c=phi_c, x_grid=np.linspace(0.05, math.pi - 0.05, 50))
    for (r1, r2), x in zip(curve.points, curve.generator):
        rp = ReducedParams(r1, r2, r3, r4, r5, phi_c=phi_c)
        assert abs(potential_reduced_d1(x, rp)) < 1e-12
        assert abs(potential_reduced_d2(x, rp)) < 1e-12


def test_bifurcation_rejects_angles_off_meridian():
    with pytest.raises(ValueError):
        bifurcation_branch(-1, 0, 0, x_grid=[0.0, 4.0])


def test_maxwell_points_have_equal_minima():
    rp = reduce_params(CASE2)[0]
    curves = maxwell_branches(rp.r3, rp.r4, rp.r5, grid=300)
    assert any(c.kind == "maxwell-minima" for c in curves)
    for c in curves:
        for (r1, r2), (a1, a2) in zip(c.points, c.generator):
            v1 = circle_potential(a1, r1, r2, rp.r3, rp.r4, rp.r5)
            v2 = circle_potential(a2, r1, r2, rp.r3, rp.r4, rp.r5)
            assert abs(v1 - v2) < 1e-8


def test_uniaxial_maxwell_set_is_the_r2_zero_line():
    curves = maxwell_branches(-1.0, 0.0, 0.0, grid=200)
    glob = np.concatenate([c.global_part() for c in curves if c.kind == "maxwell-minima"])
    assert len(glob) > 10
    assert np.allclose(glob[:, 1], 0.0, atol=1e-12)
    assert np.max(np.abs(glob[:, 0])) <= 4.0 + 1e-9


def test_equatorial_wells_give_the_r1_zero_line():
    # with r3 > 0 the wells sit at alpha = +-pi/2
    curves = maxwell_branches(1.0, 0.0, 0.0, grid=200)
    glob = np.concatenate([c.global_part() for c in curves if c.kind == "maxwell-minima"])
    assert len(glob) > 10
    assert np.allclose(glob[:, 0], 0.0, atol=1e-12)
    assert np.max(np.abs(glob[:, 1])) <= 4.0 + 1e-9


def test_classify_point_counts_wells():
    desc = classify_point(ReducedParams(0.0, 0.1, -1.0, 0.0, 0.0))
    assert desc.total == 2
    assert desc.global_min.theta == pytest.approx(math.pi)
    assert desc.minima_count[0.0] == 2 and desc.minima_count[math.pi] == 2
    tied = classify_point(ReducedParams(0.0, 0.0, -1.0, 0.0, 0.0))
    assert len(tied.tied) == 2


def test_triple_point_of_case2():
    rp = reduce_params(CASE2)[0]
    tp = locate_triple_point(rp.r3, rp.r4, rp.r5, seed=(0.0, -44.2))
    assert tp.r1 == pytest.approx(0.0, abs=1e-9)
    assert tp.r2 == pytest.approx(-44.273049, abs=1e-5)
    assert tp.residual < 1e-7
    assert len(tp.wells) == 3


def test_triple_point_fails_without_three_wells():
    with pytest.raises(NotFoundError):
        locate_triple_point(-1.0, 0.0, 0.0, seed=(0.0, 0.0))


def test_oracle_finds_uniaxial_line():
    pm = maxwell_oracle(-1.0, 0.0, 0.0, (-6, 6, -1, 1), resolution=(61, 41))
    rows = np.nonzero(pm.boundary.any(axis=1))[0]
    assert np.allclose(pm.r2[rows], 0.0, atol=pm.pixel[1] * 1.01)
    cols = np.nonzero(pm.boundary.any(axis=0))[0]
    assert np.max(np.abs(pm.r1[cols])) <= 4.0 + pm.pixel[0]


def test_curves_match_oracle_on_coarse_grid():
    rp = reduce_params(FE8)[0]
    pm = maxwell_oracle(rp.r3, rp.r4, rp.r5, (-0.5, 0.5, -0.5, 0.5), resolution=(151, 151))
    pts = np.concatenate([c.global_part() for c in maxwell_branches(rp.r3, rp.r4, rp.r5) if c.kind == "maxwell-minima"])
    pts = pts[pm.inside(pts)]
    assert pm.near_boundary(pts).all()
