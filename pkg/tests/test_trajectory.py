import math

import numpy as np
import pytest

from spincat.errors import BracketError
from spincat.semiclassic import reduce_params
from spincat.spinops import SpinModel
from spincat.trajectory import (
    FieldTrajectory,
    field_at,
    gap_along,
    golden_section,
    minimum_gap,
    scan_trajectory,
)

CASE1 = SpinModel(10, D=-0.5, E=0.04, B44=-0.007, ref_spin=10)
CASE2 = SpinModel(10, D=0.4, E=-0.03, B40=-1.2e-4, ref_spin=10)


def test_field_on_circle():
    tr = FieldTrajectory(2.0, bx0=0.5, bz0=-1.0)
    B = field_at(tr, np.array([0.0, math.pi / 2]))
    assert B.shape == (2, 3)
    assert B[0] == pytest.approx([2.5, 0.0, -1.0])
    assert B[1] == pytest.approx([0.5, 0.0, 1.0])
    with pytest.raises(ValueError):
        FieldTrajectory(-1.0)


def test_golden_section_on_parabola():
    x, fx = golden_section(lambda x: (x - 0.3) ** 2 + 1, -1, 2, tol=1e-10)
    # a quadratic minimum is resolved only to ~sqrt(eps) in x
    assert x == pytest.approx(0.3, abs=1e-7)
    assert fx == pytest.approx(1.0)


@pytest.fixture(scope="module")
def case1_scan():
    return scan_trajectory(FieldTrajectory(15.63), CASE1, n_steps=256)


def test_case1_has_four_maxwell_crossings(case1_scan):
    events = case1_scan.events_of("maxwell")
    assert len(events) == 4
    for e in events:
        assert e.residual < 1e-8
        assert 0 <= e.location < 2 * math.pi


def test_scan_record_shapes(case1_scan):
    n = len(case1_scan.wt)
    assert case1_scan.energies.shape == (n, 21)
    assert case1_scan.r.shape == (n, 2)
    assert np.all(case1_scan.census >= 1)
    # the r-map of a centred circle is a circle of radius g muB |B|
    radius = np.hypot(*case1_scan.r.T)
    assert np.ptp(radius) < 1e-9


def test_avoided_crossings_are_gap_minima(case1_scan):
    for e in case1_scan.events_of("avoided"):
        tr = FieldTrajectory(15.63)
        near = gap_along(CASE1, "wt", [e.location - 1e-3, e.location, e.location + 1e-3], traj=tr)
        assert near[1] <= near[0] and near[1] <= near[2]
        assert near[1] == pytest.approx(e.gap, rel=1e-9)


def test_scan_needs_enough_steps():
    with pytest.raises(ValueError):
        scan_trajectory(FieldTrajectory(1.0), CASE1, n_steps=10)


def test_case2_gap_minimum_near_triple_point():
    ev = minimum_gap(CASE2.with_field(Bx=0.0), "r2", (-45.3, -44.3), upper=2, S=20)
    assert ev.location == pytest.approx(-44.80887, abs=0.01)
    assert ev.gap > 0
    assert ev.axis == "r2"


def test_minimum_gap_rejects_edge_minimum():
    with pytest.raises(BracketError):
        minimum_gap(CASE2.with_field(Bx=0.0), "r2", (-44.7, -44.3), upper=2, S=20)
    with pytest.raises(BracketError):
        minimum_gap(CASE2, "r2", (1.0, 0.0))


def test_r_axes_move_only_one_coordinate():
    m = CASE2.with_field(Bx=0.0)
    gap = gap_along(m, "r2", [-44.8])
    assert gap.shape == (1,)
    with pytest.raises(ValueError):
        gap_along(m, "q", [0.0])
    with pytest.raises(ValueError):
        gap_along(m, "wt", [0.0])
    rp = reduce_params(m)[0]
    assert rp.r1 == pytest.approx(0.0)
