"""Oscillating-field trajectories and the events met along them.

The field ``B = (|B| cos wt + Bx0, 0, |B| sin wt + Bz0)`` traces a circle
in the ``(r1, r2)`` plane.  Along it the global minimum of the semiclassical
landscape can jump between wells (a Maxwell crossing) and the quantum
ground state goes through avoided crossings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .catastrophe import _circle_d2, _refine_min, circle_potential
from .errors import BracketError
from .semiclassic import ReducedParams, critical_points_circle, model_at, reduce_params
from .spinops import SpinModel, build_hamiltonian, diagonalize

GOLDEN = (math.sqrt(5) - 1) / 2
DIP_RATIO = 2.0


@dataclass(frozen=True)
class FieldTrajectory:
    """Circle of fields with radius ``amplitude`` centred on ``(bx0, 0, bz0)``."""

    amplitude: float
    bx0: float = 0.0
    bz0: float = 0.0

    def __post_init__(self):
        if not self.amplitude >= 0:
            raise ValueError("amplitude must be non-negative")


def field_at(traj: FieldTrajectory, wt):
    """Field vector(s) at phase ``wt``; shape ``wt.shape + (3,)``."""
    wt = np.asarray(wt, float)
    B = np.stack(
        [traj.amplitude * np.cos(wt) + traj.bx0, np.zeros_like(wt), traj.amplitude * np.sin(wt) + traj.bz0],
        axis=-1,
    )
    return B


@dataclass(frozen=True)
class CrossingEvent:
    """A Maxwell crossing or an avoided level crossing.

    Attributes
    ----------
    kind : ``"maxwell"`` or ``"avoided"``.
    location : position along the scan axis.
    axis : name of the scan variable (``"wt"``, ``"r1"``, ``"r2"``, ``"Bx"``, ``"Bz"``).
    gap : energy gap at the location (avoided crossings), K.
    residual : depth difference of the two wells (Maxwell crossings), K.
    states : energy indices of the two levels, or signed circle angles of
        the two wells.
    """

    kind: str
    location: float
    axis: str = "wt"
    gap: Optional[float] = None
    residual: Optional[float] = None
    states: Tuple[float, ...] = ()


@dataclass(frozen=True)
class TrajectoryScan:
    """Per-step record of a trajectory scan.

    ``minima[i]`` and ``maxima[i]`` hold the semiclassical extremum values
    at step ``i``; ``global_alpha[i]`` is the signed circle angle of the
    deepest well and ``census[i]`` the number of minima on the circle.
    """

    wt: np.ndarray
    fields: np.ndarray
    r: np.ndarray
    energies: np.ndarray
    minima: Tuple[Tuple[float, ...], ...]
    maxima: Tuple[Tuple[float, ...], ...]
    global_alpha: np.ndarray
    global_value: np.ndarray
    census: np.ndarray
    events: Tuple[CrossingEvent, ...] = field(default=())

    def events_of(self, kind: str) -> List[CrossingEvent]:
        return [e for e in self.events if e.kind == kind]


def golden_section(f, a: float, b: float, tol: float = 1e-8, max_iter: int = 200) -> Tuple[float, float]:
    """Minimize a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x))``."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    x = (a + b) / 2
    return x, f(x)


def _angle_gap(u: float, v: float) -> float:
    return abs((u - v + math.pi) % (2 * math.pi) - math.pi)


def _tracked_min(alpha: float, rp: ReducedParams) -> Optional[float]:
    a = _refine_min(alpha, rp)
    if _circle_d2(a, *rp.r) <= 0:
        return None
    return a


def _local_minima(gap: np.ndarray, periodic: bool) -> List[int]:
    n = len(gap)
    out = []
    for i in range(n):
        if not periodic and (i == 0 or i == n - 1):
            continue
        left, right = gap[(i - 1) % n], gap[(i + 1) % n]
        if gap[i] < left and gap[i] <= right:
            out.append(i)
    return out


def _dip_ratio(gap: np.ndarray, i: int, periodic: bool) -> float:
    """Smaller of the two flanking maxima over the minimum value."""
    n = len(gap)

    def climb(step):
        j, best = i, gap[i]
        for _ in range(n - 1):
            k = j + step
            if not periodic and not 0 <= k < n:
                break
            k %= n
            if gap[k] < gap[j]:
                break
            j = k
            best = gap[j]
        return best

    low = max(gap[i], 1e-300)
    return min(climb(-1), climb(1)) / low


def _levels(model: SpinModel, B) -> np.ndarray:
    return diagonalize(build_hamiltonian(model.replace(B=tuple(B))), S=model.S).energies


def scan_trajectory(
    traj: FieldTrajectory,
    model: SpinModel,
    n_steps: int = 512,
    S: Optional[float] = None,
    wt_range: Tuple[float, float] = (0.0, 2 * math.pi),
    levels: Tuple[int, int] = (0, 1),
    dip_ratio: float = DIP_RATIO,
) -> TrajectoryScan:
    """Spectrum, well census and crossing events along a trajectory.

    Parameters
    ----------
    model : anisotropy template; its field is replaced at each step.
    S : optional spin override (the landscape does not depend on it).
    wt_range : a full turn ``(0, 2 pi)`` is treated as periodic.
    levels : energy indices whose gap defines the avoided crossings.

    Maxwell crossings are located where the deepest well changes identity
    and refined by root finding on the depth difference of the two wells.
    Avoided crossings are local minima of the gap whose flanking maxima
    exceed ``dip_ratio`` times the minimum, refined by golden section to
    ``1e-8`` in ``wt``.
    """
    if n_steps < 64:
        raise ValueError("n_steps must be at least 64")
    model = model.normalized() if S is None else model.at_spin(S)
    lo, hi = wt_range
    periodic = abs((hi - lo) - 2 * math.pi) < 1e-12
    wt = lo + (hi - lo) * np.arange(n_steps) / (n_steps if periodic else n_steps - 1)
    B = field_at(traj, wt)
    def rp_at(w):
        b = field_at(traj, w)
        return reduce_params(model.replace(B=tuple(b)))[0]

    energies, minima, maxima, g_alpha, g_value, census, r = [], [], [], [], [], [], []
    for b in B:
        energies.append(_levels(model, b))
        rp = reduce_params(model.replace(B=tuple(b)))[0]
        r.append((rp.r1, rp.r2))
        cps = critical_points_circle(rp)
        mins = [c for c in cps if c.kind == "minimum"]
        minima.append(tuple(c.value for c in mins))
        maxima.append(tuple(c.value for c in cps if c.kind == "maximum"))
        census.append(len(mins))
        deepest = min(mins, key=lambda c: c.value)
        g_alpha.append(deepest.alpha)
        g_value.append(deepest.value)
    energies = np.array(energies)
    g_alpha = np.array(g_alpha)
    events: List[CrossingEvent] = []

    # Maxwell crossings
    pairs = range(n_steps if periodic else n_steps - 1)
    for i in pairs:
        j = (i + 1) % n_steps
        w0, w1 = wt[i], wt[j] if j > i else wt[j] + (hi - lo)
        rp1 = rp_at(w1)
        follow = _tracked_min(g_alpha[i], rp1)
        if follow is not None and _angle_gap(follow, g_alpha[j]) < 1e-6:
            continue
        # wells A (old global) and B (new global) traced back over the step
        rp0 = rp_at(w0)
        back = _tracked_min(g_alpha[j], rp0)
        if follow is None or back is None:
            continue  # the old or new well is born or dies inside the step

        def depth_diff(w):
            rp = rp_at(w)
            t = (w - w0) / (w1 - w0)
            a = _tracked_min(g_alpha[i] + t * _signed(follow - g_alpha[i]), rp)
            b_ = _tracked_min(back + t * _signed(g_alpha[j] - back), rp)
            if a is None or b_ is None:
                return math.nan
            return float(circle_potential(a, *rp.r) - circle_potential(b_, *rp.r))

        fa, fb = depth_diff(w0), depth_diff(w1)
        if not (np.isfinite(fa) and np.isfinite(fb)) or fa * fb > 0:
            continue
        w = brentq(depth_diff, w0, w1, xtol=1e-13, rtol=4 * np.finfo(float).eps)
        rp = rp_at(w)
        loc = (w - lo) % (hi - lo) + lo if periodic else w
        t = (w - w0) / (w1 - w0)
        a = _tracked_min(g_alpha[i] + t * _signed(follow - g_alpha[i]), rp)
        b_ = _tracked_min(back + t * _signed(g_alpha[j] - back), rp)
        resid = abs(float(circle_potential(a, *rp.r) - circle_potential(b_, *rp.r)))
        events.append(CrossingEvent("maxwell", float(loc), "wt", residual=resid, states=(float(a), float(b_))))

    # avoided crossings of the chosen pair of levels
    k0, k1 = levels
    gap = energies[:, k1] - energies[:, k0]
    step = (hi - lo) / (n_steps if periodic else n_steps - 1)
    for i in _local_minima(gap, periodic):
        if _dip_ratio(gap, i, periodic) <= dip_ratio:
            continue

        def g(w):
            e = _levels(model, field_at(traj, w))
            return e[k1] - e[k0]

        w, gmin = golden_section(g, wt[i] - step, wt[i] + step)
        loc = (w - lo) % (hi - lo) + lo if periodic else w
        events.append(CrossingEvent("avoided", float(loc), "wt", gap=float(gmin), states=(k0, k1)))

    events.sort(key=lambda e: e.location)
    return TrajectoryScan(
        wt,
        B,
        np.array(r),
        energies,
        tuple(minima),
        tuple(maxima),
        g_alpha,
        np.array(g_value),
        np.array(census),
        tuple(events),
    )


def _signed(d: float) -> float:
    """Shortest signed angle equivalent to ``d``."""
    return (d + math.pi) % (2 * math.pi) - math.pi


_FIELD_AXES = {"Bx": 0, "By": 1, "Bz": 2}


def _axis_model(model: SpinModel, axis: str, x: float, traj: Optional[FieldTrajectory]) -> SpinModel:
    if axis in _FIELD_AXES:
        B = list(model.B)
        B[_FIELD_AXES[axis]] = x
        return model.replace(B=tuple(B))
    if axis in ("r1", "r2"):
        rp = reduce_params(model)[0]
        r1, r2 = (x, rp.r2) if axis == "r1" else (rp.r1, x)
        return model_at(model, r1, r2)
    if axis == "wt":
        if traj is None:
            raise ValueError("axis 'wt' needs a trajectory")
        return model.replace(B=tuple(field_at(traj, x)))
    raise ValueError(f"unknown scan axis {axis!r}")


def gap_along(model: SpinModel, axis: str, values: Sequence[float], upper: int = 1, traj=None, S=None) -> np.ndarray:
    """``E_upper - E_0`` at each value of the scan axis."""
    model = model.normalized() if S is None else model.at_spin(S)
    out = []
    for x in values:
        m = _axis_model(model, axis, float(x), traj)
        e = _levels(m, m.B)
        out.append(e[upper] - e[0])
    return np.array(out)


def minimum_gap(
    model: SpinModel,
    axis: str,
    bracket: Tuple[float, float],
    upper: int = 1,
    traj: Optional[FieldTrajectory] = None,
    S: Optional[float] = None,
    tol: float = 1e-8,
    n_probe: int = 41,
) -> CrossingEvent:
    """Locate the minimum of ``E_upper - E_0`` inside ``bracket``.

    The bracket is probed on ``n_probe`` points; the smallest sample must be
    interior, and golden-section search then refines it to ``tol``.

    Raises
    ------
    BracketError
        if the smallest gap sits on the bracket boundary.
    """
    a, b = map(float, bracket)
    if not b > a:
        raise BracketError("bracket must be increasing")
    model = model.normalized() if S is None else model.at_spin(S)

    def g(x):
        m = _axis_model(model, axis, x, traj)
        e = _levels(m, m.B)
        return e[upper] - e[0]

    xs = np.linspace(a, b, n_probe)
    gs = np.array([g(x) for x in xs])
    i = int(np.argmin(gs))
    if i == 0 or i == n_probe - 1:
        raise BracketError(f"no interior gap minimum in [{a:g}, {b:g}]")
    x, gmin = golden_section(g, xs[i - 1], xs[i + 1], tol=tol)
    if not gmin > 0:
        raise BracketError("levels are exactly degenerate at the minimum")
    return CrossingEvent("avoided", float(x), axis, gap=float(gmin), states=(0, upper))
