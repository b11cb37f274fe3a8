"""Separatrices of the reduced potential in the ``(r1, r2)`` plane.

Two kinds of curves split the plane into phases:

- the bifurcation set, where a critical point degenerates and a well is
  born or dies;
- the Maxwell set, where two extrema share the same value, so crossing it
  changes which well is deepest.

Both are generated from closed-form parametrizations.  A brute-force raster
of the global minimum (:func:`maxwell_oracle`) provides an independent check
of the Maxwell curves.

Angles on the great circle through both meridians are handled with the
signed angle ``alpha`` (``alpha = theta`` on ``phi_c = 0``,
``alpha = -theta`` on ``phi_c = pi``).  On that circle the ``phi_c = pi``
formulas are the ``phi_c = 0`` formulas at negative angles, so pairs of
wells on opposite meridians are covered by the same expressions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq
from skimage.measure import find_contours

from .errors import NotFoundError
from .semiclassic import ReducedParams, find_critical_points, minima

SINGULAR_MARGIN = 1e-3
TIE_TOL = 1e-10


def _branch_sign(phi_c: float) -> float:
    if abs(phi_c) < 1e-12:
        return 1.0
    if abs(phi_c - math.pi) < 1e-12:
        return -1.0
    raise ValueError("phi_c must be 0 or pi")


def circle_potential(alpha, r1, r2, r3, r4, r5):
    """Reduced potential as a function of the signed circle angle."""
    a = np.asarray(alpha, float)
    return (
        r1 * np.sin(a)
        + r2 * np.cos(a)
        + r3 * np.cos(2 * a)
        + r4 * np.cos(4 * a)
        + r5 * (2 * np.sin(2 * a) - np.sin(4 * a))
    )


def _circle_d1(a, r1, r2, r3, r4, r5):
    return (
        r1 * np.cos(a)
        - r2 * np.sin(a)
        - 2 * r3 * np.sin(2 * a)
        - 4 * r4 * np.sin(4 * a)
        + r5 * (4 * np.cos(2 * a) - 4 * np.cos(4 * a))
    )


def _circle_d2(a, r1, r2, r3, r4, r5):
    return (
        -r1 * np.sin(a)
        - r2 * np.cos(a)
        - 4 * r3 * np.cos(2 * a)
        - 16 * r4 * np.cos(4 * a)
        + r5 * (-8 * np.sin(2 * a) + 16 * np.sin(4 * a))
    )


def _to_branch(alpha: float) -> Tuple[float, float]:
    """``(theta, phi_c)`` for a signed circle angle."""
    a = math.remainder(alpha, 2 * math.pi)
    return (a, 0.0) if a >= 0 else (-a, math.pi)


# --------------------------------------------------------------------------
# curves
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SeparatrixCurve:
    """Polyline of a separatrix in the ``(r1, r2)`` plane.

    Attributes
    ----------
    kind : ``"bifurcation"``, ``"maxwell-minima"`` or ``"maxwell-maxima"``.
    phi_c : meridian of the generators; ``None`` when a Maxwell pair has one
        well on each meridian.
    points : array of shape ``(n, 2)`` holding ``(r1, r2)``.
    generator : the critical angle ``x`` per point (bifurcation, shape
        ``(n,)``) or the pair of signed circle angles ``(alpha1, alpha2)``
        per point (Maxwell, shape ``(n, 2)``).
    is_global : for Maxwell curves, whether the pair are the deepest wells.
    """

    kind: str
    phi_c: Optional[float]
    points: np.ndarray
    generator: np.ndarray
    r3: float = 0.0
    r4: float = 0.0
    r5: float = 0.0
    is_global: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.points)

    def generator_branches(self) -> List[Tuple[Tuple[float, float], ...]]:
        """Generators as ``(theta, phi_c)`` tuples."""
        if self.kind == "bifurcation":
            return [((float(x), self.phi_c),) for x in self.generator]
        return [tuple(_to_branch(a) for a in pair) for pair in self.generator]

    def global_part(self) -> np.ndarray:
        """Points where the equal extrema are the global minimum."""
        if self.is_global is None:
            return self.points[:0]
        return self.points[self.is_global]


def bifurcation_point(x, r3, r4, r5, phi_c=0.0):
    """``(r1, r2)`` of the bifurcation set at critical angle ``x``."""
    c = _branch_sign(phi_c)
    x = np.asarray(x, float)
    r1 = (
        r3 * c * (3 * np.sin(x) - np.sin(3 * x))
        + 2 * r4 * c * (5 * np.sin(3 * x) - 3 * np.sin(5 * x))
        - 6 * r5 * (np.cos(x) - 2 * np.cos(3 * x) + np.cos(5 * x))
    )
    r2 = (
        -r3 * (3 * np.cos(x) + np.cos(3 * x))
        - 2 * r4 * (5 * np.cos(3 * x) + 3 * np.cos(5 * x))
        + 4 * r5 * c * np.sin(x) * (2 + 7 * np.cos(2 * x) + 3 * np.cos(4 * x))
    )
    return r1, r2


def bifurcation_branch(r3, r4, r5, phi_c=0.0, x_grid=None) -> SeparatrixCurve:
    """Bifurcation set of one meridian, sampled at ``x_grid`` (default 2001 points)."""
    if x_grid is None:
        x_grid = np.linspace(0.0, math.pi, 2001)
    x = np.asarray(x_grid, float)
    if x.size and (x.min() < 0 or x.max() > math.pi):
        raise ValueError("x_grid must lie in [0, pi]")
    r1, r2 = bifurcation_point(x, r3, r4, r5, phi_c)
    c = _branch_sign(phi_c)
    return SeparatrixCurve(
        "bifurcation", 0.0 if c > 0 else math.pi, np.column_stack([r1, r2]), x, r3, r4, r5
    )


# Maxwell set ---------------------------------------------------------------


def maxwell_point(a1, a2, r4, r5):
    """Closed-form ``(r1, r2, r3)`` making the extrema at ``a1``, ``a2`` equal.

    Angles are signed circle angles.  The expressions are singular where
    ``a1 + a2`` is a multiple of ``pi`` (only when ``r5 != 0``).
    """
    t1 = np.asarray(a1, float)
    t2 = np.asarray(a2, float)
    s = t1 + t2
    h = s / 2
    st1, st2 = np.sin(t1), np.sin(t2)
    r1 = 8 * st1 * st2 * (st1 + st2) * 2 * r4 * (1 - np.cos(s))
    r2 = 2 * np.cos((t1 - t2) / 2) * 32 * r4 * np.cos(t1) * np.cos(t2) * np.cos(h) ** 3
    r3 = -2 * r4 * (3 * np.cos(2 * t1) + 3 * np.cos(2 * t2) + 4 * np.cos(s))
    if r5:
        with np.errstate(divide="ignore", invalid="ignore"):
            r1 = r1 + 8 * st1 * st2 * (st1 + st2) * r5 * (2 / np.tan(s) - np.cos(2 * s) / np.sin(s))
            bracket = (
                2
                - 2 * np.cos(2 * t1)
                - 2 * np.cos(2 * t2)
                - np.cos(s)
                - 2 * np.cos(2 * s)
                - np.cos(3 * s)
                - np.cos(3 * t1 + t2)
                - np.cos(t1 + 3 * t2)
            )
            r2 = r2 - 2 * np.cos((t1 - t2) / 2) * r5 / np.sin(h) * bracket
            r3 = r3 + r5 / 2 / (np.sin(h) * np.cos(h)) * (
                2 * np.cos(s) - 4 * np.cos(2 * s) - 3 * (np.cos(3 * t1 + t2) + np.cos(t1 + 3 * t2))
            )
    return r1, r2, r3


def maxwell_point_branch(theta1, theta2, r4, r5, phi_c=0.0):
    """Closed form for two extrema on the same meridian ``phi_c``."""
    c = _branch_sign(phi_c)
    return maxwell_point(c * np.asarray(theta1, float), c * np.asarray(theta2, float), r4, r5)


def _singular_distance(s: np.ndarray) -> np.ndarray:
    return np.abs(np.remainder(s + math.pi / 2, math.pi) - math.pi / 2)


def _tag(a1, a2, r1, r2, r3, r4, r5) -> str:
    if _angle_gap(a1, a2) < 1e-9:
        return "cusp"  # the two extrema have merged; not a pair of wells
    d1 = _circle_d2(a1, r1, r2, r3, r4, r5)
    d2 = _circle_d2(a2, r1, r2, r3, r4, r5)
    if d1 > 0 and d2 > 0:
        return "maxwell-minima"
    if d1 < 0 and d2 < 0:
        return "maxwell-maxima"
    return "mixed"


def _pair_phi_c(a1: float, a2: float) -> Optional[float]:
    b1 = _to_branch(a1)
    b2 = _to_branch(a2)
    # a pole belongs to both meridians
    poles = [b for b in (b1, b2) if b[0] < 1e-9 or b[0] > math.pi - 1e-9]
    others = [b for b in (b1, b2) if b not in poles]
    if not others:
        return 0.0
    if len({b[1] for b in others}) == 1:
        return others[0][1]
    return None


def _global_flags(G, P, r3, r4, r5, n_scan: int = 2048) -> np.ndarray:
    """Whether the pair at each generator is the deepest well on the circle."""
    a = np.linspace(-math.pi, math.pi, n_scan, endpoint=False)
    out = np.zeros(len(P), bool)
    for lo in range(0, len(P), 256):
        r1 = P[lo : lo + 256, 0][:, None]
        r2 = P[lo : lo + 256, 1][:, None]
        V = circle_potential(a[None, :], r1, r2, r3, r4, r5)
        x = a[np.argmin(V, axis=1)][:, None]
        for _ in range(30):
            d2 = _circle_d2(x, r1, r2, r3, r4, r5)
            step = np.where(d2 > 0, _circle_d1(x, r1, r2, r3, r4, r5) / np.where(d2 > 0, d2, 1.0), 0.0)
            x = x - np.clip(step, -0.01, 0.01)
        vmin = np.minimum(circle_potential(x, r1, r2, r3, r4, r5), V.min(axis=1, keepdims=True))[:, 0]
        depth = circle_potential(G[lo : lo + 256, 0], r1[:, 0], r2[:, 0], r3, r4, r5)
        out[lo : lo + 256] = depth <= vmin + TIE_TOL + 1e-9 * np.maximum(1.0, np.abs(depth))
    return out


def _polish_contour(A, r3_target, r4, r5, tol=1e-12):
    """Move contour vertices along the gradient of ``r3`` onto the target level.

    Returns the polished angles and a mask of vertices that converged.
    """
    A = np.array(A, float)
    h = 1e-7
    scale = max(1.0, abs(r3_target))
    ok = np.ones(len(A), bool)
    done = np.zeros(len(A), bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(20):
            a1, a2 = A[:, 0], A[:, 1]
            f = maxwell_point(a1, a2, r4, r5)[2] - r3_target
            done |= np.abs(f) < tol * scale
            ok &= np.isfinite(f)
            g1 = (maxwell_point(a1 + h, a2, r4, r5)[2] - maxwell_point(a1 - h, a2, r4, r5)[2]) / (2 * h)
            g2 = (maxwell_point(a1, a2 + h, r4, r5)[2] - maxwell_point(a1, a2 - h, r4, r5)[2]) / (2 * h)
            n2 = g1 * g1 + g2 * g2
            step = f / n2
            bad = ~np.isfinite(step) | (np.abs(step) * np.sqrt(n2) > 0.05)
            ok &= done | ~bad
            move = ok & ~done
            if not move.any():
                break
            A[move, 0] -= (step * g1)[move]
            A[move, 1] -= (step * g2)[move]
    return A, ok & done


def _diagonal_cusp(a_lo, a_hi, r3_target, r4, r5):
    """Exact point on the diagonal ``a1 = a2`` where ``r3`` hits the target."""
    def f(a):
        return float(maxwell_point(a, a, r4, r5)[2]) - r3_target

    flo, fhi = f(a_lo), f(a_hi)
    if not (np.isfinite(flo) and np.isfinite(fhi)) or flo * fhi > 0:
        return None
    if flo == 0:
        return a_lo
    if fhi == 0:
        return a_hi
    return brentq(f, a_lo, a_hi, xtol=1e-14)


def _arc_resample(t: np.ndarray, P: np.ndarray, n: int) -> np.ndarray:
    """Parameter values spaced evenly along the polyline ``P(t)``."""
    seg = np.hypot(*np.diff(P, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        return t[:: max(1, len(t) // n)]
    return np.interp(np.linspace(0.0, s[-1], n), s, t)


def _symmetric_segments(r3, r4, n):
    """Maxwell pairs forced by mirror symmetry when ``r5 = 0``.

    On ``r2 = 0`` the potential is symmetric under ``alpha -> pi - alpha``
    and on ``r1 = 0`` under ``alpha -> -alpha``; the closed form degenerates
    on both lines, so they are generated directly and sampled evenly in
    arc length.
    """
    eps = 1e-9

    def line_r2_zero(a):
        return np.column_stack([4 * np.sin(a) * (r3 + 4 * r4 * np.cos(2 * a)), np.zeros_like(a)])

    def line_r1_zero(b):
        return np.column_stack([np.zeros_like(b), -4 * np.cos(b) * (r3 + 4 * r4 * np.cos(2 * b))])

    dense = np.linspace(-math.pi / 2 + eps, math.pi / 2 - eps, 50 * n)
    a = _arc_resample(dense, line_r2_zero(dense), n)
    a = a[np.abs(a) > eps]
    mirror = np.where(a > 0, math.pi - a, -math.pi - a)
    yield line_r2_zero(a), np.column_stack([np.maximum(a, mirror), np.minimum(a, mirror)])

    dense = np.linspace(eps, math.pi - eps, 50 * n)
    b = _arc_resample(dense, line_r1_zero(dense), n)
    yield line_r1_zero(b), np.column_stack([b, -b])


def _split_runs(tags: Sequence[str]):
    start = 0
    for i in range(1, len(tags) + 1):
        if i == len(tags) or tags[i] != tags[start]:
            yield start, i, tags[start]
            start = i


def _emit(curves, pts, gens, r3, r4, r5, want_global, kinds):
    if len(pts) == 0:
        return
    tags = [_tag(g[0], g[1], p[0], p[1], r3, r4, r5) for p, g in zip(pts, gens)]
    for lo, hi, tag in _split_runs(tags):
        if tag not in kinds or hi - lo < 2:
            continue
        P = np.asarray(pts[lo:hi], float)
        G = np.asarray(gens[lo:hi], float)
        glob = None
        if want_global:
            if tag == "maxwell-minima":
                glob = _global_flags(G, P, r3, r4, r5)
                P, G, glob = _refine_global_switches(P, G, glob, r3, r4, r5)
            else:
                glob = np.zeros(len(P), bool)
        phi = _pair_phi_c(*G[len(G) // 2])
        curves.append(SeparatrixCurve(tag, phi, P, G, r3, r4, r5, glob))


def _refine_global_switches(P, G, glob, r3, r4, r5, n_bisect: int = 30):
    """Insert the point where a curve stops or starts being the global pair.

    Each switch between consecutive vertices is bisected in generator space;
    the inserted vertex lies on the global side of the switch.
    """
    switches = np.nonzero(glob[1:] != glob[:-1])[0]
    if not len(switches):
        return P, G, glob
    extra = {}
    for i in switches:
        lo, hi = 0.0, 1.0  # lo keeps the flag of vertex i
        best = None
        for _ in range(n_bisect):
            t = 0.5 * (lo + hi)
            g, ok = _polish_contour((G[i] + t * (G[i + 1] - G[i]))[None, :], r3, r4, r5)
            if not ok[0]:
                break
            r1v, r2v, _ = maxwell_point(g[:, 0], g[:, 1], r4, r5)
            q = np.column_stack([r1v, r2v])
            if not np.all(np.isfinite(q)):
                break
            flag = bool(_global_flags(g, q, r3, r4, r5)[0])
            if flag == glob[i]:
                lo = t
            else:
                hi = t
            if flag:
                best = (q[0], g[0])
        if best is not None:
            extra[i] = best
    if not extra:
        return P, G, glob
    Ps, Gs, flags = [], [], []
    for i in range(len(P)):
        Ps.append(P[i])
        Gs.append(G[i])
        flags.append(bool(glob[i]))
        if i in extra:
            Ps.append(extra[i][0])
            Gs.append(extra[i][1])
            flags.append(True)
    return np.array(Ps), np.array(Gs), np.array(flags)


def _crossing_cusp(p, q, r3, r4, r5, step):
    """Cusp where the contour segment ``p -> q`` crosses the diagonal."""
    dp, dq = p[0] - p[1], q[0] - q[1]
    w = dp / (dp - dq) if dp != dq else 0.5
    x = 0.5 * ((p[0] + w * (q[0] - p[0])) + (p[1] + w * (q[1] - p[1])))
    return _diagonal_cusp(x - 2 * step, x + 2 * step, r3, r4, r5)


def _contour_pieces(alphas, r3, r4, r5, step):
    """Split a raw contour into polished runs on the ``a1 > a2`` side."""
    upper = alphas[:, 0] > alphas[:, 1]
    polished, ok = _polish_contour(alphas, r3, r4, r5)
    if r5:
        ok &= _singular_distance(polished[:, 0] + polished[:, 1]) > SINGULAR_MARGIN
    pieces = []
    current = []
    n = len(alphas)
    for k in range(n):
        if not upper[k]:
            if current:
                cusp = _crossing_cusp(alphas[k - 1], alphas[k], r3, r4, r5, step)
                if cusp is not None:
                    current.append((cusp, cusp))
                pieces.append(current)
                current = []
            continue
        if not ok[k]:
            if current:
                pieces.append(current)
                current = []
            continue
        if not current and k > 0 and not upper[k - 1]:
            cusp = _crossing_cusp(alphas[k - 1], alphas[k], r3, r4, r5, step)
            if cusp is not None:
                current.append((cusp, cusp))
        current.append(tuple(polished[k]))
    if current:
        pieces.append(current)
    return [np.array(p) for p in pieces if len(p) >= 2]


def maxwell_branches(
    r3,
    r4,
    r5,
    phi_c=None,
    grid: int = 800,
    kinds=("maxwell-minima", "maxwell-maxima"),
    check_global: bool = True,
) -> List[SeparatrixCurve]:
    """Maxwell set in the ``(r1, r2)`` plane for fixed ``(r3, r4, r5)``.

    The closed form gives ``r3`` as a function of the two extremum angles;
    its level set at the requested ``r3`` is traced by marching squares on a
    ``grid x grid`` mesh of signed circle angles, every contour vertex is
    polished onto the level set and mapped to ``(r1, r2)``.  Contours that
    meet the diagonal ``alpha1 = alpha2`` are split at the exact cusp, where
    the two extrema merge; the cusp point itself is not emitted.
    When ``r5 = 0`` the two mirror-symmetric lines are added.

    Parameters
    ----------
    phi_c : ``0`` or ``pi`` keeps only pairs on that meridian; ``None``
        (default) returns all pairs, including one well on each meridian.
    grid : mesh size per axis.
    kinds : which tags to return.
    check_global : tag each minima point with whether the pair is the
        global minimum.

    Returns
    -------
    list of SeparatrixCurve; empty when no Maxwell point exists.
    """
    r3, r4, r5 = float(r3), float(r4), float(r5)
    a = np.linspace(-math.pi, math.pi, grid)
    A1, A2 = np.meshgrid(a, a, indexing="ij")
    with np.errstate(divide="ignore", invalid="ignore"):
        F = maxwell_point(A1, A2, r4, r5)[2] - r3
    mask = np.isfinite(F)
    if r5:
        mask &= _singular_distance(A1 + A2) > SINGULAR_MARGIN
    F = np.where(mask, F, 0.0)
    # contours are symmetric under a1 <-> a2; keep the half a1 > a2
    curves: List[SeparatrixCurve] = []
    step = a[1] - a[0]
    if np.any(F > 0) and np.any(F < 0):
        raw = find_contours(F, 0.0, mask=mask)
    else:
        raw = []
    for line in raw:
        alphas = -math.pi + line * step
        for G in _contour_pieces(alphas, r3, r4, r5, step):
            r1v, r2v, _ = maxwell_point(G[:, 0], G[:, 1], r4, r5)
            P = np.column_stack([r1v, r2v])
            ok = np.all(np.isfinite(P), axis=1)
            _emit(curves, P[ok], G[ok], r3, r4, r5, check_global, kinds)

    if r5 == 0.0:
        n = max(2 * grid, 400)
        for P, G in _symmetric_segments(r3, r4, n):
            _emit(curves, P, G, r3, r4, r5, check_global, kinds)

    if phi_c is not None:
        want = 0.0 if _branch_sign(phi_c) > 0 else math.pi
        curves = [c for c in curves if c.phi_c == want]
    return curves


# --------------------------------------------------------------------------
# phases
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Well:
    theta: float
    phi_c: float
    value: float

    @property
    def alpha(self) -> float:
        return self.theta if self.phi_c == 0.0 else -self.theta


@dataclass(frozen=True)
class PhaseDescriptor:
    """Well census at one point of parameter space.

    Attributes
    ----------
    minima_count : dict with keys ``0.0``, ``pi`` and ``"total"``.  A pole
        minimum is counted on both meridians but once in the total.
    wells : minima sorted by depth, deepest first.
    global_min : deepest well.
    tied : wells within the tie tolerance of the global minimum.
    """

    minima_count: dict
    wells: Tuple[Well, ...]
    global_min: Optional[Well]
    tied: Tuple[Well, ...] = field(default_factory=tuple)

    @property
    def total(self) -> int:
        return self.minima_count["total"]


def classify_point(rp0: ReducedParams, rp_pi: Optional[ReducedParams] = None, tie_tol: float = TIE_TOL) -> PhaseDescriptor:
    """Census of minima on both meridians and the global minimum."""
    if rp_pi is None:
        rp_pi = rp0.on_branch(math.pi)
    rp0 = rp0.on_branch(0.0)
    counts = {}
    wells = []
    for rp in (rp0, rp_pi):
        pts = [p for p in find_critical_points(rp) if p.kind == "minimum"]
        counts[rp.phi_c] = len(pts)
        for p in pts:
            if rp.phi_c == math.pi and p.is_pole:
                continue
            wells.append(Well(p.theta, p.phi_c, p.value))
    wells.sort(key=lambda w: w.value)
    counts["total"] = len(wells)
    g = wells[0] if wells else None
    tied = tuple(w for w in wells if g is not None and w.value - g.value <= tie_tol)
    return PhaseDescriptor(counts, tuple(wells), g, tied)


# --------------------------------------------------------------------------
# triple points
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TriplePoint:
    """Point of the ``(r1, r2)`` plane with three equally deep wells."""

    r1: float
    r2: float
    wells: Tuple[Tuple[float, float], ...]  # (theta, phi_c)
    depth: float
    residual: float
    iterations: int


def _refine_min(a, rp: ReducedParams):
    args = rp.r
    for _ in range(50):
        d1 = _circle_d1(a, *args)
        d2 = _circle_d2(a, *args)
        if d2 <= 0:
            break
        step = d1 / d2
        a -= step
        if abs(step) < 1e-15:
            break
    return a


def locate_triple_point(r3, r4, r5, seed, wells=None, max_iter: int = 100, tol: float = 1e-7) -> TriplePoint:
    """Find ``(r1, r2)`` where three minima are equally deep.

    Damped Newton on the two depth differences.  By the envelope theorem
    the depth of a well at ``alpha`` moves with ``(sin alpha, cos alpha)``
    under changes of ``(r1, r2)``, which gives the Jacobian.

    Parameters
    ----------
    seed : ``(r1, r2)`` start point.
    wells : optional signed circle angles of the three wells to follow;
        defaults to the three deepest minima at the seed.

    Raises
    ------
    NotFoundError
        if fewer than three wells exist or Newton does not converge.
    """
    r1, r2 = map(float, seed)
    rp = ReducedParams(r1, r2, r3, r4, r5)
    if wells is None:
        found = minima(rp)
        if len(found) < 3:
            raise NotFoundError(f"only {len(found)} minima at the seed", residual=math.inf, best=(r1, r2))
        alphas = sorted(p.alpha for p in found[:3])
    else:
        alphas = sorted(float(w) for w in wells)
    alphas = [_refine_min(x, rp) for x in alphas]

    def residual(rp, al):
        V = [float(circle_potential(x, *rp.r)) for x in al]
        return np.array([V[0] - V[1], V[0] - V[2]]), V

    res, V = residual(rp, alphas)
    best = (float(np.max(np.abs(res))), r1, r2)
    for it in range(1, max_iter + 1):
        J = np.array(
            [
                [math.sin(alphas[0]) - math.sin(alphas[1]), math.cos(alphas[0]) - math.cos(alphas[1])],
                [math.sin(alphas[0]) - math.sin(alphas[2]), math.cos(alphas[0]) - math.cos(alphas[2])],
            ]
        )
        try:
            delta = np.linalg.solve(J, -res)
        except np.linalg.LinAlgError:
            break
        norm0 = np.max(np.abs(res))
        lam = 1.0
        while lam > 1e-6:
            trial = rp.with_field(r1 + lam * delta[0], r2 + lam * delta[1])
            al = [_refine_min(x, trial) for x in alphas]
            if all(_circle_d2(x, *trial.r) > 0 for x in al):
                tres, tV = residual(trial, al)
                if np.max(np.abs(tres)) < norm0 or lam < 1e-3:
                    break
            lam /= 2
        else:
            break
        r1, r2 = trial.r1, trial.r2
        rp, alphas, res, V = trial, al, tres, tV
        err = float(np.max(np.abs(res)))
        if err < best[0]:
            best = (err, r1, r2)
        if err < tol * 1e-3 or (err < tol and np.max(np.abs(lam * delta)) < 1e-13):
            break
    err = float(np.max(np.abs(res)))
    if err >= tol:
        raise NotFoundError("triple point search did not converge", residual=best[0], best=best[1:])
    branches = tuple(_to_branch(x) for x in alphas)
    return TriplePoint(r1, r2, branches, float(np.mean(V)), err, it)


# --------------------------------------------------------------------------
# raster oracle
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PhaseMap:
    """Global-minimum raster over a rectangle of the ``(r1, r2)`` plane.

    ``alpha_min[i, j]`` is the signed circle angle of the deepest well at
    ``(r1[j], r2[i])``; ``boundary`` marks pixels next to a jump of that
    angle, i.e. the numerical Maxwell set of the global minimum.
    """

    r1: np.ndarray
    r2: np.ndarray
    alpha_min: np.ndarray
    boundary: np.ndarray

    @property
    def pixel(self) -> Tuple[float, float]:
        return (self.r1[1] - self.r1[0], self.r2[1] - self.r2[0])

    def boundary_points(self) -> np.ndarray:
        i, j = np.nonzero(self.boundary)
        return np.column_stack([self.r1[j], self.r2[i]])

    def pixel_of(self, points: np.ndarray) -> np.ndarray:
        """Nearest pixel indices ``(i, j)`` for ``(r1, r2)`` points."""
        pts = np.atleast_2d(points)
        dx, dy = self.pixel
        j = np.rint((pts[:, 0] - self.r1[0]) / dx).astype(int)
        i = np.rint((pts[:, 1] - self.r2[0]) / dy).astype(int)
        return np.column_stack([i, j])

    def inside(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        return (
            (pts[:, 0] >= self.r1[0])
            & (pts[:, 0] <= self.r1[-1])
            & (pts[:, 1] >= self.r2[0])
            & (pts[:, 1] <= self.r2[-1])
        )

    def near_boundary(self, points: np.ndarray, radius: int = 1) -> np.ndarray:
        """Whether each point lies within ``radius`` pixels of a boundary pixel."""
        idx = self.pixel_of(points)
        n2, n1 = self.boundary.shape
        out = np.zeros(len(idx), bool)
        for k, (i, j) in enumerate(idx):
            i0, i1 = max(i - radius, 0), min(i + radius + 1, n2)
            j0, j1 = max(j - radius, 0), min(j + radius + 1, n1)
            out[k] = i0 < i1 and j0 < j1 and bool(self.boundary[i0:i1, j0:j1].any())
        return out


def _angle_gap(u, v):
    return np.abs(np.angle(np.exp(1j * (u - v))))


def _barrier_between(V: np.ndarray, ka: np.ndarray, kb: np.ndarray, tol: float) -> np.ndarray:
    """Whether the shorter circle arc from ``ka`` to ``kb`` rises above ``V[ka]``.

    ``V`` holds one sampled landscape per row.  Starting inside the basin of
    ``kb`` the landscape only descends along the arc, so any rise means the
    two samples belong to different wells.
    """
    n = V.shape[1]
    d = (kb - ka) % n
    forward = d <= n // 2
    length = np.where(forward, d, n - d)
    out = np.zeros(len(ka), bool)
    for r in np.nonzero(length > 1)[0]:
        step = 1 if forward[r] else -1
        idx = (ka[r] + step * np.arange(1, length[r])) % n
        out[r] = V[r, idx].max() > V[r, ka[r]] + tol
    return out


def _subpixel_hits(pairs, sa, ca, base, tol, substeps):
    """Re-examine fast-moving neighbour pairs on a finer path between them."""
    out = np.zeros(len(pairs), bool)
    w = np.linspace(0.0, 1.0, substeps + 1)
    for n, (pa, pb) in enumerate(pairs):
        x = pa[0] + w * (pb[0] - pa[0])
        y = pa[1] + w * (pb[1] - pa[1])
        V = x[:, None] * sa[None, :] + y[:, None] * ca[None, :] + base[None, :]
        k = np.argmin(V, axis=1)
        hit = _barrier_between(V[1:], k[:-1], k[1:], tol) | _barrier_between(V[:-1], k[1:], k[:-1], tol)
        out[n] = bool(hit.any())
    return out


def maxwell_oracle(
    r3,
    r4,
    r5,
    rectangle,
    resolution=(600, 600),
    n_alpha: int = 2048,
    jump: float = 0.2,
    substeps: int = 16,
    fast: float = 0.02,
) -> PhaseMap:
    """Rasterize the global minimum by exhaustive search over the circle.

    Each pixel samples the reduced potential at ``n_alpha`` points of the
    circle and keeps the deepest sample.  Two neighbouring pixels straddle
    the Maxwell set when, in the landscape of one of them, the deepest
    sample of the other is separated from its own by a barrier, or when the
    deepest angle jumps by more than ``jump``.  The second test catches
    three-well pockets thinner than a pixel, where neither landscape shows
    the barrier.

    Parameters
    ----------
    rectangle : ``(r1_min, r1_max, r2_min, r2_max)``.
    resolution : ``(n_r1, n_r2)`` pixels.
    n_alpha : samples of the circle per pixel.
    jump : angular jump (radians) between neighbouring pixels that counts
        as a change of the deepest well.
    substeps, fast : neighbour pairs whose deepest angle moves by more than
        ``fast`` without a detected change are re-sampled at ``substeps``
        points along the segment joining them.
    """
    x0, x1, y0, y1 = map(float, rectangle)
    nx, ny = resolution
    r1 = np.linspace(x0, x1, nx)
    r2 = np.linspace(y0, y1, ny)
    a = np.linspace(-math.pi, math.pi, n_alpha, endpoint=False)
    base = r3 * np.cos(2 * a) + r4 * np.cos(4 * a) + r5 * (2 * np.sin(2 * a) - np.sin(4 * a))
    sa, ca = np.sin(a), np.cos(a)
    scale = max(abs(x0), abs(x1), abs(y0), abs(y1), abs(r3), abs(r4), abs(r5), 1e-300)
    tol = 1e-12 * scale
    rows = np.arange(nx)
    alpha_min = np.empty((ny, nx))
    boundary = np.zeros((ny, nx), bool)
    prev_V = prev_k = None
    for i, y in enumerate(r2):
        V = r1[:, None] * sa[None, :] + (y * ca + base)[None, :]
        k = np.argmin(V, axis=1)
        km, kp = (k - 1) % n_alpha, (k + 1) % n_alpha
        fm, f0, fp = V[rows, km], V[rows, k], V[rows, kp]
        den = fm - 2 * f0 + fp
        shift = np.where(den > 0, 0.5 * (fm - fp) / np.where(den > 0, den, 1.0), 0.0)
        alpha_min[i] = a[k] + shift * (a[1] - a[0])

        # horizontal neighbours, judged in both landscapes
        hit = _barrier_between(V[1:], k[:-1], k[1:], tol) | _barrier_between(V[:-1], k[1:], k[:-1], tol)
        gap = _angle_gap(alpha_min[i, 1:], alpha_min[i, :-1])
        for sel, n_sub in ((gap > jump, 4 * substeps), (gap > fast, substeps)):
            todo = np.nonzero(~hit & sel)[0]
            if len(todo):
                pairs = [((r1[j], y), (r1[j + 1], y)) for j in todo]
                hit[todo] = _subpixel_hits(pairs, sa, ca, base, tol, n_sub)
        boundary[i, 1:] |= hit
        boundary[i, :-1] |= hit
        if prev_V is not None:
            hit = _barrier_between(V, prev_k, k, tol) | _barrier_between(prev_V, k, prev_k, tol)
            gap = _angle_gap(alpha_min[i], alpha_min[i - 1])
            for sel, n_sub in ((gap > jump, 4 * substeps), (gap > fast, substeps)):
                todo = np.nonzero(~hit & sel)[0]
                if len(todo):
                    pairs = [((r1[j], r2[i - 1]), (r1[j], y)) for j in todo]
                    hit[todo] = _subpixel_hits(pairs, sa, ca, base, tol, n_sub)
            boundary[i] |= hit
            boundary[i - 1] |= hit
        prev_V, prev_k = V, k
    return PhaseMap(r1, r2, alpha_min, boundary)
