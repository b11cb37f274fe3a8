"""Coherent states and the semiclassical energy landscape.

The semiclassical potential is the expectation value of the Hamiltonian in
an SU(2) coherent state.  With the spin-dependent prefactors used in
:mod:`spincat.spinops` it does not depend on ``S``.

With the field in the xz-plane the azimuths ``phi_c = 0`` and ``phi_c = pi``
are always critical, and the landscape along those two meridians is the
one-dimensional potential::

    V(theta) = r1 c sin(theta) + r2 cos(theta) + r3 cos(2 theta)
               + r4 cos(4 theta) + r5 c (2 sin(2 theta) - sin(4 theta))

with ``c = cos(phi_c) = +-1``.  The two meridians join into one great circle;
the signed angle ``alpha = c * theta`` runs over that circle and turns the
``phi_c = pi`` branch into the ``phi_c = 0`` formula evaluated at ``-theta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .errors import ReductionNotApplicableError
from .spinops import MU_B, SpinModel, _check_spin

DEGENERACY_TOL = 1e-8  # |V''| below this marks a degenerate critical point
SCAN_POINTS = 2048


# --------------------------------------------------------------------------
# coherent states
# --------------------------------------------------------------------------


def _log_binomial_sqrt(S: float) -> np.ndarray:
    n = int(round(2 * S))
    k = np.arange(n + 1)
    return 0.5 * (math.lgamma(n + 1) - np.array([math.lgamma(i + 1) + math.lgamma(n - i + 1) for i in k]))


def coherent_amplitudes(S, theta, phi) -> np.ndarray:
    """Coherent-state amplitudes over ``M = -S..S`` for arrays of angles.

    Returns an array of shape ``broadcast(theta, phi).shape + (2S+1,)``.
    """
    S = _check_spin(S)
    theta, phi = np.broadcast_arrays(np.asarray(theta, float), np.asarray(phi, float))
    m = np.arange(-S, S + 1)
    half = theta[..., None] / 2
    c = np.cos(half)
    s = np.sin(half)
    # powers of exactly zero must stay 0**0 = 1, so no logarithms here
    mag = np.exp(_log_binomial_sqrt(S)) * c ** (S - m) * s ** (S + m)
    return mag * np.exp(-1j * phi[..., None] * (S + m))


@dataclass(frozen=True)
class CoherentVector:
    """Spin coherent state pointing along ``(theta, phi)``."""

    S: float
    theta: float
    phi: float
    amplitudes: np.ndarray

    @property
    def direction(self) -> np.ndarray:
        """Unit vector ``(x, y, z)``; ``theta = 0`` carries ``M = -S``."""
        t, p = self.theta, self.phi
        return np.array([math.sin(t) * math.cos(p), math.sin(t) * math.sin(p), -math.cos(t)])


def coherent_vector(S, theta: float, phi: float) -> CoherentVector:
    """Coherent state obtained by rotating ``|-S>`` to ``(theta, phi)``.

    Angles outside ``[0, pi] x [0, 2 pi)`` are folded back onto the sphere.
    """
    S = _check_spin(S)
    theta = float(theta) % (2 * math.pi)
    phi = float(phi)
    if theta > math.pi:
        theta = 2 * math.pi - theta
        phi += math.pi
    phi %= 2 * math.pi
    return CoherentVector(S, theta, phi, coherent_amplitudes(S, theta, phi))


# --------------------------------------------------------------------------
# potentials
# --------------------------------------------------------------------------


def potential_full(theta, phi, model: SpinModel):
    """Closed-form ``<zeta|H|zeta>`` in Kelvin, for scalar or array angles."""
    m = model.normalized()
    theta = np.asarray(theta, float)
    phi = np.asarray(phi, float)
    st, ct = np.sin(theta), np.cos(theta)
    c2t, c4t = np.cos(2 * theta), np.cos(4 * theta)
    Bx, By, Bz = m.B
    V = (
        m.D / 12 * (1 + 3 * c2t)
        + m.E / 2 * np.cos(2 * phi) * st**2
        - m.g * MU_B * (-Bz * ct + Bx * np.cos(phi) * st + By * np.sin(phi) * st)
        + (
            m.B40 / 8 * (35 * c4t + 20 * c2t + 9)
            + m.B42 / 2 * (7 * c2t + 5) * np.cos(2 * phi) * st**2
            - m.B43 * np.cos(3 * phi) * ct * st**3
            + m.B44 * np.cos(4 * phi) * st**4
        )
        / 8
    )
    return V if V.ndim else float(V)


@dataclass(frozen=True)
class ReducedParams:
    """Coefficients of the one-dimensional potential on one meridian.

    ``phi_c`` is ``0`` or ``pi``; only its cosine enters.
    """

    r1: float
    r2: float
    r3: float
    r4: float
    r5: float
    phi_c: float = 0.0

    def __post_init__(self):
        for name in ("r1", "r2", "r3", "r4", "r5"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if abs(self.phi_c) < 1e-12:
            object.__setattr__(self, "phi_c", 0.0)
        elif abs(self.phi_c - math.pi) < 1e-12:
            object.__setattr__(self, "phi_c", math.pi)
        else:
            raise ValueError("phi_c must be 0 or pi")

    @property
    def c(self) -> float:
        """``cos(phi_c)``, i.e. ``+1`` or ``-1``."""
        return 1.0 if self.phi_c == 0.0 else -1.0

    @property
    def r(self) -> Tuple[float, float, float, float, float]:
        return (self.r1, self.r2, self.r3, self.r4, self.r5)

    def on_branch(self, phi_c: float) -> "ReducedParams":
        return ReducedParams(*self.r, phi_c=phi_c)

    def with_field(self, r1: float, r2: float) -> "ReducedParams":
        return ReducedParams(r1, r2, self.r3, self.r4, self.r5, self.phi_c)


def potential_reduced(theta, rp: ReducedParams):
    """One-dimensional potential ``V(theta)`` on the ``phi_c`` meridian."""
    t = np.asarray(theta, float)
    c = rp.c
    V = (
        rp.r1 * c * np.sin(t)
        + rp.r2 * np.cos(t)
        + rp.r3 * np.cos(2 * t)
        + rp.r4 * np.cos(4 * t)
        + rp.r5 * c * (2 * np.sin(2 * t) - np.sin(4 * t))
    )
    return V if V.ndim else float(V)


def potential_reduced_d1(theta, rp: ReducedParams):
    """``dV/dtheta`` of :func:`potential_reduced`."""
    t = np.asarray(theta, float)
    c = rp.c
    V = (
        rp.r1 * c * np.cos(t)
        - rp.r2 * np.sin(t)
        - 2 * rp.r3 * np.sin(2 * t)
        - 4 * rp.r4 * np.sin(4 * t)
        + rp.r5 * c * (4 * np.cos(2 * t) - 4 * np.cos(4 * t))
    )
    return V if V.ndim else float(V)


def potential_reduced_d2(theta, rp: ReducedParams):
    """``d2V/dtheta2`` of :func:`potential_reduced`."""
    t = np.asarray(theta, float)
    c = rp.c
    V = (
        -rp.r1 * c * np.sin(t)
        - rp.r2 * np.cos(t)
        - 4 * rp.r3 * np.cos(2 * t)
        - 16 * rp.r4 * np.cos(4 * t)
        + rp.r5 * c * (-8 * np.sin(2 * t) + 16 * np.sin(4 * t))
    )
    return V if V.ndim else float(V)


def potential_reduced_d3(theta, rp: ReducedParams):
    """Third derivative, used to polish degenerate points."""
    t = np.asarray(theta, float)
    c = rp.c
    V = (
        -rp.r1 * c * np.cos(t)
        + rp.r2 * np.sin(t)
        + 8 * rp.r3 * np.sin(2 * t)
        + 64 * rp.r4 * np.sin(4 * t)
        + rp.r5 * c * (-16 * np.cos(2 * t) + 64 * np.cos(4 * t))
    )
    return V if V.ndim else float(V)


def reduce_params(model: SpinModel) -> Tuple[ReducedParams, ReducedParams]:
    """Map a model with ``By = 0`` to its reduced parameters.

    Returns the ``phi_c = 0`` and ``phi_c = pi`` branches, which share the
    same coefficients.
    """
    m = model.normalized()
    Bx, By, Bz = m.B
    if By != 0.0:
        raise ReductionNotApplicableError("the reduced potential needs By = 0")
    gmu = m.g * MU_B
    r = (
        -gmu * Bx,
        gmu * Bz,
        (m.D - m.E) / 4 + (5 * m.B40 + m.B42 - m.B44) / 16,
        (35 * m.B40 - 7 * m.B42 + m.B44) / 64,
        -m.B43 / 64,
    )
    return ReducedParams(*r, phi_c=0.0), ReducedParams(*r, phi_c=math.pi)


def invert_params(r1: float, r2: float, model: SpinModel) -> Tuple[float, float]:
    """Field components ``(Bx, Bz)`` that produce ``(r1, r2)`` for ``model``'s g."""
    if not model.g > 0:
        raise ValueError("g must be positive")
    gmu = model.g * MU_B
    return -r1 / gmu, r2 / gmu


def model_at(model: SpinModel, r1: float, r2: float) -> SpinModel:
    """Copy of ``model`` with the field set so that it maps to ``(r1, r2)``."""
    Bx, Bz = invert_params(r1, r2, model)
    return model.with_field(Bx=Bx, By=0.0, Bz=Bz)


# --------------------------------------------------------------------------
# critical points
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CriticalPoint:
    """Critical point of the reduced potential on one meridian."""

    theta: float
    kind: str  # "minimum", "maximum" or "degenerate"
    value: float
    second_derivative: float
    phi_c: float = 0.0

    @property
    def alpha(self) -> float:
        """Signed angle on the great circle through both meridians."""
        return self.theta if self.phi_c == 0.0 else -self.theta

    @property
    def is_pole(self) -> bool:
        return self.theta < 1e-9 or self.theta > math.pi - 1e-9


def _classify(d2: float) -> str:
    if abs(d2) < DEGENERACY_TOL:
        return "degenerate"
    return "minimum" if d2 > 0 else "maximum"


def _polish(t: float, rp: ReducedParams, lo: float, hi: float) -> float:
    for _ in range(8):
        d1 = potential_reduced_d1(t, rp)
        d2 = potential_reduced_d2(t, rp)
        if d2 == 0.0:
            break
        step = d1 / d2
        t_new = t - step
        if not lo <= t_new <= hi:
            break
        if abs(potential_reduced_d1(t_new, rp)) > abs(d1):
            break
        t = t_new
        if abs(step) < 1e-16:
            break
    return t


def _bisect(f, a: float, b: float, fa: float, tol: float = 1e-12) -> float:
    while b - a > tol:
        mid = 0.5 * (a + b)
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0) == (fa > 0):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


def find_critical_points(rp: ReducedParams, n_scan: int = SCAN_POINTS, tol: float = 1e-10) -> List[CriticalPoint]:
    """All critical points of the reduced potential in ``[0, pi]``.

    A uniform scan of ``V'`` brackets every sign change, bisection narrows
    each bracket to 1e-12 and a guarded Newton step polishes the root.
    The poles are reported when ``|V'| < tol`` there.  Points are returned
    in ascending ``theta``.
    """
    grid = np.linspace(0.0, math.pi, n_scan + 1)
    d1 = potential_reduced_d1(grid, rp)
    c, r1, r2, r3, r4, r5 = rp.c, rp.r1, rp.r2, rp.r3, rp.r4, rp.r5

    def f(t):
        # scalar copy of potential_reduced_d1 for the bisection loop
        return (
            r1 * c * math.cos(t)
            - r2 * math.sin(t)
            - 2 * r3 * math.sin(2 * t)
            - 4 * r4 * math.sin(4 * t)
            + r5 * c * (4 * math.cos(2 * t) - 4 * math.cos(4 * t))
        )

    roots = [grid[end] for end in (0, n_scan) if abs(d1[end]) < tol]
    roots += list(grid[1:-1][d1[1:-1] == 0.0])
    fa, fb = d1[:-1], d1[1:]
    for i in np.nonzero((fa != 0.0) & (fb != 0.0) & ((fa > 0) != (fb > 0)))[0]:
        t = _bisect(f, grid[i], grid[i + 1], fa[i])
        roots.append(_polish(t, rp, grid[i], grid[i + 1]))

    points = []
    for t in sorted(roots):
        if points and abs(t - points[-1].theta) < 1e-9:
            continue
        d2 = potential_reduced_d2(t, rp)
        points.append(CriticalPoint(float(t), _classify(d2), potential_reduced(t, rp), float(d2), rp.phi_c))
    return points


def critical_points_circle(rp: ReducedParams, **kwargs) -> List[CriticalPoint]:
    """Critical points on both meridians, with the poles listed once."""
    out = list(find_critical_points(rp.on_branch(0.0), **kwargs))
    for p in find_critical_points(rp.on_branch(math.pi), **kwargs):
        if not p.is_pole:
            out.append(p)
    out.sort(key=lambda p: p.alpha)
    return out


def minima(rp: ReducedParams, **kwargs) -> List[CriticalPoint]:
    """Minima on both meridians, sorted by depth (deepest first)."""
    pts = [p for p in critical_points_circle(rp, **kwargs) if p.kind == "minimum"]
    pts.sort(key=lambda p: p.value)
    return pts


def global_minimum(model: SpinModel) -> Tuple[float, float, float]:
    """Deepest point ``(theta, phi_c, V)`` of the full landscape for a field in the xz-plane.

    The well is located on the reduced potential and the value is taken
    from :func:`potential_full`, so it includes the constant that the
    reduced form drops.
    """
    rp = reduce_params(model)[0]
    deepest = minima(rp)[0]
    return deepest.theta, deepest.phi_c, float(potential_full(deepest.theta, deepest.phi_c, model))
