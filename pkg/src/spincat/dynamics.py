"""Phonon-driven population dynamics of the spin levels.

Populations evolve under the linear master equation ``dp/dt = p G`` with
``p`` a row vector.  ``G[a, b]`` is the rate from state ``a`` to state ``b``
and each diagonal entry makes its row sum vanish.  Rates come from
spin-phonon couplings of the ``S+-^2`` and ``{S+-, Sz}`` type, with a
phonon factor chosen so that the stationary state is the Boltzmann
distribution.

During a field sweep the populations are indexed by spin-projection label
(``M = -S..S``), so they stay with the diabatic states when the field
carries two levels through an avoided crossing.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .errors import DegenerateKernelError, IntegrationError, InvalidEnvironmentError
from .spinops import (
    EigenSystem,
    SpinModel,
    assign_labels,
    build_hamiltonian,
    build_operators,
    diagonalize,
    label_permutation,
)

ZERO_TOL = 1e-12  # relative to max|G|; eigenvalue noise is ~1e-16 max|G|
NEGATIVE_TOL = 1e-8  # populations above -NEGATIVE_TOL are clipped to zero
_IMPLICIT = ("Radau", "BDF", "LSODA")


@dataclass(frozen=True)
class PhononEnvironment:
    """Spin-phonon bath parameters.

    Attributes
    ----------
    C : rate prefactor ``3/(pi hbar^4 rho c_s^5)`` as quoted, giving rates in
        1/s when multiplied by energies in Kelvin.
    D1, D2 : spin-phonon couplings (K).
    T : temperature (K).
    gamma_t : constant tunnelling rate (1/s) added in both directions
        between each pair of labels in ``gamma_t_pairs``.
    gamma_t_pairs : label pairs ``(m, m')``; empty means ``(-S, +S)``.
    """

    C: float
    D1: float
    D2: float
    T: float
    gamma_t: float = 0.0
    gamma_t_pairs: Tuple[Tuple[float, float], ...] = ()

    def __post_init__(self):
        values = (self.C, self.D1, self.D2, self.T, self.gamma_t)
        if not all(math.isfinite(float(v)) for v in values):
            raise InvalidEnvironmentError("environment parameters must be finite")
        if self.C < 0:
            raise InvalidEnvironmentError("C must be non-negative")
        if not self.T > 0:
            raise InvalidEnvironmentError("temperature must be positive")
        if self.gamma_t < 0:
            raise InvalidEnvironmentError("gamma_t must be non-negative")
        pairs = tuple((float(a), float(b)) for a, b in self.gamma_t_pairs)
        object.__setattr__(self, "gamma_t_pairs", pairs)

    def pairs_for(self, S: float) -> Tuple[Tuple[float, float], ...]:
        return self.gamma_t_pairs or ((-S, S),)

    def replace(self, **changes) -> "PhononEnvironment":
        return dataclasses.replace(self, **changes)


def phonon_factor(x, T: float):
    """``x^3 / (exp(x/T) - 1)`` with ``x = E_to - E_from``.

    Non-negative for both signs of ``x``; ``Phi(x) / Phi(-x) = exp(-x/T)``.
    """
    if not T > 0:
        raise InvalidEnvironmentError("temperature must be positive")
    x = np.asarray(x, float)
    u = x / T
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        bulk = x**3 / np.expm1(np.clip(u, -700.0, 700.0))
    out = np.where(np.abs(u) < 1e-6, T * x * x, bulk)
    out = np.where(u > 700, 0.0, np.where(u < -700, np.abs(x) ** 3, out))
    return out if out.ndim else float(out)


class _CouplingOperators:
    """Spin operators entering the phonon rates, cached per spin."""

    _cache: dict = {}

    @classmethod
    def get(cls, S: float):
        if S not in cls._cache:
            ops = build_operators(S)
            sp2 = ops.sp @ ops.sp
            sm2 = ops.sm @ ops.sm
            apz = ops.sp @ ops.sz + ops.sz @ ops.sp
            amz = ops.sm @ ops.sz + ops.sz @ ops.sm
            cls._cache[S] = (sp2, sm2, apz, amz, ops.sz)
        return cls._cache[S]


def coupling_strengths(eig: EigenSystem, env: PhononEnvironment) -> np.ndarray:
    """``W[a, b]``: matrix-element factor of the rate from ``a`` to ``b``."""
    sp2, sm2, apz, amz, _ = _CouplingOperators.get(eig.S)
    V = eig.vectors
    Vh = V.conj().T

    def sq(op):
        # element [a, b] = |<b|op|a>|^2
        return np.abs(Vh @ op @ V).T ** 2

    return env.D1**2 * (sq(sp2) + sq(sm2)) + env.D2**2 * (sq(apz) + sq(amz))


def transition_rate(eig: EigenSystem, source: int, target: int, env: PhononEnvironment, labels=None) -> float:
    """Rate (1/s) from eigenstate ``source`` to eigenstate ``target``."""
    if source == target:
        raise ValueError("source and target must differ")
    W = coupling_strengths(eig, env)
    dE = eig.energies[target] - eig.energies[source]
    rate = env.C * phonon_factor(dE, env.T) * W[source, target]
    if env.gamma_t:
        m = (labels if labels is not None else assign_labels(eig)).m
        pair = (m[source], m[target])
        for a, b in env.pairs_for(eig.S):
            if {a, b} == set(pair):
                rate += env.gamma_t
                break
    return float(rate)


@dataclass(frozen=True)
class RateMatrix:
    """Generator of the master equation in the eigenbasis (energy order).

    Attributes
    ----------
    G : generator, ``G[a, b]`` rate from ``a`` to ``b`` off the diagonal.
    gamma : off-diagonal rates.
    energies : level energies (K).
    labels : spin-projection label of each level.
    """

    G: np.ndarray
    gamma: np.ndarray
    energies: np.ndarray
    labels: np.ndarray

    @property
    def dim(self) -> int:
        return self.G.shape[0]

    def eigenvalues(self) -> np.ndarray:
        """Spectrum of ``G`` sorted by decreasing real part."""
        w = np.linalg.eigvals(self.G)
        return w[np.argsort(-w.real, kind="stable")]

    def stationary(self) -> np.ndarray:
        """Stationary distribution ``pi G = 0`` by the GTH elimination."""
        return stationary_distribution(self.gamma)

    def in_label_order(self) -> "RateMatrix":
        """Same generator with rows and columns in ``M = -S..S`` order."""
        order = np.argsort(self.labels, kind="stable")
        ix = np.ix_(order, order)
        return RateMatrix(self.G[ix], self.gamma[ix], self.energies[order], self.labels[order])


def stationary_distribution(gamma: np.ndarray) -> np.ndarray:
    """Stationary vector of the chain with off-diagonal rates ``gamma``.

    Uses the Grassmann-Taksar-Heyman elimination, which involves no
    subtractions and keeps full relative accuracy for tiny populations.

    Raises
    ------
    DegenerateKernelError
        if some state cannot reach the states eliminated before it
        (the chain is reducible).
    """
    P = np.array(gamma, dtype=float)
    np.fill_diagonal(P, 0.0)
    n = P.shape[0]
    for k in range(n - 1, 0, -1):
        s = P[k, :k].sum()
        if not s > 0:
            raise DegenerateKernelError("rate matrix is reducible; the stationary state is not unique")
        P[:k, k] /= s
        P[:k, :k] += np.outer(P[:k, k], P[k, :k])
    pi = np.zeros(n)
    pi[0] = 1.0
    for k in range(1, n):
        pi[k] = pi[:k] @ P[:k, k]
    return pi / pi.sum()


def build_rate_matrix(eig: EigenSystem, env: PhononEnvironment, labels=None) -> RateMatrix:
    """Rate matrix of ``eig`` in energy order."""
    if labels is None:
        labels = assign_labels(eig, unique=True)
    E = eig.energies
    dE = E[None, :] - E[:, None]  # [a, b] = E_b - E_a
    gamma = env.C * phonon_factor(dE, env.T) * coupling_strengths(eig, env)
    np.fill_diagonal(gamma, 0.0)
    if env.gamma_t:
        m = labels.m
        index = {float(v): i for i, v in enumerate(m)}
        for a, b in env.pairs_for(eig.S):
            if a in index and b in index and a != b:
                i, j = index[a], index[b]
                gamma[i, j] += env.gamma_t
                gamma[j, i] += env.gamma_t
    G = gamma.copy()
    G[np.diag_indices_from(G)] = -gamma.sum(axis=1)
    return RateMatrix(G, gamma, E.copy(), np.asarray(labels.m, float))


def _slowest(G: np.ndarray):
    scale = np.max(np.abs(G))
    if scale == 0:
        raise DegenerateKernelError("generator vanishes")
    zero = np.abs(np.linalg.eigvals(G)) <= ZERO_TOL * scale
    if zero.sum() != 1:
        raise DegenerateKernelError(f"{int(zero.sum())} eigenvalues within the zero tolerance")
    # G 1 = 0, so subtracting scale * 1 u^T with u.1 = 1 moves the zero
    # mode to -scale and leaves the rest of the spectrum in place.
    n = len(G)
    w = np.linalg.eigvals(G - scale * np.full((n, n), 1.0 / n))
    keep = np.abs(w + scale) > 1e-6 * scale
    w = w[keep] if keep.sum() == n - 1 else np.delete(w, np.argmin(np.abs(w + scale)))
    return w[np.argmin(np.abs(w))]


def relaxation_time(G) -> float:
    """``tau = -1 / Re(g)`` for the slowest non-zero mode ``g`` of ``G``."""
    G = G.G if isinstance(G, RateMatrix) else np.asarray(G, float)
    return float(-1.0 / _slowest(G).real)


def relaxation_rate(G) -> float:
    """``Gamma = 1 / tau``."""
    return 1.0 / relaxation_time(G)


def boltzmann(energies: np.ndarray, T: float) -> np.ndarray:
    """Normalized ``exp(-E/T)``."""
    E = np.asarray(energies, float)
    w = np.exp(-(E - E.min()) / T)
    return w / w.sum()


# --------------------------------------------------------------------------
# sweeps
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepSchedule:
    """Linear field sweep ``B(t) = offset + b(t) * direction``.

    Attributes
    ----------
    rate : sweep rate ``|db/dt|`` (T/s).
    b_min, b_max : range of the swept component (T).
    direction : unit vector of the swept component.
    offset : static field added to the sweep (T).
    pattern : ``"up"`` (``b_min -> b_max``), ``"down"`` (``b_max -> b_min``)
        or ``"loop"`` (up then down).
    """

    rate: float
    b_min: float
    b_max: float
    direction: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    offset: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    pattern: str = "loop"

    def __post_init__(self):
        if not self.rate > 0 or not math.isfinite(self.rate):
            raise ValueError("sweep rate must be positive")
        if not self.b_max > self.b_min:
            raise ValueError("b_max must exceed b_min")
        d = np.asarray(self.direction, float)
        n = np.linalg.norm(d)
        if d.shape != (3,) or n == 0:
            raise ValueError("direction must be a non-zero 3-vector")
        object.__setattr__(self, "direction", tuple(d / n))
        object.__setattr__(self, "offset", tuple(float(x) for x in self.offset))
        if self.pattern not in ("up", "down", "loop"):
            raise ValueError("pattern must be 'up', 'down' or 'loop'")

    @staticmethod
    def tilted(angle_deg: float) -> Tuple[float, float, float]:
        """Direction in the xz-plane tilted by ``angle_deg`` from z."""
        a = math.radians(angle_deg)
        return (math.sin(a), 0.0, math.cos(a))

    def segments(self) -> List[Tuple[float, float]]:
        """``(b_start, b_end)`` of each monotonic leg."""
        up = (self.b_min, self.b_max)
        down = (self.b_max, self.b_min)
        return {"up": [up], "down": [down], "loop": [up, down]}[self.pattern]

    @property
    def b_start(self) -> float:
        return self.segments()[0][0]

    def field(self, b: float) -> Tuple[float, float, float]:
        return tuple(o + b * d for o, d in zip(self.offset, self.direction))

    @property
    def duration(self) -> float:
        return sum(abs(e - s) for s, e in self.segments()) / self.rate


@dataclass(frozen=True)
class PopulationState:
    """Populations over labels ``M = -S..S`` at time ``t`` and swept field ``b``."""

    t: float
    b: float
    p: np.ndarray
    field: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    leg: int = 0


class _LabelledGenerator:
    """``G(B)`` in label order for a model and bath."""

    def __init__(self, model: SpinModel, env: PhononEnvironment, method: str = "lapack"):
        self.model = model.normalized()
        self.env = env
        self.method = method
        # H(B) = H0 + Bx Zx + By Zy + Bz Zz
        self._h0 = build_hamiltonian(self.model.replace(B=(0.0, 0.0, 0.0)))
        self._zeeman = [build_hamiltonian(self.model.replace(B=tuple(np.eye(3)[i]))) - self._h0 for i in range(3)]
        self._previous = None  # last eigensystem, for continuity of tied labels

    def eigensystem(self, B) -> EigenSystem:
        H = self._h0 + B[0] * self._zeeman[0] + B[1] * self._zeeman[1] + B[2] * self._zeeman[2]
        return diagonalize(H, S=self.model.S, method=self.method)

    def at(self, B) -> Tuple[np.ndarray, EigenSystem, np.ndarray]:
        eig = self.eigensystem(B)
        labels = assign_labels(eig, unique=True, previous=self._previous)
        self._previous = (eig.coefficients, labels.m)
        rm = build_rate_matrix(eig, self.env, labels)
        perm = label_permutation(labels)  # eigen index of each label
        return rm.G[np.ix_(perm, perm)], eig, perm


def equilibrium_state(model: SpinModel, env: PhononEnvironment, B) -> np.ndarray:
    """Boltzmann populations in label order at field ``B``."""
    gen = _LabelledGenerator(model, env)
    _, eig, perm = gen.at(B)
    return boltzmann(eig.energies, env.T)[perm]


def _clean(p: np.ndarray, where: str) -> np.ndarray:
    if np.min(p) < -NEGATIVE_TOL:
        raise IntegrationError(f"population {np.min(p):.3e} went negative {where}")
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def _interval_ode(gen, schedule, p, ba, bb, nu, method, rtol, atol, max_field_step):
    """Advance ``p`` from swept field ``ba`` to ``bb`` with ``solve_ivp``."""
    span = (bb - ba) / nu

    def rhs(tau, y):
        return y @ gen.at(schedule.field(ba + nu * tau))[0]

    options = dict(method=method, rtol=rtol, atol=atol)
    if max_field_step:
        options["max_step"] = max_field_step / schedule.rate
    if method in _IMPLICIT:
        # the equation is linear in p, so the Jacobian is G^T
        options["jac"] = lambda tau, y: gen.at(schedule.field(ba + nu * tau))[0].T
    sol = solve_ivp(rhs, (0.0, span), p, **options)
    if not sol.success:
        raise IntegrationError(f"integration failed near b = {ba:.6g} T: {sol.message}")
    return sol.y[:, -1]


def _interval_magnus(gen, schedule, p, ba, bb, nu, max_field_step):
    """Exponential-midpoint steps ``p <- p expm(G(b_mid) h)``."""
    n = max(1, int(math.ceil(abs(bb - ba) / max_field_step - 1e-9)))
    h = (bb - ba) / n
    for i in range(n):
        G = gen.at(schedule.field(ba + (i + 0.5) * h))[0]
        p = p @ expm(G * (h / nu))
    return p


def evolve(
    p0: PopulationState,
    schedule: SweepSchedule,
    model: SpinModel,
    env: PhononEnvironment,
    n_out: int = 201,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    max_field_step: Optional[float] = 2e-4,
    method: str = "RK45",
) -> List[PopulationState]:
    """Integrate the master equation along the sweep.

    The generator is rebuilt from the instantaneous field at every stage
    evaluation.  Each leg is split into ``n_out - 1`` output intervals; the
    state is checked for negative populations at every output.

    Parameters
    ----------
    p0 : initial populations in label order; ``p0.b`` is ignored and the
        sweep starts at ``schedule.b_start``.
    max_field_step : cap on the field change per integrator step (T).
    method : a ``solve_ivp`` method name (default: the Dormand-Prince 5(4)
        pair; implicit methods get the exact Jacobian), or ``"magnus"`` for
        fixed exponential-midpoint steps of ``max_field_step``.  The
        exponential steps are unconditionally stable and map probability
        vectors to probability vectors, which suits stiff sweeps where the
        fastest rates exceed the sweep time scale by many orders.  In the
        stiff limit each step relaxes to the equilibrium of its midpoint
        field, so populations lag by half a field step.

    Raises
    ------
    IntegrationError
        if the integrator fails or populations go negative beyond roundoff;
        ``last_state`` holds the last good state.
    """
    p = np.asarray(p0.p, float)
    if abs(p.sum() - 1) > 1e-9 or np.min(p) < -1e-12:
        raise ValueError("initial populations must be a probability vector")
    if method == "magnus" and not max_field_step:
        raise ValueError("the exponential-midpoint route needs a field step")
    gen = _LabelledGenerator(model, env)
    out: List[PopulationState] = []
    t = float(p0.t)
    for leg, (b0, b1) in enumerate(schedule.segments()):
        nu = math.copysign(schedule.rate, b1 - b0)
        grid = np.linspace(b0, b1, n_out)
        if leg == 0:
            out.append(PopulationState(t, b0, p.copy(), schedule.field(b0), leg))
        for ba, bb in zip(grid[:-1], grid[1:]):
            last = out[-1]
            try:
                if method == "magnus":
                    y = _interval_magnus(gen, schedule, p, ba, bb, nu, max_field_step)
                else:
                    y = _interval_ode(gen, schedule, p, ba, bb, nu, method, rtol, atol, max_field_step)
                p = _clean(y, f"near b = {bb:.6g} T")
            except IntegrationError as exc:
                raise IntegrationError(str(exc), last) from None
            t += (bb - ba) / nu
            out.append(PopulationState(t, float(bb), p.copy(), schedule.field(bb), leg))
    return out


def evolve_frozen(
    p0: np.ndarray,
    model: SpinModel,
    env: PhononEnvironment,
    times: Sequence[float],
    method: str = "Radau",
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> np.ndarray:
    """Populations (label order) at ``times`` for a constant field.

    Defaults to an implicit method because the fastest intra-well rates
    can exceed the slowest mode by ten orders of magnitude.
    """
    gen = _LabelledGenerator(model, env)
    G, _, _ = gen.at(model.normalized().B)
    times = np.asarray(times, float)
    p0 = np.asarray(p0, float)
    if times.ndim != 1 or not np.all(times >= 0):
        raise ValueError("times must be a 1-d sequence of non-negative values")
    if times.size == 0 or times.max() == 0.0:
        return np.tile(p0, (times.size, 1))
    options = dict(method=method, rtol=rtol, atol=atol)
    if method in _IMPLICIT:
        options["jac"] = G.T
    sol = solve_ivp(lambda t, y: y @ G, (0.0, float(times.max())), p0, t_eval=times, **options)
    if not sol.success:
        raise IntegrationError(sol.message)
    return sol.y.T


def magnetization(p, eig: EigenSystem, perm: Optional[np.ndarray] = None) -> Tuple[float, float]:
    """``M = sum_k p_k <psi_k|Sz|psi_k>`` and ``M / S``.

    ``p`` is in label order; ``perm`` maps each label to its eigen index
    (computed from ``eig`` when omitted).
    """
    p = np.asarray(p.p if isinstance(p, PopulationState) else p, float)
    if perm is None:
        perm = label_permutation(assign_labels(eig, unique=True))
    sz = np.real(np.sum(eig.weights() * eig.projections[None, :], axis=1))
    M = float(p @ sz[perm])
    return M, M / eig.S if eig.S else 0.0


@dataclass(frozen=True)
class HysteresisLoop:
    """Magnetization along a sweep.

    Arrays share one index: time ``t`` (s), swept field ``b`` (T), the
    field vector ``B`` (T), the leg number and ``M / S``.
    """

    t: np.ndarray
    b: np.ndarray
    B: np.ndarray
    leg: np.ndarray
    m: np.ndarray
    states: Tuple[PopulationState, ...] = field(repr=False, default=())

    def leg_slice(self, leg: int) -> slice:
        idx = np.nonzero(self.leg == leg)[0]
        return slice(int(idx[0]), int(idx[-1]) + 1)


def hysteresis_loop(
    model: SpinModel,
    env: PhononEnvironment,
    schedule: SweepSchedule,
    p0: Optional[np.ndarray] = None,
    n_out: int = 201,
    method: str = "magnus",
    **kwargs,
) -> HysteresisLoop:
    """Run :func:`evolve` over the schedule and record ``M / S``.

    The default initial state is thermal equilibrium at the start field.
    Loops default to the exponential-midpoint route because the sweeps of
    interest are stiff; pass ``method="Radau"`` for an adaptive check.
    """
    gen = _LabelledGenerator(model, env)
    B0 = schedule.field(schedule.b_start)
    if p0 is None:
        p0 = equilibrium_state(model, env, B0)
    states = evolve(PopulationState(0.0, schedule.b_start, np.asarray(p0, float)), schedule, model, env, n_out=n_out, method=method, **kwargs)
    m = []
    for s in states:
        _, eig, perm = gen.at(s.field)
        m.append(magnetization(s.p, eig, perm)[1])
    return HysteresisLoop(
        np.array([s.t for s in states]),
        np.array([s.b for s in states]),
        np.array([s.field for s in states]),
        np.array([s.leg for s in states]),
        np.array(m),
        tuple(states),
    )


def relaxation_scan(model: SpinModel, env: PhononEnvironment, fields: Sequence) -> Tuple[np.ndarray, np.ndarray]:
    """Relaxation time and rate at each field vector."""
    tau = []
    for B in fields:
        eig = diagonalize(build_hamiltonian(model.replace(B=tuple(B))), S=model.S)
        tau.append(relaxation_time(build_rate_matrix(eig, env)))
    tau = np.array(tau)
    return tau, 1.0 / tau
