"""Spin operators, the fourth-order spin Hamiltonian and its eigensystem.

Conventions
-----------
- Basis order is ``M = -S, -S+1, ..., +S`` (index ``i`` holds ``M = i - S``).
- Energies are in Kelvin (divided by k_B), fields in Tesla, hbar = 1.
- Every anisotropy term carries the spin-dependent prefactor that makes the
  coherent-state potential independent of ``S``::

      H = -(g mu_B / S) B.S
          + [D (Sz^2 - S(S+1)/3) + E (Sx^2 - Sy^2)] / (S(2S-1))
          + H4 / (S(2S-1)(2S-2)(2S-3))

- ``SpinModel.ref_spin`` lets anisotropy constants be quoted the way
  molecular-magnet tables quote them, i.e. as coefficients of the bare
  operators at a reference spin ``R``.  They are converted to the
  normalized convention by multiplying with ``R(2R-1)`` (second order) and
  ``R(2R-1)(2R-2)(2R-3)`` (fourth order).  With ``ref_spin=None`` the
  constants are taken as already normalized.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (
    ContractViolationError,
    InvalidSpinError,
    PrefactorSingularityError,
)

MU_B = 0.67171  # Bohr magneton / k_B in K/T

ANISOTROPY_FIELDS = ("D", "E", "B40", "B42", "B43", "B44")


def _check_spin(S) -> float:
    twoS = 2 * float(S)
    if not np.isfinite(twoS) or twoS < 0 or abs(twoS - round(twoS)) > 1e-12:
        raise InvalidSpinError(f"spin must be a non-negative half-integer, got {S!r}")
    return round(twoS) / 2


def second_order_prefactor(S: float) -> float:
    """``1/(S(2S-1))``; ``inf`` where it diverges."""
    den = S * (2 * S - 1)
    return math.inf if den == 0 else 1.0 / den


def fourth_order_prefactor(S: float) -> float:
    """``1/(S(2S-1)(2S-2)(2S-3))``; ``inf`` where it diverges."""
    den = S * (2 * S - 1) * (2 * S - 2) * (2 * S - 3)
    return math.inf if den == 0 else 1.0 / den


@dataclass(frozen=True)
class SpinModel:
    """Parameters of the spin Hamiltonian.

    Attributes
    ----------
    S : spin quantum number (integer or half-integer).
    D, E : second-order anisotropy constants (K).
    B40, B42, B43, B44 : fourth-order anisotropy constants (K).
    B : field vector ``(Bx, By, Bz)`` in Tesla.
    g : Lande factor.
    ref_spin : spin at which the anisotropy constants are quoted as bare
        operator coefficients; ``None`` means they are already normalized.
    """

    S: float
    D: float = 0.0
    E: float = 0.0
    B40: float = 0.0
    B42: float = 0.0
    B43: float = 0.0
    B44: float = 0.0
    B: tuple = (0.0, 0.0, 0.0)
    g: float = 2.0
    ref_spin: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "S", _check_spin(self.S))
        B = tuple(float(b) for b in self.B)
        if len(B) != 3:
            raise ValueError("field must be a 3-vector")
        object.__setattr__(self, "B", B)
        for name in ANISOTROPY_FIELDS + ("g",):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if not all(np.isfinite(B)):
            raise ValueError("field components must be finite")
        if self.ref_spin is not None:
            object.__setattr__(self, "ref_spin", _check_spin(self.ref_spin))

    @property
    def dim(self) -> int:
        return int(round(2 * self.S)) + 1

    @property
    def Bx(self) -> float:
        return self.B[0]

    @property
    def By(self) -> float:
        return self.B[1]

    @property
    def Bz(self) -> float:
        return self.B[2]

    def replace(self, **changes) -> "SpinModel":
        return dataclasses.replace(self, **changes)

    def with_field(self, Bx=None, By=None, Bz=None) -> "SpinModel":
        bx, by, bz = self.B
        B = (bx if Bx is None else Bx, by if By is None else By, bz if Bz is None else Bz)
        return dataclasses.replace(self, B=B)

    def normalized(self) -> "SpinModel":
        """Same physics with anisotropy constants in the normalized convention."""
        if self.ref_spin is None:
            return self
        R = self.ref_spin
        k2 = R * (2 * R - 1)
        k4 = R * (2 * R - 1) * (2 * R - 2) * (2 * R - 3)
        if (self.D or self.E) and k2 == 0:
            raise PrefactorSingularityError(f"second-order constants cannot be quoted at spin {R}")
        if any((self.B40, self.B42, self.B43, self.B44)) and k4 == 0:
            raise PrefactorSingularityError(f"fourth-order constants cannot be quoted at spin {R}")
        return dataclasses.replace(
            self,
            D=self.D * k2,
            E=self.E * k2,
            B40=self.B40 * k4,
            B42=self.B42 * k4,
            B43=self.B43 * k4,
            B44=self.B44 * k4,
            ref_spin=None,
        )

    def at_spin(self, S: float) -> "SpinModel":
        """Change the spin while keeping the semiclassical potential fixed."""
        return dataclasses.replace(self.normalized(), S=S)


@dataclass(frozen=True)
class OperatorSet:
    """Dense spin matrices in the ``M = -S..S`` basis."""

    S: float
    sz: np.ndarray
    sp: np.ndarray
    sm: np.ndarray
    sx: np.ndarray
    sy: np.ndarray

    @property
    def dim(self) -> int:
        return self.sz.shape[0]

    @property
    def projections(self) -> np.ndarray:
        return np.arange(self.dim) - self.S

    @property
    def identity(self) -> np.ndarray:
        return np.eye(self.dim, dtype=complex)


def build_operators(S) -> OperatorSet:
    """Angular-momentum matrices for spin ``S``."""
    S = _check_spin(S)
    m = np.arange(-S, S + 1)
    ladder = np.sqrt(S * (S + 1) - m[:-1] * (m[:-1] + 1))
    sz = np.diag(m).astype(complex)
    sp = np.diag(ladder, -1).astype(complex)  # <M+1|S+|M> sits below the diagonal
    sm = sp.conj().T
    sx = (sp + sm) / 2
    sy = (sp - sm) / 2j
    return OperatorSet(S, sz, sp, sm, sx, sy)


def fourth_order_operator(ops: OperatorSet, B40=0.0, B42=0.0, B43=0.0, B44=0.0) -> np.ndarray:
    """Bare fourth-order combination ``sum_k B4k O4k`` (no spin prefactor)."""
    S = ops.S
    s = S * (S + 1)
    I = ops.identity
    sz, sp, sm = ops.sz, ops.sp, ops.sm
    sz2 = sz @ sz
    H4 = np.zeros_like(I)
    if B40:
        H4 += B40 * (35 * sz2 @ sz2 + (25 - 30 * s) * sz2 + (3 * s * s - 6 * s) * I)
    if B42:
        p2 = sp @ sp + sm @ sm
        a = 7 * sz2 - (s + 5) * I
        H4 += B42 / 4 * (a @ p2 + p2 @ a)
    if B43:
        p3 = sp @ sp @ sp + sm @ sm @ sm
        H4 += B43 / 4 * (sz @ p3 + p3 @ sz)
    if B44:
        sp2 = sp @ sp
        sm2 = sm @ sm
        H4 += B44 / 2 * (sp2 @ sp2 + sm2 @ sm2)
    return H4


def build_hamiltonian(model: SpinModel, ops: Optional[OperatorSet] = None) -> np.ndarray:
    """Hamiltonian matrix of ``model`` in Kelvin."""
    m = model.normalized()
    S = m.S
    if ops is None:
        ops = build_operators(S)
    p2 = second_order_prefactor(S)
    p4 = fourth_order_prefactor(S)
    if (m.D or m.E) and math.isinf(p2):
        raise PrefactorSingularityError(f"second-order terms need S >= 1, got S={S}")
    if any((m.B40, m.B42, m.B43, m.B44)) and math.isinf(p4):
        raise PrefactorSingularityError(f"fourth-order terms need S >= 2, got S={S}")

    Bx, By, Bz = m.B
    H = -(m.g * MU_B / S) * (Bx * ops.sx + By * ops.sy + Bz * ops.sz) if S > 0 else np.zeros_like(ops.sz)
    if m.D or m.E:
        sz2 = ops.sz @ ops.sz
        H = H + p2 * (
            m.D * (sz2 - S * (S + 1) / 3 * ops.identity)
            + m.E * (ops.sx @ ops.sx - ops.sy @ ops.sy)
        )
    if any((m.B40, m.B42, m.B43, m.B44)):
        H = H + p4 * fourth_order_operator(ops, m.B40, m.B42, m.B43, m.B44)
    # exact hermiticity; products of ladder matrices leave ~1e-15 asymmetry
    return (H + H.conj().T) / 2


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues and eigenvector coefficients.

    ``coefficients[k, i]`` is ``c_{k,M}`` with ``M = i - S``: rows are
    eigenstates, columns the ``|M>`` basis.
    """

    S: float
    energies: np.ndarray
    coefficients: np.ndarray

    @property
    def dim(self) -> int:
        return self.energies.shape[0]

    @property
    def vectors(self) -> np.ndarray:
        """Eigenvectors as columns."""
        return self.coefficients.T

    @property
    def projections(self) -> np.ndarray:
        return np.arange(self.dim) - self.S

    def weights(self) -> np.ndarray:
        return np.abs(self.coefficients) ** 2

    def matrix_elements(self, op: np.ndarray) -> np.ndarray:
        """``<psi_a|op|psi_b>`` for all eigenstate pairs."""
        V = self.vectors
        return V.conj().T @ op @ V

    def expectation(self, op: np.ndarray) -> np.ndarray:
        return np.real(np.einsum("ki,ij,kj->k", self.coefficients.conj(), op, self.coefficients))


def _off_norm(A: np.ndarray) -> float:
    return float(np.linalg.norm(A - np.diag(np.diag(A))))


def _jacobi_symmetric(A: np.ndarray, tol: float, max_sweeps: int):
    A = np.array(A, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    scale = np.linalg.norm(A)
    if scale == 0.0:
        return np.zeros(n), V
    off = _off_norm(A)
    for _ in range(max_sweeps):
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap = A[:, p].copy()
                A[:, p] = c * ap - s * A[:, q]
                A[:, q] = s * ap + c * A[:, q]
                ap = A[p, :].copy()
                A[p, :] = c * ap - s * A[q, :]
                A[q, :] = s * ap + c * A[q, :]
                vp = V[:, p].copy()
                V[:, p] = c * vp - s * V[:, q]
                V[:, q] = s * vp + c * V[:, q]
        previous, off = off, _off_norm(A)
        if off >= previous:
            # rounding floor reached; the threshold is below what n*eps allows
            break
    if off > 1e-10 * scale:
        raise ArithmeticError("Jacobi iteration did not converge")
    return np.diag(A).copy(), V


def jacobi_eigh(H: np.ndarray, tol: float = 1e-14, max_sweeps: int = 50):
    """Cyclic Jacobi eigensolver for a Hermitian matrix.

    Works on the real symmetric embedding ``[[Re H, -Im H], [Im H, Re H]]``,
    whose spectrum is that of ``H`` with every eigenvalue doubled.  Returns
    ascending eigenvalues and eigenvectors as columns, like ``numpy.linalg.eigh``.
    """
    H = np.asarray(H, dtype=complex)
    n = H.shape[0]
    A, B = H.real, H.imag
    M = np.block([[A, -B], [B, A]])
    w, W = _jacobi_symmetric(M, tol, max_sweeps)
    order = np.argsort(w, kind="stable")
    w, W = w[order], W[:, order]

    gap_tol = 1e-9 * max(np.max(np.abs(w)), 1e-300)
    # split into clusters of (numerically) equal eigenvalues; each has even size
    bounds = [0]
    for i in range(1, 2 * n):
        if w[i] - w[i - 1] > gap_tol and (i - bounds[-1]) % 2 == 0:
            bounds.append(i)
    bounds.append(2 * n)

    vecs = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        Z = W[:n, lo:hi] + 1j * W[n:, lo:hi]
        U, _, _ = np.linalg.svd(Z, full_matrices=False)
        vecs.append(U[:, : (hi - lo) // 2])
    V = np.concatenate(vecs, axis=1)
    # Rayleigh quotients give the individual values inside a merged cluster
    vals = np.real(np.einsum("ik,ij,jk->k", V.conj(), H, V))
    order = np.argsort(vals, kind="stable")
    return vals[order], V[:, order]


def _fix_phase(V: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(V), axis=0)
    lead = V[idx, np.arange(V.shape[1])]
    return V * (np.abs(lead) / lead)[None, :]


def diagonalize(H: np.ndarray, S=None, method: str = "lapack", hermitian_tol: float = 1e-10) -> EigenSystem:
    """Diagonalize a Hermitian Hamiltonian.

    Eigenvectors are phase-fixed so that their largest component is real and
    positive; exactly degenerate levels are ordered by the index of their
    dominant basis state.  ``method`` is ``"lapack"`` (numpy) or ``"jacobi"``.
    """
    H = np.asarray(H, dtype=complex)
    n = H.shape[0]
    if H.shape != (n, n):
        raise ContractViolationError("Hamiltonian must be square")
    scale = max(np.max(np.abs(H)), 1.0) if n else 1.0
    if np.max(np.abs(H - H.conj().T), initial=0.0) > hermitian_tol * scale:
        raise ContractViolationError("matrix is not Hermitian within tolerance")
    if S is None:
        S = (n - 1) / 2
    if method == "lapack":
        w, V = np.linalg.eigh((H + H.conj().T) / 2)
    elif method == "jacobi":
        w, V = jacobi_eigh(H)
    else:
        raise ValueError(f"unknown method {method!r}")
    V = _fix_phase(V)

    dominant = np.argmax(np.abs(V) ** 2, axis=0)
    tie = 1e-12 * max(np.max(np.abs(w), initial=0.0), 1.0)
    order = np.arange(n)
    start = 0
    for i in range(1, n + 1):
        if i == n or w[i] - w[i - 1] > tie:
            if i - start > 1:
                block = order[start:i]
                order[start:i] = block[np.argsort(dominant[block], kind="stable")]
            start = i
    return EigenSystem(float(S), w[order], np.ascontiguousarray(V[:, order].T))


def eigensystem(model: SpinModel, method: str = "lapack") -> EigenSystem:
    """Shortcut for ``diagonalize(build_hamiltonian(model))``."""
    return diagonalize(build_hamiltonian(model), S=model.S, method=method)


class StateLabels(NamedTuple):
    """Dominant spin projection per eigenstate.

    ``m[k]`` is the label, ``weight[k]`` the probability ``|c_{k,m}|^2`` of
    that projection and ``unreliable[k]`` flags ``weight < 0.5``.
    """

    m: np.ndarray
    weight: np.ndarray
    unreliable: np.ndarray

    @property
    def index(self) -> np.ndarray:
        """Basis index (``m + S``) of each label."""
        S = (len(self.m) - 1) / 2
        return np.rint(self.m + S).astype(int)


TIE_BIAS = 1e-6  # weight of the continuity preference in tied assignments


def assign_labels(eig: EigenSystem, unique: bool = True, previous: Optional[tuple] = None) -> StateLabels:
    """Label eigenstates by their dominant spin projection.

    The label is ``argmax_M |c_{k,M}|^2``.  When two states share an argmax
    (strong mixing at an avoided crossing) and ``unique`` is set, labels are
    re-derived from the assignment that maximizes the total weight, so every
    projection is used exactly once.

    ``previous`` is an optional ``(coefficients, labels)`` pair from a nearby
    field.  Overlaps with it add a small preference for keeping each state's
    label, which only decides assignments whose weights tie, e.g. an exactly
    symmetric tunnel doublet.
    """
    W = eig.weights()
    idx = np.argmax(W, axis=1)
    if previous is not None:
        prev_c, prev_m = previous
        overlap = np.abs(eig.coefficients.conj() @ prev_c.T) ** 2  # [new, old]
        keep = np.zeros_like(W)
        keep[:, np.rint(np.asarray(prev_m) + eig.S).astype(int)] = overlap
        rows, cols = linear_sum_assignment(-(W + TIE_BIAS * keep))
        idx = cols[np.argsort(rows)]
    elif unique and len(np.unique(idx)) < len(idx):
        rows, cols = linear_sum_assignment(-W)
        idx = cols[np.argsort(rows)]
    weight = W[np.arange(eig.dim), idx]
    return StateLabels(eig.projections[idx], weight, weight < 0.5)


def label_permutation(labels: StateLabels) -> np.ndarray:
    """Eigen-index for each projection in ``M = -S..S`` order.

    Requires unique labels.
    """
    perm = np.empty(len(labels.m), dtype=int)
    perm[labels.index] = np.arange(len(labels.m))
    return perm
