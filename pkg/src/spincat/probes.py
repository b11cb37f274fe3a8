"""Fidelity, fidelity susceptibility and Bloch-sphere maps of eigenstates."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .errors import DegenerateLevelError
from .semiclassic import coherent_amplitudes
from .spinops import MU_B, EigenSystem, SpinModel, build_operators, eigensystem

DEGENERACY_GUARD = 1e-12  # K


@dataclass(frozen=True)
class FidelitySample:
    """Fidelity of state ``k`` between fields ``B - dB`` and ``B + dB``."""

    B: float
    dB: float
    F: float
    k: int


def _shifted(model: SpinModel, b: float, axis: int) -> SpinModel:
    B = list(model.B)
    B[axis] = b
    return model.replace(B=tuple(B))


_AXES = {"x": 0, "y": 1, "z": 2}


def fidelity(model: SpinModel, k: int, dB: float, axis: str = "z") -> FidelitySample:
    """``F = |<psi_k(B - dB)|psi_k(B + dB)>|^2`` around the field of ``model``.

    States are paired by energy index, so ``F`` drops where state ``k``
    changes character through an avoided crossing.
    """
    if not dB > 0:
        raise ValueError("dB must be positive")
    ax = _AXES[axis]
    b = model.B[ax]
    lo = eigensystem(_shifted(model, b - dB, ax))
    hi = eigensystem(_shifted(model, b + dB, ax))
    if not 0 <= k < lo.dim:
        raise IndexError(f"state index {k} out of range")
    F = abs(np.vdot(lo.coefficients[k], hi.coefficients[k])) ** 2
    return FidelitySample(float(b), float(dB), float(F), int(k))


def fidelity_scan(model: SpinModel, k: int, dB: float, values: Sequence[float], axis: str = "z") -> np.ndarray:
    """Fidelity of state ``k`` at each field value along ``axis``."""
    ax = _AXES[axis]
    return np.array([fidelity(_shifted(model, b, ax), k, dB, axis).F for b in values])


def fidelity_susceptibility(eig: EigenSystem, k: int, guard: float = DEGENERACY_GUARD) -> float:
    """``chi = 2 sum_{m != k} |<psi_m|Sz|psi_k>|^2 / (E_m - E_k)^2``.

    Uses the bare ``Sz`` operator; see :func:`curvature_ratio` for the
    relation to the field derivative of the fidelity.

    Raises
    ------
    DegenerateLevelError
        if another level lies within ``guard`` of ``E_k``.
    """
    if not 0 <= k < eig.dim:
        raise IndexError(f"state index {k} out of range")
    sz = build_operators(eig.S).sz
    col = eig.matrix_elements(sz)[:, k]
    gaps = eig.energies - eig.energies[k]
    others = np.arange(eig.dim) != k
    close = others & (np.abs(gaps) < guard)
    if close.any():
        m = int(np.nonzero(close)[0][0])
        raise DegenerateLevelError(f"levels {k} and {m} are degenerate within {guard:g} K", (k, m))
    return float(2.0 * np.sum(np.abs(col[others]) ** 2 / gaps[others] ** 2))


def susceptibility_scan(model: SpinModel, k: int, values: Sequence[float], axis: str = "z") -> np.ndarray:
    """Fidelity susceptibility of state ``k`` along a field axis."""
    ax = _AXES[axis]
    return np.array([fidelity_susceptibility(eigensystem(_shifted(model, b, ax)), k) for b in values])


def curvature_ratio(model: SpinModel, k: int, dB: float = 1e-4) -> float:
    """``[(1 - F) / (2 dB)^2] / chi`` at the field of ``model``.

    With ``dH/dBz = -(g muB / S) Sz`` perturbation theory predicts
    ``(g muB / S)^2 / 2``; the measured value is returned so the two
    conventions can be compared.
    """
    F = fidelity(model, k, dB).F
    chi = fidelity_susceptibility(eigensystem(model), k)
    return (1.0 - F) / (2 * dB) ** 2 / chi


def expected_curvature_ratio(model: SpinModel) -> float:
    """Perturbative value of :func:`curvature_ratio`."""
    return 0.5 * (model.g * MU_B / model.S) ** 2


# --------------------------------------------------------------------------
# Bloch sphere
# --------------------------------------------------------------------------


def bloch_amplitude(eig: EigenSystem, k: int, theta, phi):
    """``|<psi_k|zeta(theta, phi)>|^2`` for scalar or array angles."""
    z = coherent_amplitudes(eig.S, theta, phi)
    w = np.abs(z @ eig.coefficients[k].conj()) ** 2
    return w if np.ndim(w) else float(w)


@dataclass(frozen=True)
class Lobe:
    """Connected region of a Bloch map above a threshold."""

    theta: float
    phi: float
    mass: float

    @property
    def direction(self) -> np.ndarray:
        t, p = self.theta, self.phi
        return np.array([math.sin(t) * math.cos(p), math.sin(t) * math.sin(p), -math.cos(t)])


@dataclass(frozen=True)
class BlochGrid:
    """Squared coherent-state amplitudes of one eigenstate.

    ``weights[i, j]`` belongs to ``(theta[i], phi[j])``.  Nodes are
    Gauss-Legendre in ``cos(theta)`` times uniform in ``phi``;
    ``quad[i, j]`` is the solid-angle weight of each node.
    """

    S: float
    k: int
    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray
    quad: np.ndarray
    rule: str = "gauss-legendre(cos theta) x uniform(phi)"

    def normalization(self) -> float:
        """``(2S+1)/(4 pi)`` times the quadrature of the weights."""
        return float((2 * self.S + 1) / (4 * math.pi) * np.sum(self.weights * self.quad))

    def mass(self, mask: np.ndarray) -> float:
        """Normalized probability carried by the nodes in ``mask``."""
        w = self.weights * self.quad
        return float(np.sum(w[mask]) / np.sum(w))

    def cap_mass(self, theta_min: float) -> float:
        """Probability in the cap ``theta > theta_min``."""
        return self.mass(np.broadcast_to(self.theta[:, None] > theta_min, self.weights.shape))

    def lobes(self, level: float = 0.1, min_mass: float = 0.01) -> List[Lobe]:
        """Regions where the weight exceeds ``level`` times its maximum.

        Connectivity wraps in ``phi`` and joins each polar ring into one
        region.  Regions carrying less than ``min_mass`` are dropped;
        the rest are sorted by mass.
        """
        mask = self.weights >= level * self.weights.max()
        lab, n = ndimage.label(mask, structure=np.ones((3, 3)))
        parent = list(range(n + 1))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        def union(a, b):
            if a and b:
                parent[find(a)] = find(b)

        for i in range(lab.shape[0]):
            for d in (-1, 0, 1):
                if 0 <= i + d < lab.shape[0]:
                    union(lab[i, -1], lab[i + d, 0])
        for i in (0, lab.shape[0] - 1):
            row = [v for v in lab[i] if v]
            for v in row[1:]:
                union(v, row[0])
        roots = np.array([find(v) for v in range(n + 1)])
        lab = roots[lab]
        w = self.weights * self.quad
        total = w.sum()
        out = []
        T, P = np.meshgrid(self.theta, self.phi, indexing="ij")
        unit = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), -np.cos(T)], axis=-1)
        for r in np.unique(lab[lab > 0]):
            sel = lab == r
            m = w[sel].sum() / total
            if m < min_mass:
                continue
            v = (unit[sel] * w[sel][:, None]).sum(axis=0)
            v /= np.linalg.norm(v)
            out.append(Lobe(float(math.acos(np.clip(-v[2], -1, 1))), float(math.atan2(v[1], v[0])), float(m)))
        return sorted(out, key=lambda lobe: -lobe.mass)


def bloch_grid(eig: EigenSystem, k: int, resolution: Tuple[int, int] = (64, 128)) -> BlochGrid:
    """Tabulate :func:`bloch_amplitude` on a product quadrature grid.

    The rule integrates polynomials in ``cos(theta)`` up to degree
    ``2 n_theta - 1`` and Fourier modes below ``n_phi`` exactly, so the
    normalization is exact once ``n_theta > S`` and ``n_phi > 2S``.
    """
    n_theta, n_phi = resolution
    if n_theta < 32 or n_phi < 64:
        raise ValueError("resolution must be at least 32 x 64")
    x, wx = np.polynomial.legendre.leggauss(n_theta)
    theta = np.arccos(-x)  # ascending; the weights are symmetric
    phi = np.arange(n_phi) * (2 * math.pi / n_phi)
    weights = bloch_amplitude(eig, k, theta[:, None], phi[None, :])
    quad = np.outer(wx, np.full(n_phi, 2 * math.pi / n_phi))
    return BlochGrid(eig.S, int(k), theta, phi, weights, quad)
