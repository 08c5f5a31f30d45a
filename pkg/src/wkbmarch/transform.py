"""Analytic preprocessing: wave <-> U <-> Z conversions.

U(x) = (a^{1/4} w,  eps (a^{1/4} w)' / sqrt(a))^T turns the second-order
equation into a first-order system; the rotation Z = e^{-i Phi/eps} P U then
strips the dominant oscillation.  The solver marches Z only; U and the wave
are reconstructed at grid nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coeffs import CoefficientModel

__all__ = [
    "P_MATRIX",
    "P_INV",
    "StateVec",
    "PhaseRotation",
    "u_initial",
    "z_from_u",
    "u_from_z",
    "wave_from_u",
]

_SQRT2 = np.sqrt(2.0)

P_MATRIX = np.array([[1j, 1.0], [1.0, 1j]]) / _SQRT2
P_INV = np.array([[-1j, 1.0], [1.0, -1j]]) / _SQRT2


@dataclass(frozen=True)
class StateVec:
    """Complex 2-vector tagged with its representation (U or Z)."""

    vec: np.ndarray
    rep: str  # "U" | "Z"

    def __post_init__(self):
        object.__setattr__(self, "vec", np.asarray(self.vec, dtype=complex).reshape(2))
        if self.rep not in ("U", "Z"):
            raise ValueError(f"unknown representation tag {self.rep!r}")

    @classmethod
    def u(cls, c1, c2) -> "StateVec":
        return cls(np.array([c1, c2], dtype=complex), "U")

    @classmethod
    def z(cls, c1, c2) -> "StateVec":
        return cls(np.array([c1, c2], dtype=complex), "Z")

    def expect(self, rep: str) -> np.ndarray:
        if self.rep != rep:
            raise ValueError(f"expected a {rep}-state, got {self.rep}")
        return self.vec


@dataclass(frozen=True)
class PhaseRotation:
    """diag(e^{-i phi/eps}, e^{+i phi/eps}) (forward) or its conjugate."""

    phi: float
    eps: float
    direction: str = "forward"  # forward: U->Z; backward: Z->U

    def diagonal(self) -> np.ndarray:
        w = np.exp(-1j * self.phi / self.eps)
        if self.direction == "backward":
            w = np.conj(w)
        return np.array([w, np.conj(w)])

    def apply(self, vec: np.ndarray) -> np.ndarray:
        return self.diagonal() * vec


def u_initial(phi0: complex, phi1: complex, model: CoefficientModel, eps: float) -> StateVec:
    """U(0) from the wave initial data w(0) = phi0, eps w'(0) = phi1.

    Expanding the product rule in the U definition at x = 0:
        U1 = a^{1/4} phi0
        U2 = a^{-1/4} phi1 + (eps/4) a^{-5/4} a' phi0
    """
    a0 = float(model.eval(np.array([0.0]), 0)[0])
    a1 = float(model.eval(np.array([0.0]), 1)[0])
    u1 = a0 ** 0.25 * phi0
    u2 = a0 ** (-0.25) * phi1 + 0.25 * eps * a0 ** (-1.25) * a1 * phi0
    return StateVec.u(u1, u2)


def z_from_u(u: StateVec, phase_value: float, eps: float) -> StateVec:
    """Z = e^{-i Phi/eps} P U at accumulated phase phi(x) = phase_value."""
    vec = u.expect("U")
    rot = PhaseRotation(phase_value, eps, "forward")
    return StateVec(rot.apply(P_MATRIX @ vec), "Z")


def u_from_z(z: StateVec, phase_value: float, eps: float) -> StateVec:
    """U = P^{-1} e^{+i Phi/eps} Z; exact inverse of z_from_u."""
    vec = z.expect("Z")
    rot = PhaseRotation(phase_value, eps, "backward")
    return StateVec(P_INV @ rot.apply(vec), "U")


def wave_from_u(u: StateVec, model: CoefficientModel, x: float, eps: float):
    """(w, eps w') at x, inverting the U definition:

        w      = a^{-1/4} U1
        eps w' = a^{1/4} U2 - (eps/4) a' a^{-5/4} U1
    """
    vec = u.expect("U")
    ax = float(model.eval(np.array([x]), 0)[0])
    ax1 = float(model.eval(np.array([x]), 1)[0])
    w = ax ** (-0.25) * vec[0]
    eps_wp = ax ** 0.25 * vec[1] - 0.25 * eps * ax1 * ax ** (-1.25) * vec[0]
    return w, eps_wp
