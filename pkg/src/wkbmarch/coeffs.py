"""Coefficient function a(x) and the derived oscillation coefficients.

Everything the schemes need about the problem coefficient lives here:

* ``CoefficientModel`` -- value plus first M derivatives of a(x) at a point,
  with a(x) >= a_floor > 0 on [0, 1];
* ``b(x) = -(1/2) a^{-1/4} (a^{-1/4})''`` and its derivatives;
* the recursive chain ``b_0 = b/(2 phi')``, ``b_p = b_{p-1}'/(2 phi')`` with
  ``phi' = sqrt(a) - eps^2 b``;
* the ten auxiliary quotients (c0, c1, d0, d1, e0, f0, f1, g0, kappa0, l0)
  used by the third-order correction term.

All derivatives are propagated exactly through jet arithmetic from the model
derivatives; nothing is ever finite-differenced.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DerivativeOrderError, DomainError, EpsilonTooLargeError
from .jets import Jet

__all__ = [
    "CoefficientModel",
    "ConstantModel",
    "AffineSquaredModel",
    "WkbAux",
    "Problem",
    "get_problem",
    "eval_b",
    "b_jet",
    "eval_b_chain",
    "eval_q3_aux",
    "chain_nodes",
    "ChainValues",
]

DOMAIN = (0.0, 1.0)
_DOMAIN_SLACK = 1e-12


def _check_domain(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(x < DOMAIN[0] - _DOMAIN_SLACK) or np.any(x > DOMAIN[1] + _DOMAIN_SLACK):
        bad = x[(x < DOMAIN[0] - _DOMAIN_SLACK) | (x > DOMAIN[1] + _DOMAIN_SLACK)]
        raise DomainError(f"evaluation point(s) {bad!r} outside [0, 1]")
    return x


class CoefficientModel:
    """Interface: k-th derivative of a(x) at points of [0, 1].

    ``max_order`` is the largest usable derivative order (None = unlimited);
    ``a_floor`` is a positive lower bound for a on [0, 1].
    """

    max_order: Optional[int] = None
    a_floor: float = 0.0
    name: str = "model"

    def eval(self, x, k: int = 0):
        """k-th derivative of a at x (vectorized over x)."""
        raise NotImplementedError

    def jet(self, x, order: int) -> Jet:
        """Taylor jet of a about x; default builds it from eval()."""
        x = self.require(x, order)
        coef = np.zeros((order + 1,) + x.shape)
        fact = 1.0
        for k in range(order + 1):
            if k > 0:
                fact *= k
            coef[k] = self.eval(x, k) / fact
        return Jet(coef)

    def require(self, x, order: int) -> np.ndarray:
        x = _check_domain(x)
        if self.max_order is not None and order > self.max_order:
            raise DerivativeOrderError(
                f"model {self.name!r} provides derivatives up to order "
                f"{self.max_order}, order {order} requested"
            )
        return x


class ConstantModel(CoefficientModel):
    """a(x) = a0: every derived oscillation coefficient vanishes exactly."""

    def __init__(self, a0: float = 1.0):
        if a0 <= 0:
            raise ConfigError(f"constant coefficient must be positive, got {a0}")
        self.a0 = float(a0)
        self.a_floor = float(a0)
        self.name = f"constant({a0:g})"

    def eval(self, x, k: int = 0):
        x = self.require(x, k)
        if k == 0:
            return np.full_like(x, self.a0)
        return np.zeros_like(x)


class AffineSquaredModel(CoefficientModel):
    """a(x) = (x + 1/2)^2, the standard oscillatory test coefficient."""

    a_floor = 0.25
    name = "affine-squared"

    def eval(self, x, k: int = 0):
        x = self.require(x, k)
        if k == 0:
            return (x + 0.5) ** 2
        if k == 1:
            return 2.0 * (x + 0.5)
        if k == 2:
            return np.full_like(x, 2.0)
        return np.zeros_like(x)

    def jet(self, x, order: int) -> Jet:
        x = self.require(x, order)
        coef = np.zeros((order + 1,) + x.shape)
        coef[0] = (x + 0.5) ** 2
        if order >= 1:
            coef[1] = 2.0 * (x + 0.5)
        if order >= 2:
            coef[2] = 1.0
        return Jet(coef)


# ---------------------------------------------------------------------------
# b(x) and the coefficient chains
# ---------------------------------------------------------------------------


def b_jet(model: CoefficientModel, x, order: int) -> Jet:
    """Jet of b = -(1/2) a^{-1/4} (a^{-1/4})'' ; needs a-derivatives to order+2."""
    ja = model.jet(x, order + 2)
    g = ja.pow(-0.25)
    return -0.5 * (g.truncated(order) * g.deriv().deriv())


def eval_b(model: CoefficientModel, x, k: int = 0):
    """k-th derivative of b at x, by exact differentiation of its closed form."""
    if k < 0:
        raise ValueError("derivative order must be >= 0")
    return b_jet(model, x, k).derivative(k)


def phi_prime_jet(model: CoefficientModel, eps: float, x, order: int) -> Jet:
    """Jet of phi' = sqrt(a) - eps^2 b; needs a-derivatives to order+2."""
    ja = model.jet(x, order + 2)
    g = ja.pow(-0.25)
    b = -0.5 * (g.truncated(order) * g.deriv().deriv())
    return ja.sqrt().truncated(order) - (eps * eps) * b


@dataclass(frozen=True)
class ChainValues:
    """Vectorized chain/auxiliary values at a batch of points."""

    x: np.ndarray
    eps: float
    b: np.ndarray            # b(x)
    chain: np.ndarray        # rows b_0 .. b_pmax
    phi_prime: np.ndarray
    aux: Optional[dict] = None  # the ten third-order auxiliaries


def chain_nodes(
    model: CoefficientModel,
    eps: float,
    x,
    p_max: int,
    with_aux: bool = False,
) -> ChainValues:
    """Evaluate b, b_0..b_pmax (and optionally the auxiliaries) at points x.

    The whole pipeline runs on jets of a about each point, so one call gives
    exact chain values for any number of points at once.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    order = p_max + 2
    ja = model.jet(x, order)

    g = ja.pow(-0.25)
    b = -0.5 * (g.truncated(p_max) * g.deriv().deriv())  # order p_max
    phip = ja.sqrt().truncated(p_max) - (eps * eps) * b
    if np.any(phip.value <= 0.0):
        bad = x[phip.value <= 0.0]
        raise EpsilonTooLargeError(
            f"phi'(x) = sqrt(a) - eps^2 b is not positive at x={bad!r} "
            f"(eps={eps:g}); outside the admissible eps range"
        )
    den = 2.0 * phip

    chain_jets = [b / den]
    for _ in range(p_max):
        chain_jets.append(chain_jets[-1].deriv() / den)
    chain = np.stack([cj.value for cj in chain_jets])

    aux = None
    if with_aux:
        if p_max < 3:
            raise ValueError("auxiliary bundle needs the chain to depth >= 3")
        b0, b1 = chain_jets[0], chain_jets[1]
        c0 = (b * b * b0) / den
        c1 = c0.deriv() / den
        d0 = c0 / den
        d1 = d0.deriv() / den
        e0 = c1 / den
        f0 = b0 / den
        f1 = f0.deriv() / den
        g0 = b1 / den
        kappa0 = (b * b1) / den
        l0 = (b * b0 * b1) / den
        aux = {
            "c0": c0.value,
            "c1": c1.value,
            "d0": d0.value,
            "d1": d1.value,
            "e0": e0.value,
            "f0": f0.value,
            "f1": f1.value,
            "g0": g0.value,
            "kappa0": kappa0.value,
            "l0": l0.value,
        }

    return ChainValues(x=x, eps=eps, b=b.value, chain=chain, phi_prime=phip.value, aux=aux)


def eval_b_chain(model: CoefficientModel, eps: float, x: float, p_max: int) -> np.ndarray:
    """Values b_0(x) .. b_pmax(x) of the recursive chain at a single point."""
    if p_max > 5:
        raise ValueError("chain is only needed (and tested) to depth 5")
    vals = chain_nodes(model, eps, np.asarray([x], dtype=float), p_max)
    return vals.chain[:, 0].copy()


@dataclass(frozen=True)
class WkbAux:
    """Chain and auxiliary coefficient values at one point, for one eps."""

    x: float
    eps: float
    b: float
    b_chain: np.ndarray  # b_0 .. b_5
    c0: float
    c1: float
    d0: float
    d1: float
    e0: float
    f0: float
    f1: float
    g0: float
    kappa0: float
    l0: float

    def as_dict(self) -> dict:
        return {
            "c0": self.c0, "c1": self.c1, "d0": self.d0, "d1": self.d1,
            "e0": self.e0, "f0": self.f0, "f1": self.f1, "g0": self.g0,
            "kappa0": self.kappa0, "l0": self.l0,
        }


def eval_q3_aux(model: CoefficientModel, eps: float, x: float) -> WkbAux:
    """The ten auxiliary quotients plus the b-chain at one point.

    Needs a-derivatives to order 7 (the chain runs to b_5).
    """
    vals = chain_nodes(model, eps, np.asarray([x], dtype=float), 5, with_aux=True)
    aux = {k: float(v[0]) for k, v in vals.aux.items()}
    return WkbAux(
        x=float(x),
        eps=float(eps),
        b=float(vals.b[0]),
        b_chain=vals.chain[:, 0].copy(),
        **aux,
    )


# ---------------------------------------------------------------------------
# Problem registry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Problem:
    """A coefficient model bundled with an optional closed-form phase.

    ``phase_antiderivative(eps, x)`` returns int_0^x (sqrt(a) - eps^2 b) dtau
    when the problem has an explicit phase; None means quadrature only.
    """

    name: str
    model: CoefficientModel
    phase_antiderivative: Optional[Callable] = None
    description: str = ""


def _affine_squared_phase(eps: float, x):
    x = np.asarray(x, dtype=float)
    return x * x / 2.0 + x / 2.0 - eps * eps * (3.0 / 16.0) * ((x + 0.5) ** (-2) - 4.0)


_CONSTANT_RE = re.compile(r"^constant(?:\(\s*([^)]+)\s*\))?$")


def get_problem(spec: str) -> Problem:
    """Look up a problem by name.

    Built-ins: ``constant`` / ``constant(a0)`` and ``affine-squared``.
    User coefficients: ``expr:<expression in x>`` (quadrature phase only).
    """
    spec = spec.strip()
    m = _CONSTANT_RE.match(spec)
    if m:
        a0 = 1.0
        if m.group(1) is not None:
            try:
                a0 = float(m.group(1))
            except ValueError:
                raise ConfigError(f"bad constant coefficient value {m.group(1)!r}")
        model = ConstantModel(a0)
        root = math.sqrt(a0)
        return Problem(
            name=model.name,
            model=model,
            phase_antiderivative=lambda eps, x, _r=root: _r * np.asarray(x, dtype=float),
            description=f"a(x) = {a0:g}; exact phase sqrt(a0) x; all corrections vanish",
        )
    if spec == "affine-squared":
        return Problem(
            name="affine-squared",
            model=AffineSquaredModel(),
            phase_antiderivative=_affine_squared_phase,
            description="a(x) = (x + 1/2)^2 with closed-form phase",
        )
    if spec.startswith("expr:"):
        from .expressions import ExpressionModel

        model = ExpressionModel(spec[len("expr:"):])
        return Problem(
            name=model.name,
            model=model,
            phase_antiderivative=None,
            description="user expression; phase by quadrature",
        )
    raise ConfigError(
        f"unknown problem {spec!r}; expected constant, constant(a0), "
        "affine-squared, or expr:<expression>"
    )
