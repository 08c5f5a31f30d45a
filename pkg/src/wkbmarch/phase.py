"""Phase function phi(x) = int_0^x (sqrt(a) - eps^2 b) and its grid table.

Per-cell increments s_n are the primary quantity; the accumulated node
values phi_n are built from them with compensated summation, because the
relative accuracy of both s_n and phi_n matters inside the oscillatory
kernels exp(2i s_n / eps) and exp(2i phi_n / eps).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from . import coeffs
from .coeffs import CoefficientModel
from .errors import ConfigError, EpsilonTooLargeError

__all__ = [
    "PhaseMode",
    "PhaseTable",
    "parse_phase_mode",
    "phi_prime",
    "phi_prime_derivatives",
    "phase_increment",
    "build_phase_table",
]


@dataclass(frozen=True)
class PhaseMode:
    """How phase increments are computed: closed form or per-cell quadrature."""

    kind: str              # "analytic" | "gl"
    nodes: Optional[int]   # Gauss-Legendre points per cell (gl only)
    gamma: float           # effective integration order (inf for analytic)

    def __str__(self):
        return "analytic" if self.kind == "analytic" else f"gl:{self.nodes}"


def parse_phase_mode(spec) -> PhaseMode:
    if isinstance(spec, PhaseMode):
        return spec
    spec = str(spec).strip().lower()
    if spec == "analytic":
        return PhaseMode("analytic", None, math.inf)
    if spec == "gl":
        spec = "gl:6"
    if spec.startswith("gl:"):
        try:
            q = int(spec[3:])
        except ValueError:
            raise ConfigError(f"bad phase mode {spec!r}")
        if q < 1 or q > 64:
            raise ConfigError(f"Gauss-Legendre node count {q} out of range 1..64")
        return PhaseMode("gl", q, 2.0 * q)
    raise ConfigError(f"unknown phase mode {spec!r}; expected 'analytic' or 'gl:<n>'")


@lru_cache(maxsize=None)
def _gl_rule(q: int):
    nodes, weights = np.polynomial.legendre.leggauss(q)
    return nodes, weights


def phi_prime(model: CoefficientModel, eps: float, x):
    """phi'(x) = sqrt(a(x)) - eps^2 b(x), vectorized over x."""
    return coeffs.phi_prime_jet(model, eps, x, 0).value


def phi_prime_derivatives(model: CoefficientModel, eps: float, x, order: int):
    """Jet of phi' at x (derivatives up to ``order``), for the chain."""
    return coeffs.phi_prime_jet(model, eps, x, order)


def _check_positive(values, x, eps):
    values = np.asarray(values)
    if np.any(values <= 0.0):
        bad = np.asarray(x)[values <= 0.0]
        raise EpsilonTooLargeError(
            f"phi' <= 0 at x={bad!r} for eps={eps:g}: phase is not monotone, "
            "the requested eps is outside the admissible range"
        )


def _gl_cell_increments(model, eps, lo, hi, q):
    """Gauss-Legendre increments over an array of cells [lo_i, hi_i]."""
    ref_nodes, ref_weights = _gl_rule(q)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    pts = mid[:, None] + half[:, None] * ref_nodes[None, :]
    vals = phi_prime(model, eps, pts.ravel()).reshape(pts.shape)
    _check_positive(vals, pts, eps)
    return half * (vals @ ref_weights)


def phase_increment(
    model: CoefficientModel,
    eps: float,
    x_a: float,
    x_b: float,
    mode="gl:6",
    antiderivative: Optional[Callable] = None,
) -> float:
    """int_{x_a}^{x_b} phi', computed directly on the cell.

    Analytic mode evaluates the supplied antiderivative at the endpoints;
    quadrature mode applies a fixed Gauss-Legendre rule.  phi' > 0 is
    checked at the evaluation points.
    """
    if not (0.0 <= x_a < x_b <= 1.0 + 1e-12):
        raise ConfigError(f"bad cell [{x_a}, {x_b}]; need 0 <= x_a < x_b <= 1")
    mode = parse_phase_mode(mode)
    if mode.kind == "analytic":
        if antiderivative is None:
            raise ConfigError("analytic phase mode needs a closed-form antiderivative")
        check_pts = np.array([x_a, 0.5 * (x_a + x_b), x_b])
        _check_positive(phi_prime(model, eps, check_pts), check_pts, eps)
        return float(antiderivative(eps, x_b) - antiderivative(eps, x_a))
    inc = _gl_cell_increments(model, eps, np.array([x_a]), np.array([x_b]), mode.nodes)
    return float(inc[0])


def _compensated_cumsum(increments: np.ndarray) -> np.ndarray:
    """Running sums with Neumaier compensation; out[0] = 0."""
    out = np.empty(increments.size + 1)
    out[0] = 0.0
    s = 0.0
    c = 0.0
    for i, v in enumerate(increments):
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
        out[i + 1] = s + c
    return out


@dataclass(frozen=True)
class PhaseTable:
    """Accumulated phase on a uniform grid.

    increments[n] = phi(x_{n+1}) - phi(x_n) as computed per cell; phi holds
    the compensated running sums, phi[0] = 0.
    """

    grid: np.ndarray
    phi: np.ndarray
    increments: np.ndarray
    mode: PhaseMode
    eps: float

    @property
    def n_cells(self) -> int:
        return self.increments.size

    @property
    def h(self) -> float:
        return float(self.grid[1] - self.grid[0])

    @property
    def gamma(self) -> float:
        return self.mode.gamma


def build_phase_table(
    model: CoefficientModel,
    eps: float,
    N: int,
    mode="gl:6",
    antiderivative: Optional[Callable] = None,
) -> PhaseTable:
    """Phase table on the uniform grid x_n = n/N."""
    if N < 1:
        raise ConfigError(f"need at least one cell, got N={N}")
    mode = parse_phase_mode(mode)
    grid = np.linspace(0.0, 1.0, N + 1)
    lo, hi = grid[:-1], grid[1:]
    if mode.kind == "analytic":
        if antiderivative is None:
            raise ConfigError("analytic phase mode needs a closed-form antiderivative")
        check = np.unique(np.concatenate([grid, 0.5 * (lo + hi)]))
        _check_positive(phi_prime(model, eps, check), check, eps)
        vals = np.asarray(antiderivative(eps, grid), dtype=float)
        increments = vals[1:] - vals[:-1]
    else:
        increments = _gl_cell_increments(model, eps, lo, hi, mode.nodes)
    if np.any(increments <= 0.0):
        raise EpsilonTooLargeError(
            f"non-positive phase increment for eps={eps:g}; phase not monotone"
        )
    phi = _compensated_cumsum(increments)
    return PhaseTable(grid=grid, phi=phi, increments=increments, mode=mode, eps=eps)
