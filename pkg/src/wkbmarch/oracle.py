"""Independent ground truth for the marching schemes.

Everything here evaluates the exact Z-equation Z' = eps N(x) Z directly,
without the endpoint expansions or oscillatory kernels of the schemes:

* ``picard_m``            -- the iterated integrals M_p(eta; xi) by direct
                             quadrature (three interchangeable strategies);
* ``transfer_matrix``     -- the exact flow map over an interval, from the
                             truncated iterated-integral series with a
                             controlled remainder, or from an ODE solver;
* ``flow_oracle``         -- transports a Z-state with either strategy;
* ``reference_solution``  -- ground-truth U/Z on a grid, cross-validated
                             against an independently computed fine march.

The default quadrature engine splits the interval into panels short enough
that the oscillation advances at most ~1.5 radians per panel, interpolates
the integrands at Chebyshev-Lobatto nodes, and integrates the interpolants
exactly; cumulative node values of each level feed the next level, which is
what makes the nested integrals cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad
from scipy.integrate import solve_ivp as _scipy_solve_ivp

from . import coeffs as _coeffs
from . import phase as _phase
from . import stepper as _stepper
from .coeffs import CoefficientModel, Problem
from .errors import (
    ConfigError,
    EpsilonTooLargeError,
    OracleBudgetError,
    OracleCrossValidationError,
)
from .transform import StateVec, u_initial, z_from_u

__all__ = [
    "OscillatoryMatrixFn",
    "AnalyticPhaseFn",
    "SpectralPhaseFn",
    "make_phase_fn",
    "picard_m",
    "transfer_matrix",
    "flow_oracle",
    "ReferenceSolution",
    "reference_solution",
]

_PANEL_Q = 16          # Chebyshev-Lobatto points per quadrature panel
_RAD_PER_PANEL = 1.5   # max oscillation advance (radians) per panel
_DEFAULT_MAX_NODES = 4_000_000


def b_values(model: CoefficientModel, x) -> np.ndarray:
    return np.atleast_1d(_coeffs.b_jet(model, x, 0).value)


# ---------------------------------------------------------------------------
# Panel integration machinery
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _panel_ops(q: int):
    """Lobatto nodes on [-1, 1] plus the spectral antiderivative matrix S.

    S maps integrand values at the nodes to values of int_{-1}^{t_j} of the
    degree q-1 interpolant; the last row is the full-panel integral.
    """
    j = np.arange(q)
    t = -np.cos(np.pi * j / (q - 1))  # ascending, includes both endpoints
    V = np.empty((q, q))
    V[:, 0] = 1.0
    V[:, 1] = t
    for k in range(2, q):
        V[:, k] = 2.0 * t * V[:, k - 1] - V[:, k - 2]
    C = np.linalg.inv(V)  # node values -> Chebyshev coefficients

    # antiderivative in coefficient space (degree rises by one)
    Ad = np.zeros((q + 1, q))
    Ad[1, 0] = 1.0
    if q > 1:
        Ad[2, 1] = 0.25
    for k in range(2, q):
        Ad[k + 1, k] += 1.0 / (2.0 * (k + 1))
        Ad[k - 1, k] -= 1.0 / (2.0 * (k - 1))
    signs = (-1.0) ** np.arange(1, q + 1)
    Ad[0, :] = -(signs @ Ad[1:, :])  # fix F(-1) = 0

    E = np.empty((q, q + 1))
    E[:, 0] = 1.0
    E[:, 1] = t
    for k in range(2, q + 1):
        E[:, k] = 2.0 * t * E[:, k - 1] - E[:, k - 2]
    S = E @ Ad @ C
    return t, S, C, Ad


def _clenshaw(coef_rows: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """Evaluate per-row Chebyshev series at per-row points."""
    m = coef_rows.shape[1]
    b1 = np.zeros_like(tau)
    b2 = np.zeros_like(tau)
    for k in range(m - 1, 0, -1):
        b1, b2 = coef_rows[:, k] + 2.0 * tau * b1 - b2, b1
    return coef_rows[:, 0] + tau * b1 - b2


# ---------------------------------------------------------------------------
# Phase accessors
# ---------------------------------------------------------------------------


class AnalyticPhaseFn:
    """phi(x) from a closed-form antiderivative of sqrt(a) - eps^2 b."""

    def __init__(self, antiderivative: Callable, eps: float, model: CoefficientModel):
        self._f = antiderivative
        self.eps = float(eps)
        self.model = model
        self._f0 = float(antiderivative(eps, 0.0))

    def phi(self, x):
        return np.asarray(self._f(self.eps, np.asarray(x, dtype=float))) - self._f0


class SpectralPhaseFn:
    """phi(x) from panelwise Chebyshev antiderivatives of phi'.

    phi' is smooth and non-oscillatory, so a modest fixed panelization gives
    near machine precision for any admissible model.
    """

    def __init__(self, model: CoefficientModel, eps: float, panels: int = 64, q: int = 16):
        t, _, C, Ad = _panel_ops(q)
        bounds = np.linspace(0.0, 1.0, panels + 1)
        half = 0.5 * (bounds[1:] - bounds[:-1])
        mid = 0.5 * (bounds[1:] + bounds[:-1])
        X = mid[:, None] + half[:, None] * t[None, :]
        fp = _phase.phi_prime(model, eps, X.ravel()).reshape(X.shape)
        if np.any(fp <= 0.0):
            raise EpsilonTooLargeError(
                f"phi' <= 0 encountered while tabulating the phase (eps={eps:g})"
            )
        coef = fp @ C.T                      # (panels, q) Chebyshev coefficients
        acoef = (coef @ Ad.T) * half[:, None]  # antiderivative coefficients
        full = acoef.sum(axis=1)             # value at the right edge: T_m(1) = 1
        offsets = np.concatenate([[0.0], np.cumsum(full)])[:-1]
        self.model = model
        self.eps = float(eps)
        self._bounds = bounds
        self._half = half
        self._mid = mid
        self._acoef = acoef
        self._offsets = offsets

    def phi(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.clip(np.searchsorted(self._bounds, x, side="right") - 1, 0,
                      self._half.size - 1)
        tau = (x - self._mid[idx]) / self._half[idx]
        return self._offsets[idx] + _clenshaw(self._acoef[idx], tau)


def make_phase_fn(
    model: CoefficientModel,
    eps: float,
    antiderivative: Optional[Callable] = None,
):
    if antiderivative is not None:
        return AnalyticPhaseFn(antiderivative, eps, model)
    return SpectralPhaseFn(model, eps)


@dataclass(frozen=True)
class OscillatoryMatrixFn:
    """The off-diagonal system matrix N(x) of the exact Z-equation:

        N_12 = b e^{-2i phi/eps},   N_21 = b e^{+2i phi/eps},  diag = 0.
    """

    model: CoefficientModel
    eps: float
    phase_fn: object

    def n12(self, x):
        theta = 2.0 * np.asarray(self.phase_fn.phi(x)) / self.eps
        return b_values(self.model, x) * np.exp(-1j * theta)

    def n21(self, x):
        return np.conj(self.n12(x))

    def matrix(self, x: float) -> np.ndarray:
        v = self.n12(np.array([x]))[0]
        return np.array([[0.0, v], [np.conj(v), 0.0]])


# ---------------------------------------------------------------------------
# Iterated integrals
# ---------------------------------------------------------------------------


def _budget_check(phase_fn, eps, xi, eta, max_nodes):
    """Refuse intervals whose oscillation cannot be resolved in budget."""
    span = float(phase_fn.phi(np.array([eta]))[0] - phase_fn.phi(np.array([xi]))[0])
    wavelengths = span / (math.pi * eps)
    if 20.0 * wavelengths > max_nodes:
        raise OracleBudgetError(
            f"interval [{xi}, {eta}] spans {wavelengths:.3g} oscillations at "
            f"eps={eps:g}; resolving it needs more than {max_nodes} nodes"
        )


def _iterated_scalars(model, eps, phase_fn, xi, eta, p_max, max_nodes):
    """Scalar generators m_1..m_pmax of the iterated integrals over [xi, eta].

    Odd levels integrate b e^{+2i phi/eps} (times the previous level), even
    levels the conjugate kernel; the alternation reproduces the off-diagonal/
    diagonal structure of the matrices.  Returns the m_p values at eta (with
    absolute-phase prefactors restored) plus int |b|.
    """
    t, S, _, _ = _panel_ops(_PANEL_Q)
    sample = np.linspace(xi, eta, 65)
    fp = _phase.phi_prime(model, eps, sample)
    density = 2.0 * float(np.max(fp)) / eps
    K = max(4, int(math.ceil((eta - xi) * density / _RAD_PER_PANEL)))
    if K * _PANEL_Q > max_nodes:
        raise OracleBudgetError(
            f"[{xi}, {eta}] at eps={eps:g} needs {K * _PANEL_Q} quadrature nodes, "
            f"budget is {max_nodes}"
        )
    bounds = np.linspace(xi, eta, K + 1)
    half = 0.5 * (bounds[1:] - bounds[:-1])
    mid = 0.5 * (bounds[1:] + bounds[:-1])
    X = (mid[:, None] + half[:, None] * t[None, :]).ravel()

    b = b_values(model, X).reshape(K, _PANEL_Q)
    phi_xi = float(phase_fn.phi(np.array([xi]))[0])
    theta = (2.0 / eps) * (np.asarray(phase_fn.phi(X)) - phi_xi)
    ep = np.exp(1j * theta).reshape(K, _PANEL_Q)

    def cumulative(f):
        anti = (f @ S.T) * half[:, None]
        full = anti[:, -1]
        offsets = np.concatenate([[0.0 + 0.0j], np.cumsum(full)])
        return offsets[:-1, None] + anti, offsets[-1]

    abs_anti = (np.abs(b) @ S.T) * half[:, None]
    b_l1 = float(np.sum(abs_anti[:, -1]))

    ms = []
    level = np.ones_like(ep)
    pf = np.exp(2j * phi_xi / eps)
    for p in range(1, p_max + 1):
        osc = ep if p % 2 == 1 else np.conj(ep)
        level, total = cumulative(b * osc * level)
        # relative phase was used inside; odd levels carry one absolute factor
        ms.append(total * pf if p % 2 == 1 else total)
    return ms, b_l1


def _matrix_from_scalar(p: int, m: complex) -> np.ndarray:
    if p % 2 == 1:
        return np.array([[0.0, np.conj(m)], [m, 0.0]])
    return np.array([[m, 0.0], [0.0, np.conj(m)]])


def _picard_gk(model, eps, phase_fn, xi, eta, p, tol):
    """Nested adaptive Gauss-Kronrod evaluation of m_p (absolute phase)."""

    def kernel(sign):
        def f(x):
            theta = 2.0 * float(phase_fn.phi(np.array([x]))[0]) / eps
            return float(b_values(model, np.array([x]))[0]) * np.exp(sign * 1j * theta)
        return f

    fplus, fminus = kernel(+1), kernel(-1)

    def cquad(func, a, b, tol_level):
        re, re_err = quad(lambda x: func(x).real, a, b, epsabs=tol_level,
                          epsrel=tol_level, limit=400)
        im, im_err = quad(lambda x: func(x).imag, a, b, epsabs=tol_level,
                          epsrel=tol_level, limit=400)
        if re_err + im_err > 50.0 * tol_level + 1e-15:
            raise OracleBudgetError(
                f"adaptive quadrature error {re_err + im_err:g} exceeds "
                f"tolerance {tol_level:g} on [{a}, {b}]"
            )
        return re + 1j * im

    def m1(y):
        return cquad(fplus, xi, y, tol / 10.0)

    if p == 1:
        return m1(eta)

    def m2(y):
        return cquad(lambda x: fminus(x) * m1(x), xi, y, tol / 4.0)

    if p == 2:
        return m2(eta)
    return cquad(lambda x: fplus(x) * m2(x), xi, eta, tol)


def _picard_ode(model, eps, phase_fn, xi, eta, p_max, tol):
    """m_1..m_pmax by integrating the nested system with DOP853."""

    def rhs(x, y):
        b = float(b_values(model, np.array([x]))[0])
        theta = 2.0 * float(phase_fn.phi(np.array([x]))[0]) / eps
        eplus = np.exp(1j * theta)
        m = y[0::2] + 1j * y[1::2]
        out = np.empty(p_max, dtype=complex)
        prev = 1.0 + 0.0j
        for q in range(p_max):
            osc = eplus if q % 2 == 0 else np.conj(eplus)
            out[q] = b * osc * prev
            prev = m[q]
        dy = np.empty(2 * p_max)
        dy[0::2] = out.real
        dy[1::2] = out.imag
        return dy

    sol = _scipy_solve_ivp(
        rhs, (xi, eta), np.zeros(2 * p_max), method="DOP853",
        rtol=max(tol, 2.5e-14), atol=tol / 10.0,
    )
    if not sol.success:
        raise OracleBudgetError(f"ODE oracle failed: {sol.message}")
    y = sol.y[:, -1]
    return [complex(y[2 * q] + 1j * y[2 * q + 1]) for q in range(p_max)]


def picard_m(
    p: int,
    xi: float,
    eta: float,
    model: CoefficientModel,
    eps: float,
    tol: float = 1e-12,
    strategy: str = "spectral",
    antiderivative: Optional[Callable] = None,
    phase_fn=None,
    max_nodes: int = _DEFAULT_MAX_NODES,
) -> np.ndarray:
    """Iterated integral matrix M_p(eta; xi) of the exact Z-equation.

    Strategies: "spectral" (panel quadrature, default), "gk" (nested
    adaptive Gauss-Kronrod), "ode" (tight-tolerance DOP853 on the nested
    system).  They share only the model/phase evaluations, so agreement is
    a genuine cross-check.
    """
    if p not in (1, 2, 3):
        raise ValueError("picard_m supports p in {1, 2, 3}")
    if not (0.0 <= xi < eta <= 1.0 + 1e-12):
        raise ConfigError(f"bad interval [{xi}, {eta}]")
    if phase_fn is None:
        phase_fn = make_phase_fn(model, eps, antiderivative)
    _budget_check(phase_fn, eps, xi, eta, max_nodes)
    if strategy == "spectral":
        ms, _ = _iterated_scalars(model, eps, phase_fn, xi, eta, p, max_nodes)
        return _matrix_from_scalar(p, ms[p - 1])
    if strategy == "gk":
        return _matrix_from_scalar(p, _picard_gk(model, eps, phase_fn, xi, eta, p, tol))
    if strategy == "ode":
        ms = _picard_ode(model, eps, phase_fn, xi, eta, p, tol)
        return _matrix_from_scalar(p, ms[p - 1])
    raise ConfigError(f"unknown picard strategy {strategy!r}")


# ---------------------------------------------------------------------------
# Exact flow
# ---------------------------------------------------------------------------


def _chunk_p_max(r: float, tol: float) -> int:
    p = 3
    while p < 12:
        if r ** (p + 1) / math.factorial(p + 1) <= tol / 4.0:
            return p
        p += 1
    return p


def transfer_matrix(
    model: CoefficientModel,
    eps: float,
    xi: float,
    eta: float,
    tol: float = 1e-13,
    strategy: str = "picard",
    antiderivative: Optional[Callable] = None,
    phase_fn=None,
    max_nodes: int = _DEFAULT_MAX_NODES,
) -> np.ndarray:
    """Exact-flow transfer matrix T with Z(eta) = T Z(xi).

    "picard" sums the iterated-integral series per chunk with the remainder
    bound (eps int|b|)^{p+1}/(p+1)! pushed below tol; "ode" integrates the
    matrix equation with DOP853.
    """
    if eta == xi:
        return np.eye(2, dtype=complex)
    if not (0.0 <= xi < eta <= 1.0 + 1e-12):
        raise ConfigError(f"bad interval [{xi}, {eta}]")
    if phase_fn is None:
        phase_fn = make_phase_fn(model, eps, antiderivative)
    _budget_check(phase_fn, eps, xi, eta, max_nodes)

    if strategy == "ode":
        omega = OscillatoryMatrixFn(model, eps, phase_fn)

        def rhs(x, y):
            z = y[0::2] + 1j * y[1::2]
            zc = z.reshape(2, 2)
            dz = eps * (omega.matrix(x) @ zc)
            dy = np.empty(8)
            dy[0::2] = dz.ravel().real
            dy[1::2] = dz.ravel().imag
            return dy

        y0 = np.zeros(8)
        y0[0] = 1.0  # columns of the identity
        y0[6] = 1.0
        sol = _scipy_solve_ivp(rhs, (xi, eta), y0, method="DOP853",
                               rtol=max(tol, 2.5e-14), atol=tol / 10.0)
        if not sol.success:
            raise OracleBudgetError(f"flow ODE solve failed: {sol.message}")
        y = sol.y[:, -1]
        return (y[0::2] + 1j * y[1::2]).reshape(2, 2)

    if strategy != "picard":
        raise ConfigError(f"unknown flow strategy {strategy!r}")

    # remainder control: split until eps * int|b| per chunk is comfortably small
    probe = np.linspace(xi, eta, 129)
    b_l1_est = float(np.trapezoid(np.abs(b_values(model, probe)), probe))
    r_total = eps * b_l1_est
    n_chunks = max(1, int(math.ceil(r_total / 0.25)))
    bounds = np.linspace(xi, eta, n_chunks + 1)
    T = np.eye(2, dtype=complex)
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        r_c = max(r_total / n_chunks, 1e-30)
        p_max = _chunk_p_max(r_c, tol / n_chunks)
        ms, _ = _iterated_scalars(model, eps, phase_fn, lo, hi, p_max, max_nodes)
        Tc = np.eye(2, dtype=complex)
        for q, m in enumerate(ms, start=1):
            Tc += eps ** q * _matrix_from_scalar(q, m)
        T = Tc @ T
    return T


def flow_oracle(
    z0: StateVec,
    xi: float,
    eta: float,
    model: CoefficientModel,
    eps: float,
    tol: float = 1e-12,
    strategy: str = "picard",
    antiderivative: Optional[Callable] = None,
    phase_fn=None,
) -> StateVec:
    """Transport a Z-state along the exact flow of Z' = eps N(x) Z."""
    vec = z0.expect("Z")
    T = transfer_matrix(model, eps, xi, eta, tol, strategy, antiderivative, phase_fn)
    return StateVec(T @ vec, "Z")


# ---------------------------------------------------------------------------
# Reference solutions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReferenceSolution:
    """Ground-truth states at grid nodes (U and Z), with provenance."""

    grid: np.ndarray
    u: np.ndarray   # (N+1, 2)
    z: np.ndarray   # (N+1, 2)
    eps: float
    tol: float
    problem: str
    cross_validated: bool


def reference_solution(
    problem: Problem,
    eps: float,
    grid,
    tol: float = 1e-13,
    phi0: complex = 1.0 + 0.0j,
    phi1: complex = 1.0j,
    cross_validate: bool = True,
    cross_tol: float = 1e-8,
    max_nodes: int = _DEFAULT_MAX_NODES,
) -> ReferenceSolution:
    """Reference U/Z at grid nodes from the exact-flow transfer matrices.

    An independently computed fine march (16x finer grid) must agree with
    the flow reference to cross_tol, otherwise the call aborts: the two
    routes share no scheme formulas, so disagreement means one of them is
    wrong and no error measurement should proceed.
    """
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid[0] != 0.0 or np.any(np.diff(grid) <= 0) or grid[-1] > 1.0 + 1e-12:
        raise ConfigError("reference grid must be ascending, start at 0, end <= 1")
    model = problem.model
    phase_fn = make_phase_fn(model, eps, problem.phase_antiderivative)

    u0 = u_initial(phi0, phi1, model, eps)
    z = np.empty((grid.size, 2), dtype=complex)
    z[0] = z_from_u(u0, 0.0, eps).vec
    for n in range(grid.size - 1):
        T = transfer_matrix(model, eps, grid[n], grid[n + 1], tol,
                            phase_fn=phase_fn, max_nodes=max_nodes)
        z[n + 1] = T @ z[n]

    phi_nodes = np.asarray(phase_fn.phi(grid), dtype=float)
    u = _stepper.recover_u(z, phi_nodes, eps)

    validated = False
    if cross_validate and grid.size > 1:
        n_cells = grid.size - 1
        n_ref = 16 * n_cells
        mode = "analytic" if problem.phase_antiderivative is not None else "gl:6"
        traj = _stepper.solve_ivp(
            model, eps, n_ref, _stepper.WKB3, phi0, phi1,
            phase_mode=mode, antiderivative=problem.phase_antiderivative,
            keep_operators=False,
        )
        if not np.allclose(traj.grid[::16], grid, rtol=0.0, atol=1e-12):
            raise ConfigError("reference grid is not uniform; cannot cross-validate")
        diff = float(np.max(np.abs(traj.u[::16] - u)))
        if diff > cross_tol:
            raise OracleCrossValidationError(
                f"flow reference and fine march disagree by {diff:.3e} "
                f"(> {cross_tol:.1e}) for problem {problem.name!r}, eps={eps:g}; "
                "refusing to report errors against a suspect reference"
            )
        validated = True

    return ReferenceSolution(
        grid=grid, u=u, z=z, eps=float(eps), tol=float(tol),
        problem=problem.name, cross_validated=validated,
    )
