"""One-step marching schemes of orders 2 and 3 for the Z-equation.

Each cell [x_n, x_{n+1}] contributes a 2x2 operator I + A1 + A2 (+ A3) built
from endpoint/midpoint values of the coefficient chains, the phase increment
s_n, and the oscillatory remainder kernels

    h_p(t) = e^{it} - sum_{k<p} (it)^k / k!,

evaluated cancellation-safely.  The blocks have the structure

    A1 = eps   [[0, conj(Q1)], [Q1, 0]]
    A2 = eps^2 [[Q2, 0], [0, conj(Q2)]]
    A3 = eps^3 [[0, conj(Q3)], [Q3, 0]]

with Q1/Q3 driven by kernels at +2 s_n/eps and Q2 at -2 s_n/eps. The order-2
scheme keeps Q1, Q2 with P=2; the order-3 scheme uses P=3 plus Q3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .coeffs import ChainValues, CoefficientModel, chain_nodes
from .errors import ConfigError, DerivativeOrderError
from .phase import PhaseTable, build_phase_table, parse_phase_mode, phase_increment
from .transform import StateVec, u_initial, z_from_u

__all__ = [
    "WKB2",
    "WKB3",
    "h_special",
    "simpson_weighted",
    "StepContext",
    "StepOperator",
    "make_step_context",
    "q1_term",
    "q2_term",
    "q3_term",
    "assemble_step_operator",
    "advance",
    "solve_ivp",
    "recover_u",
    "Trajectory",
]

WKB2 = "wkb2"
WKB3 = "wkb3"

_SERIES_SWITCH = 0.5
_SERIES_RELTOL = 1e-18


def normalize_scheme(scheme: str) -> str:
    s = str(scheme).strip().lower()
    if s not in (WKB2, WKB3):
        raise ConfigError(f"unknown scheme {scheme!r}; expected wkb2 or wkb3")
    return s


def required_order(scheme: str) -> int:
    return 7 if scheme == WKB3 else 5


def h_special(p: int, x):
    """Taylor remainder h_p(x) = e^{ix} - sum_{k<p} (ix)^k/k!, p in 1..3.

    For |x| <= 0.5 the remainder is summed term by term from k = p, since
    the direct formula would cancel all significant digits there.
    """
    if p not in (1, 2, 3):
        raise ValueError(f"kernel order p={p} not in 1..3")
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty(x.shape, dtype=complex)

    small = np.abs(x) <= _SERIES_SWITCH
    if np.any(~small):
        ix = 1j * x[~small]
        partial = np.ones_like(ix)
        term = np.ones_like(ix)
        for k in range(1, p):
            term = term * ix / k
            partial = partial + term
        out[~small] = np.exp(ix) - partial
    if np.any(small):
        ix = 1j * x[small]
        term = np.ones_like(ix)
        for k in range(1, p + 1):
            term = term * ix / k
        acc = term.copy()
        k = p
        while k < p + 40:
            k += 1
            term = term * ix / k
            acc += term
            if np.all(np.abs(term) <= _SERIES_RELTOL * np.abs(acc) + 1e-300):
                break
        out[small] = acc
    return out[0] if scalar else out


def simpson_weighted(f_lo, f_mid, f_hi, x_lo, x_hi):
    """(x_hi - x_lo)/6 * (f_lo + 4 f_mid + f_hi); exact through cubics."""
    if np.any(np.asarray(x_hi) <= np.asarray(x_lo)):
        raise ConfigError(f"bad cell [{x_lo}, {x_hi}]")
    return (np.asarray(x_hi) - np.asarray(x_lo)) / 6.0 * (f_lo + 4.0 * f_mid + f_hi)


# ---------------------------------------------------------------------------
# Vectorized coefficient terms (one entry per cell)
# ---------------------------------------------------------------------------


def _q1_array(eps, P, s, chain_lo, chain_hi, pf):
    """Q1^P per cell; chain rows are b_0 .. b_{2P-1} at the cell ends."""
    E = np.exp(2j * s / eps)
    ieps = 1j * eps
    term = np.zeros_like(E)
    for p in range(1, P + 1):
        term -= ieps ** p * (chain_hi[p - 1] * E - chain_lo[p - 1])
    for p in range(1, P + 1):
        term -= ieps ** (p + P) * chain_hi[p + P - 1] * h_special(p, 2.0 * s / eps)
    return pf * term


def _q2_array_p2(eps, h, s, b_lo, b_hi, chain_lo, chain_hi):
    """Q2^2 per cell (trapezoid variant; kernels at -2 s/eps)."""
    t = -2.0 * s / eps
    q = -1j * eps * h * (b_hi * chain_hi[0] + b_lo * chain_lo[0]) / 2.0
    q = q - eps ** 2 * chain_lo[0] * chain_hi[0] * h_special(1, t)
    q = q + 1j * eps ** 3 * chain_hi[1] * (chain_lo[0] - chain_hi[0]) * h_special(2, t)
    return q


def _q2_array_p3(eps, h, s, b_lo, b_mid, b_hi, chain_lo, chain_mid, chain_hi):
    """Q2^3 per cell (Simpson variant; kernels at -2 s/eps).

    The endpoint bracket [b_0(y) e^{-2i phi(y)/eps}] collapses to relative
    phase only: b_0(lo) * (b_0(hi) e^{-2i s/eps} - b_0(lo)).
    """
    t = -2.0 * s / eps
    Em = np.exp(-2j * s / eps)
    qs_bb0 = simpson_weighted(b_lo * chain_lo[0], b_mid * chain_mid[0],
                              b_hi * chain_hi[0], 0.0, h)
    qs_bb1 = simpson_weighted(b_lo * chain_lo[1], b_mid * chain_mid[1],
                              b_hi * chain_hi[1], 0.0, h)
    bracket = chain_lo[0] * (chain_hi[0] * Em - chain_lo[0])
    q = -1j * eps * qs_bb0
    q = q - eps ** 2 * (bracket - qs_bb1)
    q = q + 1j * eps ** 3 * (chain_lo[0] * chain_hi[1] - chain_lo[1] * chain_hi[0]) * h_special(1, t)
    q = q + eps ** 4 * (
        (chain_lo[0] + chain_hi[0]) * chain_hi[2]
        - chain_lo[1] * chain_hi[1]
        - 2.0 * chain_hi[0] * chain_hi[3] * s
    ) * h_special(2, t)
    q = q + 1j * eps ** 5 * (
        (chain_hi[0] - chain_lo[0]) * chain_hi[3]
        - (chain_hi[1] - chain_lo[1]) * chain_hi[2]
    ) * h_special(3, t)
    return q


def _q3_array(eps, h, s, b_lo, chain_lo, chain_hi, aux_hi, pf):
    """Q3^3 per cell; auxiliaries evaluated at the cell's right end."""
    t = 2.0 * s / eps
    bb0_lo = b_lo * chain_lo[0]
    cross = aux_hi["l0"] - chain_lo[0] * aux_hi["kappa0"]
    line1 = h / 2.0 * (aux_hi["c0"] + bb0_lo * chain_hi[0]) * h_special(1, t)
    line2 = (
        0.5 * (aux_hi["c1"] * h + aux_hi["d0"] + bb0_lo * (chain_hi[1] * h + aux_hi["f0"]))
        + (chain_lo[0] * chain_hi[0] ** 2 + 2.0 * s * cross)
    ) * h_special(2, t)
    line3 = (
        0.5 * (aux_hi["e0"] + aux_hi["d1"] + bb0_lo * (aux_hi["g0"] + aux_hi["f1"]))
        + 2.0 * (chain_lo[0] * chain_hi[0] * chain_hi[1] + cross)
    ) * h_special(3, t)
    return pf * (-eps ** 2 * line1 - 1j * eps ** 3 * line2 + eps ** 4 * line3)


def _assemble_ops(eps, scheme, s, phi_lo, nodes: ChainValues, mids: Optional[ChainValues]):
    """Step operators for all cells; returns (ops, blocks) arrays."""
    n_cells = s.size
    chain_lo = nodes.chain[:, :-1]
    chain_hi = nodes.chain[:, 1:]
    b_lo = nodes.b[:-1]
    b_hi = nodes.b[1:]
    h = nodes.x[1:] - nodes.x[:-1]
    pf = np.exp(2j * phi_lo / eps)

    P = 3 if scheme == WKB3 else 2
    q1 = _q1_array(eps, P, s, chain_lo, chain_hi, pf)
    if scheme == WKB3:
        aux_hi = {k: v[1:] for k, v in nodes.aux.items()}
        q2 = _q2_array_p3(
            eps, h, s, b_lo, mids.b, b_hi, chain_lo, mids.chain, chain_hi
        )
        q3 = _q3_array(eps, h, s, b_lo, chain_lo, chain_hi, aux_hi, pf)
    else:
        q2 = _q2_array_p2(eps, h, s, b_lo, b_hi, chain_lo, chain_hi)
        q3 = np.zeros_like(q2)

    ops = np.zeros((n_cells, 2, 2), dtype=complex)
    ops[:, 0, 0] = 1.0 + eps ** 2 * q2
    ops[:, 1, 1] = 1.0 + eps ** 2 * np.conj(q2)
    off = eps * q1
    if scheme == WKB3:
        off = off + eps ** 3 * q3
    ops[:, 1, 0] = off
    ops[:, 0, 1] = np.conj(off)
    return ops, (q1, q2, q3)


# ---------------------------------------------------------------------------
# Single-cell interface
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StepContext:
    """Per-cell data: endpoints, phase increment, cached coefficient values.

    ``nodes`` holds chain values at (x_lo, x_mid, x_hi) in that order; the
    third-order auxiliaries are cached where the scheme reads them (the
    right endpoint).
    """

    x_lo: float
    x_hi: float
    s: float
    phi_lo: float
    eps: float
    scheme: str
    nodes: ChainValues

    @property
    def h(self) -> float:
        return self.x_hi - self.x_lo


def make_step_context(
    model: CoefficientModel,
    eps: float,
    x_lo: float,
    x_hi: float,
    scheme: str = WKB3,
    s: Optional[float] = None,
    phi_lo: float = 0.0,
    antiderivative=None,
) -> StepContext:
    """Build a StepContext, computing the phase increment if not supplied."""
    scheme = normalize_scheme(scheme)
    if s is None:
        mode = "analytic" if antiderivative is not None else "gl:8"
        s = phase_increment(model, eps, x_lo, x_hi, mode, antiderivative)
    pts = np.array([x_lo, 0.5 * (x_lo + x_hi), x_hi])
    p_max = 5 if scheme == WKB3 else 3
    nodes = chain_nodes(model, eps, pts, p_max, with_aux=(scheme == WKB3))
    return StepContext(
        x_lo=float(x_lo), x_hi=float(x_hi), s=float(s), phi_lo=float(phi_lo),
        eps=float(eps), scheme=scheme, nodes=nodes,
    )


def _ctx_split(ctx: StepContext):
    chain = ctx.nodes.chain
    return {
        "chain_lo": chain[:, [0]],
        "chain_mid": chain[:, [1]],
        "chain_hi": chain[:, [2]],
        "b_lo": ctx.nodes.b[[0]],
        "b_mid": ctx.nodes.b[[1]],
        "b_hi": ctx.nodes.b[[2]],
        "s": np.array([ctx.s]),
        "h": np.array([ctx.h]),
        "pf": np.exp(2j * np.array([ctx.phi_lo]) / ctx.eps),
    }


def q1_term(ctx: StepContext, P: int) -> complex:
    """Q1^P on this cell (includes the absolute-phase prefactor)."""
    if P not in (2, 3):
        raise ValueError("P must be 2 or 3")
    if ctx.nodes.chain.shape[0] < 2 * P:
        raise DerivativeOrderError(f"context chain too short for Q1^{P}")
    d = _ctx_split(ctx)
    return complex(_q1_array(ctx.eps, P, d["s"], d["chain_lo"], d["chain_hi"], d["pf"])[0])


def q2_term(ctx: StepContext, P: int) -> complex:
    """Q2^P on this cell (no absolute-phase factor appears in Q2)."""
    if P not in (2, 3):
        raise ValueError("P must be 2 or 3")
    d = _ctx_split(ctx)
    if P == 2:
        val = _q2_array_p2(ctx.eps, d["h"], d["s"], d["b_lo"], d["b_hi"],
                           d["chain_lo"], d["chain_hi"])
    else:
        val = _q2_array_p3(ctx.eps, d["h"], d["s"], d["b_lo"], d["b_mid"], d["b_hi"],
                           d["chain_lo"], d["chain_mid"], d["chain_hi"])
    return complex(val[0])


def q3_term(ctx: StepContext) -> complex:
    """Q3^3 on this cell (includes the absolute-phase prefactor)."""
    if ctx.nodes.aux is None:
        raise DerivativeOrderError("context was built without the auxiliary bundle")
    d = _ctx_split(ctx)
    aux_hi = {k: v[[2]] for k, v in ctx.nodes.aux.items()}
    return complex(
        _q3_array(ctx.eps, d["h"], d["s"], d["b_lo"], d["chain_lo"], d["chain_hi"],
                  aux_hi, d["pf"])[0]
    )


@dataclass(frozen=True)
class StepOperator:
    """I + A1 + A2 (+ A3): the one-cell transfer approximation for Z."""

    matrix: np.ndarray
    scheme: str
    a1: np.ndarray
    a2: np.ndarray
    a3: Optional[np.ndarray] = None


def assemble_step_operator(ctx: StepContext, scheme: Optional[str] = None) -> StepOperator:
    """Assemble the cell operator I + A1 + A2 (+ A3 for the order-3 scheme)."""
    scheme = normalize_scheme(scheme or ctx.scheme)
    P = 3 if scheme == WKB3 else 2
    q1 = q1_term(ctx, P)
    q2 = q2_term(ctx, P)
    a1 = ctx.eps * np.array([[0.0, np.conj(q1)], [q1, 0.0]])
    a2 = ctx.eps ** 2 * np.array([[q2, 0.0], [0.0, np.conj(q2)]])
    a3 = None
    mat = np.eye(2, dtype=complex) + a1 + a2
    if scheme == WKB3:
        q3 = q3_term(ctx)
        a3 = ctx.eps ** 3 * np.array([[0.0, np.conj(q3)], [q3, 0.0]])
        mat = mat + a3
    return StepOperator(matrix=mat, scheme=scheme, a1=a1, a2=a2, a3=a3)


def advance(z: StateVec, op: StepOperator) -> StateVec:
    """One cell of the march: Z_{n+1} = (I + sum_p A^p) Z_n."""
    vec = z.expect("Z")
    return StateVec(op.matrix @ vec, "Z")


# ---------------------------------------------------------------------------
# Full initial value solve
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    """March output: Z at the nodes plus reconstructed U and wave values."""

    scheme: str
    eps: float
    grid: np.ndarray
    phase: PhaseTable
    z: np.ndarray            # (N+1, 2) complex
    u: np.ndarray            # (N+1, 2) complex
    w: np.ndarray            # (N+1,) complex, the wave value
    eps_w_prime: np.ndarray  # (N+1,) complex
    operators: Optional[np.ndarray] = None  # (N, 2, 2) complex

    @property
    def h(self) -> float:
        return float(self.grid[1] - self.grid[0])


def recover_u(z: np.ndarray, phi: np.ndarray, eps: float) -> np.ndarray:
    """U_n = P^{-1} diag(e^{i phi_n/eps}, e^{-i phi_n/eps}) Z_n, vectorized."""
    rot = np.exp(1j * phi / eps)
    v1 = rot * z[:, 0]
    v2 = np.conj(rot) * z[:, 1]
    u = np.empty_like(z)
    u[:, 0] = (-1j * v1 + v2) / math.sqrt(2.0)
    u[:, 1] = (v1 - 1j * v2) / math.sqrt(2.0)
    return u


def solve_ivp(
    model: CoefficientModel,
    eps: float,
    N: int,
    scheme: str,
    phi0: complex,
    phi1: complex,
    phase_mode="gl:6",
    antiderivative=None,
    keep_operators: bool = True,
) -> Trajectory:
    """March the preprocessed problem across [0, 1] on N uniform cells."""
    scheme = normalize_scheme(scheme)
    need = required_order(scheme)
    if model.max_order is not None and model.max_order < need:
        raise DerivativeOrderError(
            f"scheme {scheme} needs coefficient derivatives to order {need}, "
            f"model {model.name!r} provides {model.max_order}"
        )
    mode = parse_phase_mode(phase_mode)
    table = build_phase_table(model, eps, N, mode, antiderivative)
    grid = table.grid

    p_max = 5 if scheme == WKB3 else 3
    nodes = chain_nodes(model, eps, grid, p_max, with_aux=(scheme == WKB3))
    mids = None
    if scheme == WKB3:
        mids = chain_nodes(model, eps, 0.5 * (grid[:-1] + grid[1:]), 1)

    ops, _ = _assemble_ops(eps, scheme, table.increments, table.phi[:-1], nodes, mids)

    u0 = u_initial(phi0, phi1, model, eps)
    z0 = z_from_u(u0, 0.0, eps).vec
    z = np.empty((N + 1, 2), dtype=complex)
    z[0] = z0
    z1, z2 = complex(z0[0]), complex(z0[1])
    a11 = ops[:, 0, 0]; a12 = ops[:, 0, 1]; a21 = ops[:, 1, 0]; a22 = ops[:, 1, 1]
    for n in range(N):
        z1, z2 = a11[n] * z1 + a12[n] * z2, a21[n] * z1 + a22[n] * z2
        z[n + 1, 0] = z1
        z[n + 1, 1] = z2

    u = recover_u(z, table.phi, eps)

    a_vals = model.eval(grid, 0)
    a1_vals = model.eval(grid, 1)
    quarter = a_vals ** 0.25
    w = u[:, 0] / quarter
    eps_wp = quarter * u[:, 1] - 0.25 * eps * a1_vals * a_vals ** (-1.25) * u[:, 0]

    return Trajectory(
        scheme=scheme, eps=float(eps), grid=grid, phase=table,
        z=z, u=u, w=w, eps_w_prime=eps_wp,
        operators=ops if keep_operators else None,
    )
