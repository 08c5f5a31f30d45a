"""Oscillatory remainder kernels h_p and the weighted Simpson rule."""

import math

import mpmath as mp
import numpy as np
import pytest

from wkbmarch.stepper import h_special, simpson_weighted


def hp_reference(p, x, dps=50):
    """50-digit evaluation of e^{ix} - sum_{k<p} (ix)^k/k!."""
    with mp.workdps(dps):
        ix = mp.mpc(0, x)
        val = mp.e ** ix
        for k in range(p):
            val -= ix ** k / mp.factorial(k)
        return complex(val)


def test_h_zero():
    for p in (1, 2, 3):
        assert h_special(p, 0.0) == 0.0


def test_h1_at_pi():
    got = h_special(1, math.pi)
    assert got.real == pytest.approx(-2.0, abs=1e-15)
    assert abs(got.imag) < 1e-15


def test_h2_tiny_argument_against_50_digits():
    x = 1e-8
    got = h_special(2, x)
    want = hp_reference(2, x)
    assert abs(got - want) / abs(want) <= 1e-13
    # the direct formula would cancel essentially every digit here
    assert got.real == pytest.approx(-0.5e-16, rel=1e-12)
    assert got.imag == pytest.approx(-1e-24 / 6.0, rel=1e-12)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_h_log_spaced_sweep_against_50_digits(p):
    xs = np.logspace(-9, math.log10(20.0), 160)
    xs = np.concatenate([xs, -xs])
    vals = h_special(p, xs)
    for x, got in zip(xs, vals):
        want = hp_reference(p, float(x))
        assert abs(got - want) <= 1e-13 * abs(want)


@pytest.mark.parametrize("p", [1, 2, 3])
def test_h_taylor_remainder_bound(p, rng):
    xs = np.concatenate([
        np.logspace(-12, 3, 200),
        -np.logspace(-12, 3, 200),
        rng.uniform(-50, 50, size=200),
    ])
    vals = h_special(p, xs)
    bound = np.abs(xs) ** p / math.factorial(p)
    assert np.all(np.abs(vals) <= bound * (1.0 + 1e-12) + 1e-300)


def test_h_recurrence(rng):
    xs = np.concatenate([np.logspace(-10, 2, 120), -np.logspace(-10, 2, 120)])
    for p in (1, 2):
        hp = h_special(p, xs)
        lhs = h_special(p + 1, xs)
        rhs = hp - (1j * xs) ** p / math.factorial(p)
        # ulps of the subtraction inputs: |h_p| in the series branch, and the
        # e^{ix} evaluation scale (1) in the direct branch
        scale = np.where(np.abs(xs) <= 0.5, np.abs(hp), np.maximum(np.abs(hp), 1.0))
        assert np.all(np.abs(lhs - rhs) <= 4.0 * np.spacing(scale))


def test_h_continuity_at_series_switch():
    # values straddling the |x| = 0.5 branch switch must agree closely
    for p in (1, 2, 3):
        below = h_special(p, 0.5 - 1e-12)
        above = h_special(p, 0.5 + 1e-12)
        assert abs(below - above) < 1e-11


def test_simpson_const():
    assert simpson_weighted(1.0, 1.0, 1.0, 0.0, 1.0) == pytest.approx(1.0)


def test_simpson_quadratic():
    f = lambda x: x ** 2
    got = simpson_weighted(f(0.0), f(0.5), f(1.0), 0.0, 1.0)
    assert got == pytest.approx(1.0 / 3.0, abs=1e-16)


def test_simpson_cubic_exact():
    f = lambda x: x ** 3
    got = simpson_weighted(f(0.0), f(1.0), f(2.0), 0.0, 2.0)
    assert got == pytest.approx(4.0, abs=1e-14)


def test_simpson_complex_and_validation():
    got = simpson_weighted(1j, 1j, 1j, 0.0, 2.0)
    assert got == pytest.approx(2j)
    with pytest.raises(Exception):
        simpson_weighted(0.0, 0.0, 0.0, 1.0, 1.0)
