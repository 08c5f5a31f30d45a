"""Truncated Taylor series ("jet") arithmetic.

A jet stores the scaled derivatives c[k] = f^(k)(x0) / k! of a function at a
single expansion point, so products, quotients and elementary functions of
jets propagate exact derivatives through the usual recurrences.  All
coefficient slots are numpy arrays, so one jet can carry many expansion
points at once (coef has shape (order+1, *point_shape)).

This is how the coefficient chains get their high-order derivatives: no
finite differencing anywhere, only rational recurrences on the model's own
derivative values.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Jet"]


class Jet:
    """Taylor coefficients of a smooth function about one or many points."""

    __slots__ = ("coef",)

    def __init__(self, coef):
        coef = np.asarray(coef, dtype=float)
        if coef.ndim == 0:
            coef = coef[None]
        self.coef = coef

    # -- constructors -------------------------------------------------------

    @classmethod
    def variable(cls, x, order: int) -> "Jet":
        """Jet of the identity function t -> t about x."""
        x = np.asarray(x, dtype=float)
        coef = np.zeros((order + 1,) + x.shape)
        coef[0] = x
        if order >= 1:
            coef[1] = 1.0
        return cls(coef)

    @classmethod
    def constant(cls, value, order: int, shape=()) -> "Jet":
        coef = np.zeros((order + 1,) + tuple(shape))
        coef[0] = value
        return cls(coef)

    # -- inspection ----------------------------------------------------------

    @property
    def order(self) -> int:
        return self.coef.shape[0] - 1

    @property
    def value(self):
        return self.coef[0]

    def derivative(self, k: int):
        """k-th derivative value (unscaled), k <= order."""
        if k > self.order:
            raise ValueError(f"jet of order {self.order} has no derivative {k}")
        import math

        return self.coef[k] * math.factorial(k)

    def truncated(self, order: int) -> "Jet":
        if order > self.order:
            raise ValueError("cannot extend a jet")
        return Jet(self.coef[: order + 1])

    def deriv(self) -> "Jet":
        """Jet of f' about the same point(s); order drops by one."""
        if self.order < 1:
            raise ValueError("cannot differentiate an order-0 jet")
        k = np.arange(1, self.order + 1).reshape((-1,) + (1,) * (self.coef.ndim - 1))
        return Jet(self.coef[1:] * k)

    # -- ring operations -----------------------------------------------------

    def _align(self, other: "Jet"):
        n = min(self.order, other.order)
        return self.coef[: n + 1], other.coef[: n + 1], n

    def __add__(self, other):
        if isinstance(other, Jet):
            a, b, _ = self._align(other)
            return Jet(a + b)
        coef = self.coef.copy()
        coef[0] = coef[0] + other
        return Jet(coef)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coef)

    def __sub__(self, other):
        if isinstance(other, Jet):
            a, b, _ = self._align(other)
            return Jet(a - b)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.coef * other)
        a, b, n = self._align(other)
        out = np.zeros_like(a)
        for k in range(n + 1):
            # Cauchy product; order is small so the explicit loop is fine
            for j in range(k + 1):
                out[k] += a[j] * b[k - j]
        return Jet(out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.coef / other)
        a, b, n = self._align(other)
        out = np.zeros_like(a)
        out[0] = a[0] / b[0]
        for k in range(1, n + 1):
            acc = a[k].copy()
            for j in range(k):
                acc -= out[j] * b[k - j]
            out[k] = acc / b[0]
        return Jet(out)

    def __rtruediv__(self, other):
        return Jet.constant(other, self.order, self.coef.shape[1:]) / self

    # -- elementary functions --------------------------------------------------

    def sqrt(self) -> "Jet":
        a = self.coef
        out = np.zeros_like(a)
        out[0] = np.sqrt(a[0])
        for k in range(1, self.order + 1):
            acc = a[k].copy()
            for j in range(1, k):
                acc -= out[j] * out[k - j]
            out[k] = acc / (2.0 * out[0])
        return Jet(out)

    def pow(self, r: float) -> "Jet":
        """self**r for real r via a0 * p' = r * a' * p."""
        a = self.coef
        out = np.zeros_like(a)
        out[0] = a[0] ** r
        for k in range(1, self.order + 1):
            acc = np.zeros_like(a[0])
            for j in range(1, k + 1):
                acc += (r * j - (k - j)) * a[j] * out[k - j]
            out[k] = acc / (k * a[0])
        return Jet(out)

    def __pow__(self, r):
        return self.pow(float(r))

    def exp(self) -> "Jet":
        a = self.coef
        out = np.zeros_like(a)
        out[0] = np.exp(a[0])
        for k in range(1, self.order + 1):
            acc = np.zeros_like(a[0])
            for j in range(1, k + 1):
                acc += j * a[j] * out[k - j]
            out[k] = acc / k
        return Jet(out)

    def log(self) -> "Jet":
        a = self.coef
        out = np.zeros_like(a)
        out[0] = np.log(a[0])
        for k in range(1, self.order + 1):
            acc = k * a[k].copy()
            for j in range(1, k):
                acc -= (k - j) * a[j] * out[k - j]
            out[k] = acc / (k * a[0])
        return Jet(out)

    def sin_cos(self) -> tuple["Jet", "Jet"]:
        a = self.coef
        s = np.zeros_like(a)
        c = np.zeros_like(a)
        s[0] = np.sin(a[0])
        c[0] = np.cos(a[0])
        for k in range(1, self.order + 1):
            sacc = np.zeros_like(a[0])
            cacc = np.zeros_like(a[0])
            for j in range(1, k + 1):
                sacc += j * a[j] * c[k - j]
                cacc += j * a[j] * s[k - j]
            s[k] = sacc / k
            c[k] = -cacc / k
        return Jet(s), Jet(c)

    def sin(self) -> "Jet":
        return self.sin_cos()[0]

    def cos(self) -> "Jet":
        return self.sin_cos()[1]

    def __repr__(self):
        return f"Jet(order={self.order}, value={self.value!r})"
