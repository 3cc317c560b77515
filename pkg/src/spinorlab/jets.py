"""Second-order forward jets in the two coordinates (r, theta).

A :class:`Jet` carries a value together with its exact first and second
partial derivatives in ``r`` and ``theta``.  Arithmetic on jets applies the
product and chain rules, so any closed-form expression built from jets
carries analytic derivatives with it (no finite differencing).

Coefficients are stored in a leading axis of length 6 ordered as
``(f, f_r, f_t, f_rr, f_rt, f_tt)``; the remaining axes hold the value
shape (points, spinor components, matrix indices, ...).

Taking a derivative of a jet lowers its ``order``: the derivative of a
second-order jet is only known to first order.  Entries beyond ``order``
are kept at zero and must not be read.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

V, R, T, RR, RT, TT = range(6)


class Jet:
    __slots__ = ("c", "order")
    __array_ufunc__ = None

    def __init__(self, c, order: int = 2):
        self.c = np.asarray(c)
        if self.c.shape[:1] != (6,):
            raise ValueError("jet coefficients need a leading axis of length 6")
        self.order = int(order)

    # construction -----------------------------------------------------

    @classmethod
    def const(cls, value, order: int = 2) -> "Jet":
        value = np.asarray(value)
        c = np.zeros((6,) + value.shape, dtype=np.result_type(value, float))
        c[V] = value
        return cls(c, order)

    @classmethod
    def coords(cls, r, theta, order: int = 2) -> tuple["Jet", "Jet"]:
        r, theta = np.broadcast_arrays(np.asarray(r, float), np.asarray(theta, float))
        jr = cls.const(r, order)
        jt = cls.const(theta, order)
        jr.c[R] = 1.0
        jt.c[T] = 1.0
        return jr, jt

    @property
    def val(self) -> np.ndarray:
        return self.c[V]

    @property
    def shape(self) -> tuple:
        return self.c.shape[1:]

    def grad(self) -> np.ndarray:
        """First partials stacked as ``(2, *shape)``."""
        if self.order < 1:
            raise ValueError("jet has no first derivatives")
        return self.c[R:T + 1]

    def d(self, k: int) -> "Jet":
        """Partial derivative along coordinate ``k`` (0 = r, 1 = theta)."""
        if self.order < 1:
            raise ValueError("cannot differentiate a zeroth-order jet")
        c = np.zeros_like(self.c)
        if k == 0:
            c[V], c[R], c[T] = self.c[R], self.c[RR], self.c[RT]
        elif k == 1:
            c[V], c[R], c[T] = self.c[T], self.c[RT], self.c[TT]
        else:
            raise ValueError(f"coordinate index must be 0 or 1, got {k}")
        return Jet(c, self.order - 1)

    def truncate(self, order: int) -> "Jet":
        c = self.c.copy()
        if order < 2:
            c[RR:] = 0
        if order < 1:
            c[R:T + 1] = 0
        return Jet(c, min(order, self.order))

    # shape helpers ----------------------------------------------------

    def __getitem__(self, idx) -> "Jet":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.c[(slice(None),) + idx], self.order)

    def expand(self, n: int = 1) -> "Jet":
        """Append ``n`` trailing singleton axes (for broadcasting)."""
        return Jet(self.c.reshape(self.c.shape + (1,) * n), self.order)

    def conj(self) -> "Jet":
        return Jet(np.conj(self.c), self.order)

    @property
    def real(self) -> "Jet":
        return Jet(self.c.real, self.order)

    # arithmetic -------------------------------------------------------

    def _lift(self, other) -> "Jet":
        if isinstance(other, Jet):
            return other
        value = np.broadcast_to(np.asarray(other), np.broadcast_shapes(self.shape, np.shape(other)))
        return Jet.const(value, self.order)

    def __add__(self, other):
        other = self._lift(other)
        return Jet(self.c + other.c, min(self.order, other.order))

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c, self.order)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            other = np.asarray(other)
            return Jet(self.c * other, self.order)
        return bilinear(self, other, np.multiply)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return self * (1.0 / np.asarray(other))
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p):
        p = float(p)
        if p == 2.0:
            return self * self
        v = self.val
        return self.apply(v**p, p * v ** (p - 1), p * (p - 1) * v ** (p - 2))

    def reciprocal(self) -> "Jet":
        v = self.val
        inv = 1.0 / v
        return self.apply(inv, -inv**2, 2 * inv**3)

    def apply(self, f0, f1, f2) -> "Jet":
        """Compose with a scalar function given its value and two derivatives
        evaluated at ``self.val``."""
        c = self.c
        out = np.zeros(np.broadcast_shapes(c.shape, (6,) + np.shape(f0)),
                       dtype=np.result_type(c, f0, f1, f2))
        out[V] = f0
        out[R] = f1 * c[R]
        out[T] = f1 * c[T]
        out[RR] = f2 * c[R] * c[R] + f1 * c[RR]
        out[RT] = f2 * c[R] * c[T] + f1 * c[RT]
        out[TT] = f2 * c[T] * c[T] + f1 * c[TT]
        return Jet(out, self.order)

    def __repr__(self):
        return f"Jet(order={self.order}, shape={self.shape})"


def bilinear(a: Jet, b: Jet, op: Callable) -> Jet:
    """Leibniz rule for a bilinear map ``op`` on the value arrays."""
    x, y = a.c, b.c
    c0 = op(x[V], y[V])
    out = np.zeros((6,) + np.shape(c0), dtype=np.result_type(c0))
    out[V] = c0
    out[R] = op(x[R], y[V]) + op(x[V], y[R])
    out[T] = op(x[T], y[V]) + op(x[V], y[T])
    out[RR] = op(x[RR], y[V]) + 2 * op(x[R], y[R]) + op(x[V], y[RR])
    out[RT] = op(x[RT], y[V]) + op(x[R], y[T]) + op(x[T], y[R]) + op(x[V], y[RT])
    out[TT] = op(x[TT], y[V]) + 2 * op(x[T], y[T]) + op(x[V], y[TT])
    return Jet(out, min(a.order, b.order))


def matvec(m: Jet, v: Jet) -> Jet:
    """Product of a jet of 2x2 matrices ``(..., 2, 2)`` with spinors ``(..., 2)``."""
    return bilinear(m, v, lambda a, b: np.einsum("...ij,...j->...i", a, b))


def matmat(m: Jet, n: Jet) -> Jet:
    return bilinear(m, n, lambda a, b: np.einsum("...ij,...jk->...ik", a, b))


def const_matvec(mat: np.ndarray, v: Jet) -> Jet:
    """Apply a constant matrix to every coefficient of a spinor jet."""
    return Jet(np.einsum("ij,...j->...i", mat, v.c), v.order)


def stack(jets, axis: int = -1) -> Jet:
    """Stack jets along a new value axis."""
    axis = axis if axis < 0 else axis + 1
    return Jet(np.stack([j.c for j in jets], axis=axis), min(j.order for j in jets))


def sqrt(x: Jet) -> Jet:
    s = np.sqrt(x.val)
    return x.apply(s, 0.5 / s, -0.25 / (s * x.val))


def exp(x: Jet) -> Jet:
    e = np.exp(x.val)
    return x.apply(e, e, e)


def log(x: Jet) -> Jet:
    v = x.val
    return x.apply(np.log(v), 1.0 / v, -1.0 / v**2)


def sin(x: Jet) -> Jet:
    s, c = np.sin(x.val), np.cos(x.val)
    return x.apply(s, c, -s)


def cos(x: Jet) -> Jet:
    s, c = np.sin(x.val), np.cos(x.val)
    return x.apply(c, -s, -c)


def expi(x: Jet) -> Jet:
    """``exp(1j * x)`` for a real jet."""
    e = np.exp(1j * x.val)
    return x.apply(e, 1j * e, -e)
