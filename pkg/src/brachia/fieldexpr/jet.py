"""Truncated multivariate Taylor polynomials (jets) at a point.

A jet of order ``K`` in ``n`` variables stores the Taylor coefficients
``c[alpha]`` of ``f(q + delta) = sum c[alpha] * delta**alpha`` for all
multi-indices with ``|alpha| <= K``. Monomials are kept in graded order, so
truncating to a lower order is a prefix slice and a derivative of an order-K
jet is an exact order-(K-1) jet. Nested Lie brackets of depth ``m`` need
jets of order ``m - 1`` of the generating fields.
"""

from __future__ import annotations

import math
from functools import lru_cache
from itertools import combinations_with_replacement
from typing import Union

import numpy as np


def _monomials_of_degree(n: int, d: int) -> list[tuple[int, ...]]:
    out = []
    for combo in combinations_with_replacement(range(n), d):
        alpha = [0] * n
        for j in combo:
            alpha[j] += 1
        out.append(tuple(alpha))
    return out


@lru_cache(maxsize=None)
def _monomials(n: int, order: int) -> tuple[tuple[int, ...], ...]:
    mons: list[tuple[int, ...]] = []
    for d in range(order + 1):
        mons.extend(_monomials_of_degree(n, d))
    return tuple(mons)


@lru_cache(maxsize=None)
def _index(n: int, order: int) -> dict[tuple[int, ...], int]:
    return {a: i for i, a in enumerate(_monomials(n, order))}


@lru_cache(maxsize=None)
def _mul_table(n: int, order: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mons = _monomials(n, order)
    idx = _index(n, order)
    ia, ib, ic = [], [], []
    for i, a in enumerate(mons):
        da = sum(a)
        for j, b in enumerate(mons):
            if da + sum(b) > order:
                continue
            ia.append(i)
            ib.append(j)
            ic.append(idx[tuple(x + y for x, y in zip(a, b))])
    return np.array(ia), np.array(ib), np.array(ic)


@lru_cache(maxsize=None)
def _deriv_table(n: int, order: int, j: int) -> tuple[np.ndarray, np.ndarray]:
    """Source indices and factors for d/dx_j of an order-``order`` jet."""
    idx = _index(n, order)
    src, fac = [], []
    for alpha in _monomials(n, order - 1):
        up = list(alpha)
        up[j] += 1
        src.append(idx[tuple(up)])
        fac.append(float(up[j]))
    return np.array(src, dtype=int), np.array(fac)


Scalar = Union[int, float]


class Jet:
    """Order-``order`` Taylor jet in ``n`` variables."""

    __slots__ = ("c", "n", "order")

    def __init__(self, c: np.ndarray, n: int, order: int):
        self.c = c
        self.n = n
        self.order = order

    # --- construction ---------------------------------------------------------
    @classmethod
    def constant(cls, v: float, n: int, order: int) -> "Jet":
        c = np.zeros(len(_monomials(n, order)))
        c[0] = v
        return cls(c, n, order)

    @classmethod
    def variable(cls, q, i: int, order: int) -> "Jet":
        """Jet of the coordinate function ``x_{i+1}`` at the point ``q``."""
        n = len(q)
        c = np.zeros(len(_monomials(n, order)))
        c[0] = float(q[i])
        if order >= 1:
            c[1 + i] = 1.0
        return cls(c, n, order)

    @classmethod
    def point(cls, q, order: int) -> list["Jet"]:
        return [cls.variable(q, i, order) for i in range(len(q))]

    @property
    def value(self) -> float:
        return float(self.c[0])

    def truncate(self, order: int) -> "Jet":
        if order == self.order:
            return self
        if order > self.order:
            raise ValueError("cannot raise the order of a jet")
        return Jet(self.c[: len(_monomials(self.n, order))].copy(), self.n, order)

    def coefficient(self, alpha: tuple[int, ...]) -> float:
        return float(self.c[_index(self.n, self.order)[alpha]])

    def derivative(self, j: int) -> "Jet":
        if self.order == 0:
            raise ValueError("order-0 jet carries no derivative information")
        src, fac = _deriv_table(self.n, self.order, j)
        return Jet(self.c[src] * fac, self.n, self.order - 1)

    # --- arithmetic -----------------------------------------------------------
    def _align(self, other: "Jet") -> tuple[np.ndarray, np.ndarray, int]:
        order = min(self.order, other.order)
        m = len(_monomials(self.n, order))
        return self.c[:m], other.c[:m], order

    def __add__(self, other):
        if isinstance(other, Jet):
            a, b, order = self._align(other)
            return Jet(a + b, self.n, order)
        c = self.c.copy()
        c[0] += other
        return Jet(c, self.n, self.order)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c, self.n, self.order)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b, order = self._align(other)
            ia, ib, ic = _mul_table(self.n, order)
            out = np.bincount(ic, weights=a[ia] * b[ib], minlength=len(a))
            return Jet(out, self.n, order)
        return Jet(self.c * other, self.n, self.order)

    __rmul__ = __mul__

    def _nilpotent(self) -> "Jet":
        c = self.c.copy()
        c[0] = 0.0
        return Jet(c, self.n, self.order)

    def reciprocal(self) -> "Jet":
        a0 = self.value
        if a0 == 0.0:
            raise ZeroDivisionError("jet division by zero")
        x = self._nilpotent() * (1.0 / a0)
        s = Jet.constant(1.0, self.n, self.order)
        for _ in range(self.order):
            s = 1.0 - x * s
        return s * (1.0 / a0)

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        if other == 0:
            raise ZeroDivisionError("jet division by zero")
        return self * (1.0 / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise TypeError("jet power supports non-negative integer exponents only")
        result = Jet.constant(1.0, self.n, self.order)
        base = self
        while k:
            if k & 1:
                result = result * base
            k >>= 1
            if k:
                base = base * base
        return result

    def _powers(self) -> list["Jet"]:
        h = self._nilpotent()
        pw = [Jet.constant(1.0, self.n, self.order)]
        for _ in range(self.order):
            pw.append(pw[-1] * h)
        return pw

    def exp(self) -> "Jet":
        h = self._nilpotent()
        s = Jet.constant(1.0, self.n, self.order)
        for m in range(self.order, 0, -1):
            s = 1.0 + h * s * (1.0 / m)
        return s * math.exp(self.value)

    def _sin_cos_series(self) -> tuple["Jet", "Jet"]:
        pw = self._powers()
        S = Jet.constant(0.0, self.n, self.order)
        C = Jet.constant(0.0, self.n, self.order)
        for m, p in enumerate(pw):
            coef = 1.0 / math.factorial(m)
            if m % 2 == 0:
                C = C + p * ((-1) ** (m // 2) * coef)
            else:
                S = S + p * ((-1) ** (m // 2) * coef)
        return S, C

    def sin(self) -> "Jet":
        S, C = self._sin_cos_series()
        return C * math.sin(self.value) + S * math.cos(self.value)

    def cos(self) -> "Jet":
        S, C = self._sin_cos_series()
        return C * math.cos(self.value) - S * math.sin(self.value)

    def __repr__(self) -> str:
        return f"Jet(n={self.n}, order={self.order}, value={self.value!r})"


def as_jet(x, n: int, order: int) -> Jet:
    return x if isinstance(x, Jet) else Jet.constant(float(x), n, order)
