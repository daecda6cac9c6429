"""First-order dual numbers for forward-mode differentiation."""

from __future__ import annotations

import math
from typing import Union

Number = Union[int, float]


class Dual:
    """Dual number ``val + der*eps`` with ``eps**2 = 0``."""

    __slots__ = ("val", "der")

    def __init__(self, val: Number, der: Number = 0.0):
        self.val = float(val)
        self.der = float(der)

    @staticmethod
    def _coerce(x: Union["Dual", Number]) -> "Dual":
        return x if isinstance(x, Dual) else Dual(x, 0.0)

    def __add__(self, other):
        o = Dual._coerce(other)
        return Dual(self.val + o.val, self.der + o.der)

    __radd__ = __add__

    def __sub__(self, other):
        o = Dual._coerce(other)
        return Dual(self.val - o.val, self.der - o.der)

    def __rsub__(self, other):
        o = Dual._coerce(other)
        return Dual(o.val - self.val, o.der - self.der)

    def __mul__(self, other):
        o = Dual._coerce(other)
        return Dual(self.val * o.val, self.der * o.val + self.val * o.der)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = Dual._coerce(other)
        if o.val == 0.0:
            raise ZeroDivisionError("dual division by zero")
        inv = 1.0 / o.val
        return Dual(self.val * inv, (self.der * o.val - self.val * o.der) * inv * inv)

    def __rtruediv__(self, other):
        return Dual._coerce(other).__truediv__(self)

    def __neg__(self):
        return Dual(-self.val, -self.der)

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise TypeError("dual power supports non-negative integer exponents only")
        if k == 0:
            return Dual(1.0, 0.0)
        return Dual(self.val**k, k * self.val ** (k - 1) * self.der)

    def sin(self):
        return Dual(math.sin(self.val), math.cos(self.val) * self.der)

    def cos(self):
        return Dual(math.cos(self.val), -math.sin(self.val) * self.der)

    def exp(self):
        e = math.exp(self.val)
        return Dual(e, e * self.der)

    def sqrt(self):
        r = math.sqrt(self.val)
        if r == 0.0:
            raise ZeroDivisionError("derivative of sqrt at 0")
        return Dual(r, 0.5 * self.der / r)

    def __repr__(self) -> str:
        return f"Dual({self.val!r}, {self.der!r})"


def value(x) -> float:
    return x.val if isinstance(x, Dual) else float(x)


def tangent(x) -> float:
    return x.der if isinstance(x, Dual) else 0.0
