"""Dormand-Prince 5(4) with dense output and terminal event location.

Written out explicitly (rather than delegating to a library ODE solver) so
that the integration loop can cap step sizes when an arc approaches the
singular locus and locate the crossing by bisection on the continuous
extension.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import StepFailure

# Butcher tableau (Dormand & Prince 1980), FSAL row doubles as the 5th-order weights.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension (Hairer, Norsett & Wanner, DOPRI5 dense output)
_D = np.array(
    [
        -12715105075 / 11282082432,
        0.0,
        87487479700 / 32700410799,
        -10690763975 / 1880347072,
        701980252875 / 199316789632,
        -1453857185 / 822651844,
        69997945 / 29380423,
    ]
)

Rhs = Callable[[float, np.ndarray], np.ndarray]


class DenseSegment:
    """Quartic continuous extension over one accepted step ``[t0, t0 + h]``."""

    __slots__ = ("t0", "h", "r")

    def __init__(self, t0: float, h: float, y0, y1, k: np.ndarray):
        self.t0 = t0
        self.h = h
        r2 = y1 - y0
        r3 = h * k[0] - r2
        r4 = r2 - h * k[6] - r3
        r5 = h * (_D @ k)
        self.r = (np.array(y0, dtype=float), r2, r3, r4, r5)

    @property
    def t1(self) -> float:
        return self.t0 + self.h

    def __call__(self, t: float) -> np.ndarray:
        th = (t - self.t0) / self.h
        r1, r2, r3, r4, r5 = self.r
        return r1 + th * (r2 + (1 - th) * (r3 + th * (r4 + (1 - th) * r5)))

    def derivative(self, t: float) -> np.ndarray:
        th = (t - self.t0) / self.h
        _, r2, r3, r4, r5 = self.r
        C = r4 + (1 - th) * r5
        dC = -r5
        B = r3 + th * C
        dB = C + th * dC
        A = r2 + (1 - th) * B
        dA = -B + (1 - th) * dB
        return (A + th * dA) / self.h


class HermiteSegment:
    """Cubic Hermite interpolant between two states with known derivatives."""

    __slots__ = ("t0", "h", "y0", "y1", "d0", "d1")

    def __init__(self, t0: float, h: float, y0, y1, d0, d1):
        self.t0, self.h = t0, h
        self.y0, self.y1 = np.asarray(y0, float), np.asarray(y1, float)
        self.d0, self.d1 = np.asarray(d0, float), np.asarray(d1, float)

    @property
    def t1(self) -> float:
        return self.t0 + self.h

    def __call__(self, t: float) -> np.ndarray:
        s = (t - self.t0) / self.h
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return h00 * self.y0 + h10 * self.h * self.d0 + h01 * self.y1 + h11 * self.h * self.d1

    def derivative(self, t: float) -> np.ndarray:
        s = (t - self.t0) / self.h
        g00 = 6 * s**2 - 6 * s
        g10 = 3 * s**2 - 4 * s + 1
        g01 = -6 * s**2 + 6 * s
        g11 = 3 * s**2 - 2 * s
        return (g00 * self.y0 + g01 * self.y1) / self.h + g10 * self.d0 + g11 * self.d1


@dataclass
class Solution:
    t: np.ndarray
    y: np.ndarray
    segments: list = field(repr=False)
    status: str  # "horizon" | "event"
    t_event: Optional[float] = None
    n_rhs: int = 0
    n_rejected: int = 0

    def locate(self, t: float):
        """Segment whose closed time interval contains ``t``."""
        for seg in self.segments:
            lo, hi = sorted((seg.t0, seg.t1))
            if lo - 1e-15 <= t <= hi + 1e-15:
                return seg
        raise ValueError(f"t={t} outside the integrated interval")

    def __call__(self, t: float) -> np.ndarray:
        return self.locate(t)(t)


def _rk_step(fun: Rhs, t: float, y: np.ndarray, h: float, k1: np.ndarray):
    k = np.empty((7, y.size))
    k[0] = k1
    for s in range(1, 7):
        ys = y + h * (np.asarray(_A[s]) @ k[:s])
        k[s] = fun(t + _C[s] * h, ys)
    y1 = y + h * (_B[:6] @ k[:6])
    err = h * (_E @ k)
    return y1, err, k


def _initial_step(fun, t0, y0, f0, direction, rtol, atol) -> float:
    scale = atol + np.abs(y0) * rtol
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + direction * h0 * f0
    f1 = fun(t0 + direction * h0, y1)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def dopri5(
    fun: Rhs,
    t0: float,
    y0,
    t1: float,
    *,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    event: Callable[[float, np.ndarray], float] | None = None,
    event_tol: float = 1e-12,
    step_cap: Callable[[float, np.ndarray], float] | None = None,
    max_steps: int = 200_000,
    h_min_rel: float = 1e-14,
) -> Solution:
    """Integrate ``y' = fun(t, y)`` from ``t0`` to ``t1`` (either direction).

    ``event(t, y)`` is terminal: integration stops at the first time it
    turns from positive to non-positive, located by bisection on the dense
    output to ``event_tol``. ``step_cap(t, y)`` may bound the magnitude of the
    next step.
    """
    y = np.array(y0, dtype=float)
    t = float(t0)
    direction = 1.0 if t1 >= t0 else -1.0
    span = abs(t1 - t0)
    ts, ys, segs = [t], [y.copy()], []
    if span == 0.0:
        return Solution(np.array(ts), np.array(ys), segs, "horizon")
    f = fun(t, y)
    n_rhs, n_rej = 1, 0
    # the heuristic can return absurdly small steps for tiny nonzero y0;
    # rejected steps shrink it again if needed
    h = max(_initial_step(fun, t, y, f, direction, rtol, atol), 1e3 * h_min_rel * max(1.0, abs(t)))
    n_rhs += 1
    g_prev = event(t, y) if event is not None else None

    for _ in range(max_steps):
        remaining = abs(t1 - t)
        if remaining <= 1e-15 * max(1.0, abs(t1)):
            break
        if step_cap is not None:
            h = min(h, step_cap(t, y))
        h = min(h, remaining)
        if h <= h_min_rel * max(1.0, abs(t)):
            raise StepFailure(f"step size underflow at t={t!r}")
        hs = direction * h
        y_new, err, k = _rk_step(fun, t, y, hs, f)
        n_rhs += 6
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        en = float(np.sqrt(np.mean((err / sc) ** 2)))
        if not np.isfinite(en):
            n_rej += 1
            h *= 0.2
            continue
        if en > 1.0:
            n_rej += 1
            h *= max(0.2, 0.9 * en ** (-0.2))
            continue
        seg = DenseSegment(t, hs, y, y_new, k)
        t_new = t + hs if h < remaining else float(t1)
        if event is not None:
            hit = _find_event(event, seg, t, t_new, y_new, g_prev, event_tol)
            if hit is not None:
                te, ye = hit
                segs.append(seg)
                ts.append(te)
                ys.append(ye)
                return Solution(np.array(ts), np.array(ys), segs, "event", te, n_rhs, n_rej)
            g_prev = event(t_new, y_new)
        segs.append(seg)
        t, y = t_new, y_new
        f = k[6]
        ts.append(t)
        ys.append(y.copy())
        fac = 5.0 if en == 0.0 else min(5.0, max(0.2, 0.9 * en ** (-0.2)))
        h *= fac
    else:
        raise StepFailure(f"maximum number of steps ({max_steps}) exceeded at t={t!r}")
    return Solution(np.array(ts), np.array(ys), segs, "horizon", None, n_rhs, n_rej)


def _find_event(event, seg, ta, tb, yb, g_a, tol):
    if g_a is None or g_a <= 0.0:
        return None
    if event(tb, yb) > 0.0:
        # an interior dip below zero inside a single step is only caught at the probes
        probes = [ta + (tb - ta) * s for s in (0.25, 0.5, 0.75)]
        first = next((x for x in probes if event(x, seg(x)) <= 0.0), None)
        if first is None:
            return None
        tb = first
    lo, hi = ta, tb
    while abs(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        if event(mid, seg(mid)) > 0.0:
            lo = mid
        else:
            hi = mid
    return hi, seg(hi)


def rk4_step(fun: Rhs, t: float, y: np.ndarray, h: float) -> np.ndarray:
    """One classical Runge-Kutta step."""
    k1 = fun(t, y)
    k2 = fun(t + h / 2, y + h / 2 * k1)
    k3 = fun(t + h / 2, y + h / 2 * k2)
    k4 = fun(t + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
