"""Hamiltonian data of the maximum principle and integration of bang arcs.

Off the singular locus ``{h_1 = ... = h_k = 0}`` the maximized Hamiltonian

    H(q, p) = <p, f0(q)> + |h_I|,   h_I = (<p, f_i(q)>)_i,

is smooth and its extremals use the feedback ``u = h_I / |h_I|``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import SingularLocus, SingularStart, WrongDimensions
from .fieldexpr import VectorFieldExpr, eval_field, jacobian, lie_bracket
from .integrate import dopri5
from .system import DEFAULT_TOLERANCES, ControlAffineSystem, Tolerances


@dataclass(frozen=True)
class ExtremalPoint:
    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        p = np.array(self.p, dtype=float)
        if q.shape != p.shape or q.ndim != 1:
            raise WrongDimensions("state and costate must be vectors of equal length")
        if not np.any(p):
            raise ValueError("costate must be nonzero")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @classmethod
    def from_vector(cls, y: np.ndarray) -> "ExtremalPoint":
        n = y.size // 2
        return cls(y[:n], y[n:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    def scaled(self, c: float) -> "ExtremalPoint":
        return ExtremalPoint(self.q, c * self.p)


@dataclass(frozen=True)
class HamiltonianData:
    h0: float
    hI: np.ndarray
    rho: float
    H: float


def pairing(p, v) -> float:
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    if p.shape != v.shape:
        raise WrongDimensions(f"cannot pair covector {p.shape} with vector {v.shape}")
    return float(p @ v)


def hamiltonian_data(sys: ControlAffineSystem, lam: ExtremalPoint) -> HamiltonianData:
    h0 = pairing(lam.p, eval_field(sys.drift, lam.q))
    hI = np.array([pairing(lam.p, eval_field(f, lam.q)) for f in sys.fields])
    rho = float(np.linalg.norm(hI))
    return HamiltonianData(h0, hI, rho, h0 + rho)


def rho_tolerance(sys: ControlAffineSystem, q, p, tols: Tolerances = DEFAULT_TOLERANCES) -> float:
    """Scale-aware threshold below which ``|h_I|`` counts as zero."""
    scale = max(float(np.linalg.norm(eval_field(f, q))) for f in sys.fields)
    return tols.rho_tol * (1.0 + float(np.linalg.norm(p)) * scale)


def pmp_control(hI, tol: float = DEFAULT_TOLERANCES.singular_tol) -> np.ndarray:
    hI = np.asarray(hI, dtype=float)
    rho = float(np.linalg.norm(hI))
    if rho <= tol:
        raise SingularLocus(f"|h_I| = {rho:.3e} <= {tol:.3e}; feedback control undefined")
    return hI / rho


def _field_data(sys: ControlAffineSystem, q):
    vals = [eval_field(f, q) for f in sys.all_fields]
    jacs = [jacobian(f, q) for f in sys.all_fields]
    return vals, jacs


def frozen_rhs(sys: ControlAffineSystem, q, p, u) -> tuple[np.ndarray, np.ndarray]:
    """Hamiltonian flow of ``<p, f0 + sum u_i f_i>`` with ``u`` held fixed."""
    vals, jacs = _field_data(sys, q)
    coef = np.concatenate([[1.0], np.asarray(u, dtype=float)])
    qdot = sum(c * v for c, v in zip(coef, vals))
    J = sum(c * j for c, j in zip(coef, jacs))
    return qdot, -J.T @ p


def extremal_rhs(
    sys: ControlAffineSystem, lam: ExtremalPoint, tol: float = DEFAULT_TOLERANCES.singular_tol
) -> tuple[np.ndarray, np.ndarray]:
    """Canonical equations of the maximized Hamiltonian at ``lam``."""
    return _rhs(sys, lam.q, lam.p, tol)


def _rhs(sys, q, p, tol):
    vals, jacs = _field_data(sys, q)
    hI = np.array([p @ v for v in vals[1:]])
    u = pmp_control(hI, tol)
    coef = np.concatenate([[1.0], u])
    qdot = sum(c * v for c, v in zip(coef, vals))
    J = sum(c * j for c, j in zip(coef, jacs))
    return qdot, -J.T @ p


def rho_and_rate(sys: ControlAffineSystem, q, p) -> tuple[float, float]:
    """``|h_I|`` and its time derivative along the extremal flow.

    Uses ``d/dt h_i = <p, [f_u, f_i]>`` with the feedback control ``u``.
    """
    vals, jacs = _field_data(sys, q)
    hI = np.array([p @ v for v in vals[1:]])
    rho = float(np.linalg.norm(hI))
    if rho == 0.0:
        return 0.0, 0.0
    u = hI / rho
    coef = np.concatenate([[1.0], u])
    fu = sum(c * v for c, v in zip(coef, vals))
    Ju = sum(c * j for c, j in zip(coef, jacs))
    hdot = np.array([p @ lie_bracket((fu, Ju), (v, j), q) for v, j in zip(vals[1:], jacs[1:])])
    return rho, float(u @ hdot)


@dataclass
class ExtremalArc:
    """Sampled extremal arc in integration order.

    ``segments`` hold the continuous extension of ``(q, p)``; ``direction`` is
    +1 for forward and -1 for backward integration.
    """

    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    u: np.ndarray
    H: np.ndarray
    rho: np.ndarray
    reason: str
    direction: float = 1.0
    segments: list = field(default_factory=list, repr=False)
    t_event: Optional[float] = None
    t_locus: Optional[float] = None

    @property
    def n(self) -> int:
        return self.q.shape[1]

    @property
    def k(self) -> int:
        return self.u.shape[1]

    def state_at(self, t: float) -> ExtremalPoint:
        for seg in self.segments:
            lo, hi = sorted((seg.t0, seg.t1))
            if lo - 1e-15 <= t <= hi + 1e-15:
                return ExtremalPoint.from_vector(seg(t))
        raise ValueError(f"t={t} outside the arc")

    def velocity_at(self, t: float) -> np.ndarray:
        for seg in self.segments:
            lo, hi = sorted((seg.t0, seg.t1))
            if lo - 1e-15 <= t <= hi + 1e-15:
                return seg.derivative(t)
        raise ValueError(f"t={t} outside the arc")

    def H_drift(self) -> float:
        return float(np.max(np.abs(self.H - self.H[0]))) if self.H.size else 0.0

    def rows(self) -> np.ndarray:
        return np.column_stack([self.t, self.q, self.p, self.u, self.H, self.rho])

    def csv_header(self) -> list[str]:
        return (
            ["t"]
            + [f"q{i + 1}" for i in range(self.n)]
            + [f"p{i + 1}" for i in range(self.n)]
            + [f"u{i + 1}" for i in range(self.k)]
            + ["H", "rho"]
        )


def arc_from_samples(sys: ControlAffineSystem, t, q, p, u=None, reason: str = "synthetic") -> ExtremalArc:
    """Build an arc from given samples (no continuous extension).

    Missing controls are filled with the feedback law where ``|h_I| > 0`` and
    zero on the singular locus.
    """
    t = np.asarray(t, dtype=float)
    q = np.atleast_2d(np.asarray(q, dtype=float))
    p = np.atleast_2d(np.asarray(p, dtype=float))
    H, rho, us = [], [], []
    for qi, pi in zip(q, p):
        hd = hamiltonian_data(sys, ExtremalPoint(qi, pi))
        H.append(hd.H)
        rho.append(hd.rho)
        us.append(hd.hI / hd.rho if hd.rho > 0 else np.zeros(sys.k))
    u = np.asarray(us) if u is None else np.atleast_2d(np.asarray(u, dtype=float))
    return ExtremalArc(t, q, p, u, np.array(H), np.array(rho), reason)


def _record(sys, ts, ys, n):
    qs, ps, us, Hs, rhos = [], [], [], [], []
    for y in ys:
        q, p = y[:n], y[n:]
        hd = hamiltonian_data(sys, ExtremalPoint(q, p))
        qs.append(q)
        ps.append(p)
        us.append(hd.hI / hd.rho if hd.rho > 0 else np.zeros(sys.k))
        Hs.append(hd.H)
        rhos.append(hd.rho)
    return np.array(qs), np.array(ps), np.array(us), np.array(Hs), np.array(rhos)


def integrate_arc(
    sys: ControlAffineSystem,
    lam0: ExtremalPoint,
    t_span: Sequence[float],
    tols: Tolerances = DEFAULT_TOLERANCES,
    stop_at_locus: bool = True,
) -> ExtremalArc:
    """Integrate the maximized-Hamiltonian flow from ``lam0`` over ``t_span``.

    The direction follows the order of ``t_span``. With ``stop_at_locus``
    the arc terminates where ``|h_I|`` falls to the scale-aware tolerance;
    approaching steps are capped at half the predicted time to the locus so
    the crossing is bracketed inside a smooth step. ``t_locus`` extrapolates
    the event linearly to ``|h_I| = 0``.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    n = sys.n
    if hamiltonian_data(sys, lam0).rho <= rho_tolerance(sys, lam0.q, lam0.p, tols):
        raise SingularStart("initial point lies on the singular locus")
    direction = 1.0 if t1 >= t0 else -1.0

    def fun(t, y):
        qdot, pdot = _rhs(sys, y[:n], y[n:], 0.0)
        return np.concatenate([qdot, pdot])

    def event(t, y):
        q, p = y[:n], y[n:]
        rho = float(np.linalg.norm([p @ eval_field(f, q) for f in sys.fields]))
        return rho - rho_tolerance(sys, q, p, tols)

    def step_cap(t, y):
        rho, rate = rho_and_rate(sys, y[:n], y[n:])
        approach = -direction * rate
        if approach <= 0.0:
            return np.inf
        return 0.5 * rho / approach

    sol = dopri5(
        fun,
        t0,
        lam0.as_vector(),
        t1,
        rtol=tols.rtol,
        atol=tols.atol,
        event=event if stop_at_locus else None,
        event_tol=tols.event_time_tol,
        step_cap=step_cap if stop_at_locus else None,
    )
    q, p, u, H, rho = _record(sys, sol.t, sol.y, n)
    arc = ExtremalArc(
        sol.t, q, p, u, H, rho,
        reason="singular" if sol.status == "event" else "horizon",
        direction=direction,
        segments=list(sol.segments),
    )
    if sol.status == "event":
        arc.t_event = sol.t_event
        r, rate = rho_and_rate(sys, q[-1], p[-1])
        approach = -direction * rate
        arc.t_locus = sol.t_event + direction * (r / approach if approach > 0 else 0.0)
    return arc


def poisson_check(sys: ControlAffineSystem, arc: ExtremalArc, g: VectorFieldExpr) -> float:
    """Largest mismatch between ``d/dt <p, g(q)>`` and ``<p, [f_u, g](q)>``.

    The time derivative comes from differentiating the arc's continuous
    extension at each step's endpoints and midpoint; ``f_u`` is the field
    with the control frozen at its sampled value.
    """
    worst = 0.0
    n = arc.n
    for seg in arc.segments:
        for t in (seg.t0, seg.t0 + 0.5 * seg.h, seg.t1):
            y = seg(t)
            dy = seg.derivative(t)
            q, p = y[:n], y[n:]
            qdot, pdot = dy[:n], dy[n:]
            gv, gj = eval_field(g, q), jacobian(g, q)
            numeric = pdot @ gv + p @ (gj @ qdot)
            hd = hamiltonian_data(sys, ExtremalPoint(q, p))
            if hd.rho == 0.0:
                continue
            u = hd.hI / hd.rho
            fu = sys.controlled_field(u)
            exact = p @ lie_bracket(fu, g, q)
            worst = max(worst, abs(numeric - exact))
    return worst


def arc_to_csv(arc_rows: np.ndarray, header: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in arc_rows:
        w.writerow([f"{v:.17g}" for v in row])
    return buf.getvalue()
