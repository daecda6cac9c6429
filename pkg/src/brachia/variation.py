"""Admissible perturbations of a broken extremal and the second-order functional J.

Everything here lives in the normal control frame of a two-control switch:
``f- = f0 + alpha f1 - s f2`` before the switch and ``f+ = f0 + alpha f1 + s f2``
after it, with ``s = sqrt(1 - alpha^2)``. A perturbation ``v`` on ``[-1, 1]`` is
piecewise constant with ``m`` equal pieces per side and enters the dynamics
through ``g_v = v1 f1 + v2 f2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    ChartExit,
    EvaluationDomainError,
    InadmissiblePerturbation,
    NormalFormMissing,
    StepFailure,
)
from .extremal import ExtremalPoint
from .fieldexpr import eval_field, jacobian, lie_bracket
from .integrate import dopri5
from .junction import SwitchRecord
from .system import ControlAffineSystem


def _cross(x: np.ndarray, y: np.ndarray):
    """``x1 y2 - x2 y1`` along the last axis."""
    return x[..., 0] * y[..., 1] - x[..., 1] * y[..., 0]


@dataclass(frozen=True)
class Perturbation:
    """``v_minus[i]`` is the value on ``[-1 + i/m, -1 + (i+1)/m]``; ``v_plus[i]`` on ``[i/m, (i+1)/m]``."""

    v_minus: np.ndarray
    v_plus: np.ndarray
    alpha: float

    def __post_init__(self):
        vm = np.atleast_2d(np.asarray(self.v_minus, dtype=float))
        vp = np.atleast_2d(np.asarray(self.v_plus, dtype=float))
        if vm.shape != vp.shape or vm.shape[1] != 2:
            raise ValueError("v_minus and v_plus must both have shape (m, 2)")
        object.__setattr__(self, "v_minus", vm)
        object.__setattr__(self, "v_plus", vp)

    @property
    def m(self) -> int:
        return self.v_minus.shape[0]

    @property
    def width(self) -> float:
        return 1.0 / self.m

    @property
    def a(self) -> np.ndarray:
        return np.array([self.alpha, math.sqrt(1.0 - self.alpha**2)])

    @property
    def V_minus(self) -> np.ndarray:
        return self.v_minus * np.array([1.0, -1.0])

    @property
    def V_plus(self) -> np.ndarray:
        return self.v_plus

    @property
    def V_tilde_minus(self) -> np.ndarray:
        """``V-(-t)`` on the pieces of ``[0, 1]``."""
        return self.V_minus[::-1]

    @property
    def V_tilde_plus(self) -> np.ndarray:
        return self.V_plus

    def pieces(self) -> np.ndarray:
        """All ``2m`` values ordered in time from ``t = -1`` to ``t = 1``."""
        return np.vstack([self.v_minus, self.v_plus])

    def breakpoints(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, 2 * self.m + 1)

    def __call__(self, t: float) -> np.ndarray:
        if not -1.0 <= t <= 1.0:
            raise ValueError("perturbations live on [-1, 1]")
        i = min(int((t + 1.0) * self.m), 2 * self.m - 1)
        return self.pieces()[i]

    def integral(self) -> np.ndarray:
        return self.width * self.pieces().sum(axis=0)

    def is_zero(self) -> bool:
        return not np.any(self.pieces())

    def admissibility_excess(self) -> float:
        """Largest ``|V|^2 + 2 V.a`` over pieces (non-positive when admissible)."""
        a = self.a
        ex = []
        for V in (self.V_minus, self.V_plus):
            ex.append(np.sum(V * V, axis=1) + 2.0 * V @ a)
        return float(np.max(np.concatenate(ex)))

    def is_admissible(self, tol: float = 1e-12) -> bool:
        return self.admissibility_excess() <= tol

    def scaled(self, c: float) -> "Perturbation":
        return Perturbation(c * self.v_minus, c * self.v_plus, self.alpha)


def _require_normal(record: SwitchRecord) -> None:
    if record.alpha is None or record.frame_rotation is None:
        raise NormalFormMissing("switch record has no two-control normal form")


def bang_controls(alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Unperturbed controls ``(alpha, -s)`` for ``t < 0`` and ``(alpha, s)`` for ``t > 0``."""
    s = math.sqrt(1.0 - alpha * alpha)
    return np.array([alpha, -s]), np.array([alpha, s])


def _disc(rng: np.random.Generator, size: int) -> np.ndarray:
    r = np.sqrt(rng.uniform(0.0, 1.0, size))
    th = rng.uniform(0.0, 2.0 * math.pi, size)
    return np.column_stack([r * np.cos(th), r * np.sin(th)])


def sample_admissible(record: SwitchRecord, m: int, seed=None, rng=None) -> Perturbation:
    """Controls drawn uniformly in the unit disc on each piece, minus the bang control."""
    _require_normal(record)
    rng = np.random.default_rng(seed) if rng is None else rng
    um, up = bang_controls(record.alpha)
    return Perturbation(_disc(rng, m) - um, _disc(rng, m) - up, record.alpha)


def reference_perturbation(record: SwitchRecord, m: int = 1) -> Perturbation:
    """Antipodal perturbation ``v = -2 u_bar`` on both sides (admissible with equality)."""
    _require_normal(record)
    um, up = bang_controls(record.alpha)
    return Perturbation(np.tile(-2.0 * um, (m, 1)), np.tile(-2.0 * up, (m, 1)), record.alpha)


def project_zero_mean(pert: Perturbation, iterations: int = 2000, tol: float = 1e-13) -> Perturbation:
    """Nearest admissible perturbation with (numerically) zero mean.

    Dykstra's alternating projections between the admissible discs and the
    zero-sum subspace; the last projection is onto the discs, so the output
    is admissible and its mean is small rather than exactly zero.
    """
    um, up = bang_controls(pert.alpha)
    centers = np.vstack([np.tile(-um, (pert.m, 1)), np.tile(-up, (pert.m, 1))])

    def p_disc(x):
        d = x - centers
        r = np.maximum(1.0, np.linalg.norm(d, axis=1))
        return centers + d / r[:, None]

    def p_mean(x):
        return x - x.mean(axis=0)

    x = pert.pieces().copy()
    pa = np.zeros_like(x)
    pb = np.zeros_like(x)
    for _ in range(iterations):
        y = p_disc(x + pa)
        pa = x + pa - y
        x_new = p_mean(y + pb)
        pb = y + pb - x_new
        done = np.max(np.abs(x_new - x)) <= tol
        x = x_new
        if done:
            break
    x = p_disc(x)
    return Perturbation(x[: pert.m], x[pert.m:], pert.alpha)


# --- kernels -----------------------------------------------------------------

@dataclass(frozen=True)
class Kernels:
    """Pairings of the switching covector with the brackets that enter J."""

    c_drift: float  # |h02| sqrt(1 - alpha^2)
    c_vv: float  # |h12|
    a: np.ndarray

    def k_minus(self, v) -> np.ndarray:
        V = np.asarray(v, dtype=float) * np.array([1.0, -1.0])
        return -self.c_drift * (V @ self.a)

    def k_plus(self, v) -> np.ndarray:
        return self.c_drift * (np.asarray(v, dtype=float) @ self.a)

    def k_vv(self, v_tau, v_t) -> np.ndarray:
        return -self.c_vv * _cross(np.asarray(v_tau, dtype=float), np.asarray(v_t, dtype=float))


def bracket_kernels(sys: ControlAffineSystem, lam: ExtremalPoint, record: SwitchRecord) -> Kernels:
    _require_normal(record)
    a = np.array([record.alpha, math.sqrt(1.0 - record.alpha**2)])
    return Kernels(abs(record.h02) * a[1], abs(record.h12), a)


@dataclass
class DirectPairings:
    """The same pairings evaluated straight from brackets of the rotated fields."""

    pairs: list  # (value, jacobian) of f0, f1', f2' at q
    p: np.ndarray
    q: np.ndarray
    alpha: float

    @classmethod
    def build(cls, sys: ControlAffineSystem, lam: ExtremalPoint, record: SwitchRecord):
        _require_normal(record)
        q, O = lam.q, record.frame_rotation
        raw = [(eval_field(f, q), jacobian(f, q)) for f in sys.all_fields]
        rot = []
        for i in range(2):
            val = sum(O[i, j] * raw[j + 1][0] for j in range(2))
            jac = sum(O[i, j] * raw[j + 1][1] for j in range(2))
            rot.append((val, jac))
        return cls([raw[0]] + rot, lam.p, q, record.alpha)

    def _combo(self, c):
        val = sum(ci * pv[0] for ci, pv in zip(c, self.pairs))
        jac = sum(ci * pv[1] for ci, pv in zip(c, self.pairs))
        return val, jac

    def _pair(self, x, y) -> float:
        return float(self.p @ lie_bracket(x, y, self.q))

    def minus(self, v) -> float:
        s = math.sqrt(1 - self.alpha**2)
        return self._pair(self._combo([1.0, self.alpha, -s]), self._combo([0.0, v[0], v[1]]))

    def plus(self, v) -> float:
        s = math.sqrt(1 - self.alpha**2)
        return self._pair(self._combo([1.0, self.alpha, s]), self._combo([0.0, v[0], v[1]]))

    def vv(self, v_tau, v_t) -> float:
        return self._pair(self._combo([0.0, *v_tau]), self._combo([0.0, *v_t]))


# --- the functional ----------------------------------------------------------

@dataclass
class JReport:
    value: float
    drift_term: float
    double_term: float
    remainder_term: float
    eps: float
    const: float
    extras: dict = field(default_factory=dict)

    @property
    def analytic(self) -> float:
        """J without the remainder term."""
        return self.drift_term + self.double_term

    def to_dict(self) -> dict:
        return {
            "J": self.value,
            "drift_term": self.drift_term,
            "double_term": self.double_term,
            "remainder_term": self.remainder_term,
            "eps": self.eps,
            "const": self.const,
        }


def _check(pert: Perturbation, tol: float) -> None:
    ex = pert.admissibility_excess()
    if ex > tol:
        raise InadmissiblePerturbation(f"admissibility excess {ex:.3e} > {tol:.1e}")


def _double_sum(kern: Kernels, z: np.ndarray, w: float) -> float:
    # pieces i < j (t in piece i, tau in piece j); same-piece terms vanish by antisymmetry
    if kern.c_vv == 0.0:
        return 0.0
    c = np.cumsum(z, axis=0)
    before = np.vstack([np.zeros(2), c[:-1]])  # sum of z_i over i < j
    return float(-kern.c_vv * w * w * np.sum(_cross(z, before)))


def _resolve_const(record: SwitchRecord, const: Optional[float]) -> float:
    return abs(record.h02) if const is None else float(const)


def j_functional(
    sys: ControlAffineSystem,
    lam: ExtremalPoint,
    record: SwitchRecord,
    pert: Perturbation,
    eps: float,
    const: Optional[float] = None,
    kernels: Optional[Kernels] = None,
    adm_tol: float = 1e-12,
) -> JReport:
    """J by exact quadrature over the pieces, in the ``t in [-1, 1]`` form."""
    _check(pert, adm_tol)
    kern = bracket_kernels(sys, lam, record) if kernels is None else kernels
    const = _resolve_const(record, const)
    w = pert.width
    edges = pert.breakpoints()
    lo_m, hi_m = edges[: pert.m], edges[1 : pert.m + 1]
    lo_p, hi_p = edges[pert.m : -1], edges[pert.m + 1 :]
    # int 2t dt over [a, b] = b^2 - a^2
    drift = float(np.sum((hi_m**2 - lo_m**2) * kern.k_minus(pert.v_minus)))
    drift += float(np.sum((hi_p**2 - lo_p**2) * kern.k_plus(pert.v_plus)))
    double = _double_sum(kern, pert.pieces(), w)
    abs_t = np.concatenate([(lo_m**2 - hi_m**2) / 2, (hi_p**2 - lo_p**2) / 2])
    R = float(np.sum(abs_t * np.sum(pert.pieces() ** 2, axis=1)))
    rem = eps * const * R
    return JReport(drift + double + rem, drift, double, rem, eps, const, {"R": R})


def j_symmetrized(
    sys: ControlAffineSystem,
    lam: ExtremalPoint,
    record: SwitchRecord,
    pert: Perturbation,
    eps: float,
    const: Optional[float] = None,
    kernels: Optional[Kernels] = None,
    adm_tol: float = 1e-12,
) -> JReport:
    """Same functional after reflecting the negative half-line onto ``[0, 1]``."""
    _check(pert, adm_tol)
    kern = bracket_kernels(sys, lam, record) if kernels is None else kernels
    const = _resolve_const(record, const)
    m = pert.m
    t = np.linspace(0.0, 1.0, m + 1)
    tw = (t[1:] ** 2 - t[:-1] ** 2) / 2  # int t dt per piece
    Vm, Vp = pert.V_tilde_minus, pert.V_tilde_plus
    drift = 2.0 * kern.c_drift * float(np.sum(tw * (Vm @ kern.a)) + np.sum(tw * (Vp @ kern.a)))
    double = _double_sum(kern, pert.pieces(), pert.width)
    S = float(np.sum(tw * np.sum(Vm**2, axis=1)) + np.sum(tw * np.sum(Vp**2, axis=1)))
    rem = eps * const * S
    return JReport(drift + double + rem, drift, double, rem, eps, const, {"S": S})


@dataclass
class BoundCheck:
    holds: bool
    J: float
    bound: float
    slack: float


def j_bound(report: JReport, record: SwitchRecord, pert: Perturbation) -> float:
    """Upper bound ``-|h02| s S + eps const S + D`` (``D`` the double term).

    For ``h12 = 0`` and ``const = |h02|`` it reads ``-|h02| (s - eps) S``.
    """
    s = math.sqrt(1.0 - record.alpha**2)
    t = np.linspace(0.0, 1.0, pert.m + 1)
    tw = (t[1:] ** 2 - t[:-1] ** 2) / 2
    S = float(
        np.sum(tw * np.sum(pert.V_tilde_minus**2, axis=1))
        + np.sum(tw * np.sum(pert.V_tilde_plus**2, axis=1))
    )
    return -abs(record.h02) * s * S + report.eps * report.const * S + report.double_term


def j_bound_check(
    report: JReport, record: SwitchRecord, pert: Perturbation, slack: float = 1e-12
) -> BoundCheck:
    b = j_bound(report, record, pert)
    return BoundCheck(report.value <= b + slack, report.value, b, slack)


# --- endpoint map ------------------------------------------------------------

def endpoint_gap(
    sys: ControlAffineSystem,
    lam: ExtremalPoint,
    record: SwitchRecord,
    pert: Perturbation,
    eps: float,
    rtol: float = 1e-13,
    atol: float = 1e-15,
    adm_tol: float = 1e-12,
) -> float:
    """``<p, Phi(q) - q> / eps^2`` for the four-stage composition ``F_eps(v)``.

    Starting at ``q``: flow ``f-`` for time ``-eps``, then ``f- + g_v`` over
    ``[-eps, 0]``, then ``f+ + g_v`` over ``[0, eps]``, then ``f+`` for time
    ``-eps``; the perturbation is rescaled as ``v(t / eps)``.
    """
    _check(pert, adm_tol)
    if not eps > 0:
        raise ValueError("eps must be positive")
    rot = sys.rotate_controls(record.frame_rotation)
    um, up = bang_controls(record.alpha)

    def flow(q, u, duration):
        field_u = rot.controlled_field(u)

        def fun(t, y):
            return eval_field(field_u, y)

        try:
            sol = dopri5(fun, 0.0, q, duration, rtol=rtol, atol=atol)
        except (EvaluationDomainError, StepFailure, OverflowError) as exc:
            raise ChartExit(f"flow left the chart: {exc}") from exc
        return sol.y[-1]

    q = np.array(lam.q, dtype=float)
    h = eps * pert.width
    q = flow(q, um, -eps)
    for v in pert.v_minus:
        q = flow(q, um + v, h)
    for v in pert.v_plus:
        q = flow(q, up + v, h)
    q = flow(q, up, -eps)
    return float(lam.p @ (q - lam.q)) / (eps * eps)


def convergence_slope(eps_values, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(eps)``."""
    x = np.log(np.asarray(eps_values, dtype=float))
    with np.errstate(divide="ignore"):
        y = np.log(np.abs(np.asarray(errors, dtype=float)))
    if not np.all(np.isfinite(y)):
        return float("nan")
    return float(np.polyfit(x, y, 1)[0])


# --- sampling campaign -------------------------------------------------------

@dataclass
class CampaignResult:
    samples: int
    pieces: int
    eps: float
    seed: int
    const: float
    J_min: float
    J_max: float
    J_mean: float
    violations: int
    bound_violations: int
    zero_samples: int
    eps_bar_empirical: float
    records: Optional[list] = None

    def to_dict(self) -> dict:
        out = {
            "samples": self.samples,
            "pieces": self.pieces,
            "eps": self.eps,
            "seed": self.seed,
            "const": self.const,
            "J_min": self.J_min,
            "J_max": self.J_max,
            "J_mean": self.J_mean,
            "violations": self.violations,
            "bound_violations": self.bound_violations,
            "zero_samples": self.zero_samples,
            "eps_bar_empirical": self.eps_bar_empirical,
        }
        if self.records is not None:
            out["records"] = self.records
        return out


def campaign(
    sys: ControlAffineSystem,
    lam: ExtremalPoint,
    record: SwitchRecord,
    samples: int,
    pieces: int,
    eps: float,
    seed: int = 0,
    const: Optional[float] = None,
    keep_records: bool = False,
    slack: float = 1e-12,
) -> CampaignResult:
    """Sample admissible perturbations and evaluate J and its bound on each.

    Per-sample generators are spawned from ``seed`` so any single sample can
    be reproduced. ``eps_bar_empirical`` is the largest ``eps`` for which every
    nonzero sample still has ``J < 0``.
    """
    kern = bracket_kernels(sys, lam, record)
    const_v = _resolve_const(record, const)
    children = np.random.SeedSequence(seed).spawn(samples)
    Js, recs = [], []
    viol = bviol = zeros = 0
    eps_bar = math.inf
    for i, child in enumerate(children):
        pert = sample_admissible(record, pieces, rng=np.random.default_rng(child))
        rep = j_functional(sys, lam, record, pert, eps, const_v, kern)
        if pert.is_zero():
            zeros += 1
        else:
            Js.append(rep.value)
            if not rep.value < 0.0:
                viol += 1
            R = rep.extras["R"]
            if rep.analytic >= 0.0:
                eps_bar = 0.0
            elif const_v > 0 and R > 0:
                eps_bar = min(eps_bar, -rep.analytic / (const_v * R))
        bc = j_bound_check(rep, record, pert, slack)
        if not bc.holds:
            bviol += 1
        if keep_records:
            recs.append({"index": i, **rep.to_dict(), "bound": bc.bound})
    arr = np.array(Js) if Js else np.zeros(1)
    return CampaignResult(
        samples, pieces, eps, seed, const_v,
        float(arr.min()), float(arr.max()), float(arr.mean()),
        viol, bviol, zeros, float(eps_bar),
        recs if keep_records else None,
    )
