"""Switching through the singular locus: transversality, gap parameter, jump.

At ``lam_bar`` on the locus, with ``H0I = (<p, [f0, f_i]>)_i`` and
``HIJ = (<p, [f_i, f_j]>)_ij`` (skew), the unique broken extremal switches
from ``u- = (-d I + HIJ)^{-1} H0I`` to ``u+ = (d I + HIJ)^{-1} H0I`` where
``d > 0`` solves ``H0I^T (d^2 I - HIJ^2)^{-1} H0I = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    BootstrapInconsistent,
    DegenerateFrame,
    NoRoot,
    NotOnLocus,
    SingularLocus,
    WrongDimensions,
)
from .extremal import (
    ExtremalArc,
    ExtremalPoint,
    frozen_rhs,
    hamiltonian_data,
    integrate_arc,
    pmp_control,
    rho_tolerance,
)
from .fieldexpr import eval_field, jacobian, lie_bracket
from .integrate import HermiteSegment, rk4_step
from .system import DEFAULT_TOLERANCES, ControlAffineSystem, Tolerances


@dataclass(frozen=True)
class SwitchRecord:
    lambda_bar: ExtremalPoint
    H0I: np.ndarray
    HIJ: np.ndarray
    margin: float
    d: Optional[float] = None
    u_minus: Optional[np.ndarray] = None
    u_plus: Optional[np.ndarray] = None
    alpha: Optional[float] = None
    theta_hat: Optional[float] = None
    frame_rotation: Optional[np.ndarray] = None
    h02: Optional[float] = None  # in the normal frame
    h12: Optional[float] = None  # in the normal frame
    tolerances: Tolerances = field(default=DEFAULT_TOLERANCES, repr=False)

    @property
    def k(self) -> int:
        return self.H0I.size

    @property
    def has_normal_form(self) -> bool:
        return self.frame_rotation is not None

    def to_dict(self) -> dict:
        def arr(x):
            return None if x is None else np.asarray(x).tolist()

        return {
            "q_bar": arr(self.lambda_bar.q),
            "p_bar": arr(self.lambda_bar.p),
            "H0I": arr(self.H0I),
            "HIJ": arr(self.HIJ),
            "margin": self.margin,
            "d": self.d,
            "u_minus": arr(self.u_minus),
            "u_plus": arr(self.u_plus),
            "alpha": self.alpha,
            "theta_hat": self.theta_hat,
            "frame_rotation": arr(self.frame_rotation),
            "h02_normal": self.h02,
            "h12_normal": self.h12,
        }


def switch_data(
    sys: ControlAffineSystem, lam_bar: ExtremalPoint, tols: Tolerances = DEFAULT_TOLERANCES
) -> tuple[np.ndarray, np.ndarray]:
    q, p = lam_bar.q, lam_bar.p
    hd = hamiltonian_data(sys, lam_bar)
    tol = rho_tolerance(sys, q, p, tols)
    if hd.rho > tol:
        raise NotOnLocus(f"|h_I| = {hd.rho:.3e} exceeds the locus tolerance {tol:.3e}")
    pairs = [(eval_field(f, q), jacobian(f, q)) for f in sys.all_fields]
    k = sys.k
    H0I = np.array([p @ lie_bracket(pairs[0], pairs[i + 1], q) for i in range(k)])
    HIJ = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            HIJ[i, j] = p @ lie_bracket(pairs[i + 1], pairs[j + 1], q)
    return H0I, HIJ - HIJ.T


def _skew(HIJ) -> np.ndarray:
    H = np.atleast_2d(np.asarray(HIJ, dtype=float))
    return 0.5 * (H - H.T)


def transversality_margin(H0I, HIJ) -> float:
    """Distance from ``H0I`` to the ellipsoid ``HIJ * closed unit ball``."""
    b = np.asarray(H0I, dtype=float)
    H = _skew(HIJ)
    w, V = np.linalg.eigh(H.T @ H)
    w = np.clip(w, 0.0, None)
    c = V.T @ (H.T @ b)
    big = w > 1e-14 * max(1.0, float(w.max(initial=0.0)))

    def u_of(mu: float) -> np.ndarray:
        coeff = np.zeros_like(c)
        coeff[big] = c[big] / (w[big] + mu)
        return V @ coeff

    u_ls = u_of(0.0)  # minimum-norm least-squares solution
    if np.linalg.norm(u_ls) <= 1.0:
        return float(np.linalg.norm(b - H @ u_ls))
    # boundary case: |u(mu)| decreases strictly in mu > 0
    lo, hi = 0.0, 1.0
    while np.linalg.norm(u_of(hi)) > 1.0:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.linalg.norm(u_of(mid)) > 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    u = u_of(hi)
    u /= max(1.0, float(np.linalg.norm(u)))
    return float(np.linalg.norm(b - H @ u))


def gap_function(H0I, HIJ, d: float) -> float:
    """``phi(d) = H0I^T (d^2 I + HIJ^T HIJ)^{-1} H0I`` (equals the quoted form for skew HIJ)."""
    b = np.asarray(H0I, dtype=float)
    H = _skew(HIJ)
    M = d * d * np.eye(b.size) + H.T @ H
    return float(b @ np.linalg.solve(M, b))


@dataclass
class GapSolution:
    d: float
    phi: float
    trace: list[tuple[float, float]]

    def is_monotone(self) -> bool:
        pts = sorted(self.trace)
        return all(a[1] > b[1] for a, b in zip(pts, pts[1:]) if a[0] < b[0])


def solve_gap(H0I, HIJ, rtol: float = 1e-12, max_halvings: int = 1100) -> GapSolution:
    """Bisection for the unique ``d > 0`` with ``phi(d) = 1``; keeps the trace."""
    b = np.asarray(H0I, dtype=float)
    H = _skew(HIJ)
    w, V = np.linalg.eigh(H.T @ H)
    w = np.clip(w, 0.0, None)
    c2 = (V.T @ b) ** 2

    def phi(d: float) -> float:
        den = d * d + w
        if np.any(den == 0.0):
            # limit d -> 0+: infinite only if H0I has a component in ker HIJ
            return math.inf if np.any(c2[den == 0.0] > 0.0) else float(np.sum(c2[den > 0] / den[den > 0]))
        return float(np.sum(c2 / den))

    trace: list[tuple[float, float]] = []
    d_hi = float(np.linalg.norm(b))
    if d_hi == 0.0:
        raise NoRoot("H0I = 0: the gap equation has no positive root")
    trace.append((d_hi, phi(d_hi)))
    d_lo = d_hi
    for _ in range(max_halvings):
        d_lo *= 0.5
        val = phi(d_lo)
        trace.append((d_lo, val))
        if val > 1.0:
            break
        if d_lo == 0.0:
            break
    else:
        d_lo = 0.0
    if not trace[-1][1] > 1.0:
        raise NoRoot(
            f"phi(0+) <= 1 (phi({trace[-1][0]:.3e}) = {trace[-1][1]!r}); transversality fails"
        )
    lo, hi = d_lo, d_hi
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        val = phi(mid)
        trace.append((mid, val))
        if val > 1.0:
            lo = mid
        else:
            hi = mid
    d = 0.5 * (lo + hi)
    # Newton polish inside the final bracket
    for _ in range(3):
        dphi = -2.0 * d * float(np.sum(c2 / (d * d + w) ** 2))
        if dphi == 0.0:
            break
        nxt = d - (phi(d) - 1.0) / dphi
        if not lo <= nxt <= hi or nxt == d:
            break
        d = nxt
    return GapSolution(d, phi(d), trace)


def gap_parameter(H0I, HIJ, rtol: float = 1e-12) -> float:
    return solve_gap(H0I, HIJ, rtol).d


def jump_controls(H0I, HIJ, d: float) -> tuple[np.ndarray, np.ndarray]:
    b = np.asarray(H0I, dtype=float)
    H = _skew(HIJ)
    if not d > 0:
        raise ValueError("gap parameter must be positive")
    eye = np.eye(b.size)
    u_plus = np.linalg.solve(d * eye + H, b)
    u_minus = np.linalg.solve(-d * eye + H, b)
    return u_minus, u_plus


def explicit_jump_k2(h01: float, h02: float, h12: float) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form jump for two controls (``r^2 = h01^2 + h02^2``)."""
    r2 = h01 * h01 + h02 * h02
    s = math.sqrt(r2 - h12 * h12)

    def u(sign):
        return np.array([-h02 * h12 + sign * h01 * s, h01 * h12 + sign * h02 * s]) / r2

    return u(-1.0), u(1.0)


def analyze_switch(
    sys: ControlAffineSystem, lam_bar: ExtremalPoint, tols: Tolerances = DEFAULT_TOLERANCES
) -> SwitchRecord:
    """Full switching record; ``d`` and ``u+-`` only when transversality holds."""
    H0I, HIJ = switch_data(sys, lam_bar, tols)
    margin = transversality_margin(H0I, HIJ)
    rec = SwitchRecord(lam_bar, H0I, HIJ, margin, tolerances=tols)
    if margin <= tols.margin_tol:
        return rec
    sol = solve_gap(H0I, HIJ, tols.gap_rtol)
    u_minus, u_plus = jump_controls(H0I, HIJ, sol.d)
    rec = replace(rec, d=sol.d, u_minus=u_minus, u_plus=u_plus)
    if sys.k == 2:
        rec = normal_form(rec)
    return rec


def normal_form(record: SwitchRecord) -> SwitchRecord:
    """Orthogonal control frame with ``h01 = 0``, ``h02 > 0``, ``h12 <= 0``.

    The frame matrix ``O`` (new fields ``f'_i = sum_j O[i, j] f_j``) is a
    rotation, composed with the reflection ``f2 -> -f2`` applied first when
    the rotated ``h12`` would be positive.
    """
    if record.k != 2:
        raise WrongDimensions("the normal form is defined for two controls only")
    b = record.H0I
    h12 = float(record.HIJ[0, 1])
    r = float(np.linalg.norm(b))
    if r == 0.0:
        raise DegenerateFrame("H0I = 0; no frame can make h02 positive")
    refl = np.eye(2)
    if h12 > 0.0:
        refl = np.diag([1.0, -1.0])
    b1 = refl @ b
    # rotation taking b1 to (0, r)
    c, s = b1[1] / r, b1[0] / r
    rot = np.array([[c, -s], [s, c]])
    O = rot @ refl
    h12_new = float(np.linalg.det(O)) * h12
    alpha = abs(h12_new) / r
    if alpha >= 1.0:
        raise DegenerateFrame(f"alpha = {alpha!r} >= 1; transversality margin must be positive")
    theta = math.atan2(math.sqrt(1.0 - alpha * alpha), alpha)
    return replace(record, alpha=alpha, theta_hat=theta, frame_rotation=O, h02=r, h12=h12_new)


def normal_form_controls(record: SwitchRecord) -> tuple[np.ndarray, np.ndarray]:
    """``u+-`` expressed in the normal frame: ``(alpha, -+sqrt(1 - alpha^2))``."""
    a = record.alpha
    s = math.sqrt(1.0 - a * a)
    return np.array([a, -s]), np.array([a, s])


# --- stitching ---------------------------------------------------------------

@dataclass
class BrokenExtremal:
    pre_arc: ExtremalArc
    post_arc: ExtremalArc
    switch: SwitchRecord
    t_bar: float = 0.0

    def state_at(self, t: float) -> ExtremalPoint:
        arc = self.pre_arc if t <= self.t_bar else self.post_arc
        return arc.state_at(t)

    def trajectory(self) -> dict[str, np.ndarray]:
        """Both arcs merged in increasing time; ``t_bar`` appears once per side."""
        pre = self.pre_arc
        post = self.post_arc
        order = np.argsort(pre.t, kind="stable")
        cat = lambda a, b: np.concatenate([a[order], b])  # noqa: E731
        return {
            "t": cat(pre.t, post.t),
            "q": cat(pre.q, post.q),
            "p": cat(pre.p, post.p),
            "u": cat(pre.u, post.u),
            "H": cat(pre.H, post.H),
            "rho": cat(pre.rho, post.rho),
        }

    def rows(self) -> np.ndarray:
        tr = self.trajectory()
        return np.column_stack([tr["t"], tr["q"], tr["p"], tr["u"], tr["H"], tr["rho"]])

    def csv_header(self) -> list[str]:
        return self.post_arc.csv_header()


def _horizon_pair(horizon: Union[float, Sequence[float]]) -> tuple[float, float]:
    if np.ndim(horizon) == 0:
        h = float(horizon)
        return -h, h
    lo, hi = (float(x) for x in horizon)
    if not lo < 0.0 < hi:
        raise ValueError("horizon interval must contain the switching time 0 in its interior")
    return lo, hi


def _bootstrapped_arc(sys, lam_bar, u_bar, t_end, h_boot, tols) -> ExtremalArc:
    n = sys.n
    direction = 1.0 if t_end > 0 else -1.0
    hs = direction * h_boot

    def frozen(t, y):
        qd, pd = frozen_rhs(sys, y[:n], y[n:], u_bar)
        return np.concatenate([qd, pd])

    y0 = lam_bar.as_vector()
    y1 = rk4_step(frozen, 0.0, y0, hs)
    lam1 = ExtremalPoint.from_vector(y1)
    hd1 = hamiltonian_data(sys, lam1)
    try:
        u1 = pmp_control(hd1.hI, rho_tolerance(sys, lam1.q, lam1.p, tols))
    except SingularLocus as exc:
        raise BootstrapInconsistent(f"bootstrap step did not leave the locus: {exc}") from exc
    mismatch = float(np.linalg.norm(u1 - u_bar))
    if mismatch > tols.bootstrap_tol:
        raise BootstrapInconsistent(
            f"feedback control after bootstrap differs from the jump control by {mismatch:.3e}"
        )
    arc = integrate_arc(sys, lam1, (hs, t_end), tols)
    hd0 = hamiltonian_data(sys, lam_bar)
    boot = HermiteSegment(0.0, hs, y0, y1, frozen(0.0, y0), frozen(hs, y1))
    return ExtremalArc(
        t=np.concatenate([[0.0], arc.t]),
        q=np.vstack([lam_bar.q, arc.q]),
        p=np.vstack([lam_bar.p, arc.p]),
        u=np.vstack([u_bar, arc.u]),
        H=np.concatenate([[hd0.H], arc.H]),
        rho=np.concatenate([[hd0.rho], arc.rho]),
        reason=arc.reason,
        direction=direction,
        segments=[boot] + arc.segments,
        t_event=arc.t_event,
        t_locus=arc.t_locus,
    )


def stitch_broken_extremal(
    sys: ControlAffineSystem,
    lam_bar: ExtremalPoint,
    horizon: Union[float, Sequence[float]],
    tols: Tolerances = DEFAULT_TOLERANCES,
    record: Optional[SwitchRecord] = None,
) -> BrokenExtremal:
    """The broken extremal through ``lam_bar`` with switching time 0.

    Each side starts with one frozen-control RK4 step of length
    ``h_boot * (horizon length)`` and continues with the feedback flow.
    """
    lo, hi = _horizon_pair(horizon)
    rec = analyze_switch(sys, lam_bar, tols) if record is None else record
    if rec.d is None:
        raise NoRoot(
            f"transversality margin {rec.margin!r} <= {tols.margin_tol!r}; no broken extremal"
        )
    h_boot = tols.h_boot * (hi - lo)
    post = _bootstrapped_arc(sys, lam_bar, rec.u_plus, hi, h_boot, tols)
    pre = _bootstrapped_arc(sys, lam_bar, rec.u_minus, lo, h_boot, tols)
    return BrokenExtremal(pre, post, rec, 0.0)
