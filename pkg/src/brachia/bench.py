"""Benchmark scenarios and ground-truth oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ExprSyntaxError, ScenarioError, WrongDimensions
from .extremal import ExtremalPoint, hamiltonian_data
from .fieldexpr import eval_field_batch
from .system import DEFAULT_TOLERANCES, ControlAffineSystem, Tolerances


# --- scenarios ---------------------------------------------------------------

@dataclass
class Scenario:
    name: str
    system: ControlAffineSystem
    q_bar: np.ndarray
    p_bar: np.ndarray
    horizon: tuple[float, float]
    tolerances: Tolerances = DEFAULT_TOLERANCES
    normalize: bool = True
    expected: dict = field(default_factory=dict)
    oracle: str = "none"  # closed-form | brute-force | none
    source: dict = field(default_factory=dict, repr=False)

    @property
    def lam(self) -> ExtremalPoint:
        return ExtremalPoint(self.q_bar, self.p_bar)

    @property
    def n(self) -> int:
        return self.system.n

    @property
    def k(self) -> int:
        return self.system.k

    def to_dict(self) -> dict:
        """JSON-ready description; re-loading it reproduces the scenario."""
        drift, fields_ = self.system.to_strings()
        out = {
            "name": self.name,
            "dim": self.n,
            "controls": self.k,
            "drift": drift,
            "fields": fields_,
            "base_point": [float(x) for x in self.q_bar],
            "covector": [float(x) for x in self.p_bar],
            "horizon": [float(self.horizon[0]), float(self.horizon[1])],
            "normalize": self.normalize,
            "oracle": self.oracle,
        }
        overrides = {
            k: v for k, v in self.tolerances.as_dict().items() if DEFAULT_TOLERANCES.as_dict()[k] != v
        }
        if overrides:
            out["tolerances"] = overrides
        if self.expected:
            out["expected"] = dict(self.expected)
        return out

    def echo(self) -> dict:
        """Scenario as loaded (before any normalization) plus the covector actually used."""
        out = dict(self.source) if self.source else self.to_dict()
        out["covector_used"] = [float(x) for x in self.p_bar]
        return out

    def self_test(self) -> dict:
        """Expected verdicts that disagree with the certify module: ``{key: (expected, got)}``."""
        from .certify import certify_all, classify_3_2

        got = {c.theorem: c.verdict.value for c in certify_all(self.system, self.lam, self.tolerances)}
        if self.n == 3 and self.k == 2:
            got["classification"] = classify_3_2(self.system, self.lam, self.tolerances).label
        return {k: (v, got.get(k)) for k, v in self.expected.items() if got.get(k) != v}


def _req(data: dict, key: str):
    if key not in data:
        raise ScenarioError(key, "missing required field")
    return data[key]


def _reals(key: str, value, length: Optional[int] = None) -> np.ndarray:
    try:
        arr = np.array([float(x) for x in value])
    except (TypeError, ValueError):
        raise ScenarioError(key, "must be a list of reals") from None
    if length is not None and arr.size != length:
        raise ScenarioError(key, f"expected {length} entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(key, "entries must be finite")
    return arr


def scenario_from_dict(data: dict, extra_tolerances: Optional[dict] = None) -> Scenario:
    """Validate a scenario description and build the scenario.

    With ``normalize`` (the default) the covector is rescaled so that
    ``H(lambda) = 1``; tolerance overrides from ``extra_tolerances`` take
    precedence over those in the file.
    """
    if not isinstance(data, dict):
        raise ScenarioError("<root>", "scenario must be a JSON object")
    name = str(_req(data, "name"))
    n = _req(data, "dim")
    k = _req(data, "controls")
    if not isinstance(n, int) or n < 1:
        raise ScenarioError("dim", "must be a positive integer")
    if not isinstance(k, int) or k < 1:
        raise ScenarioError("controls", "must be a positive integer")
    drift = _req(data, "drift")
    fields_ = _req(data, "fields")
    if not isinstance(drift, list) or len(drift) != n:
        raise ScenarioError("drift", f"dimension mismatch: expected {n} expressions")
    if not isinstance(fields_, list) or len(fields_) != k:
        raise ScenarioError("fields", f"expected {k} controlled fields")
    for i, f in enumerate(fields_):
        if not isinstance(f, list) or len(f) != n:
            raise ScenarioError(f"fields[{i}]", f"dimension mismatch: expected {n} expressions")
    try:
        sys = ControlAffineSystem.from_strings([str(s) for s in drift], [[str(s) for s in f] for f in fields_])
    except ExprSyntaxError as exc:
        raise ScenarioError("drift/fields", f"expression does not parse: {exc}") from exc
    except WrongDimensions as exc:
        raise ScenarioError("drift/fields", str(exc)) from exc
    q = _reals("base_point", _req(data, "base_point"), n)
    p = _reals("covector", _req(data, "covector"), n)
    if not np.any(p):
        raise ScenarioError("covector", "covector must be nonzero")
    hz = _reals("horizon", _req(data, "horizon"), 2)
    if not hz[0] < 0.0 < hz[1]:
        raise ScenarioError("horizon", "must be a pair t_lo < 0 < t_hi around the switching time")
    tols = DEFAULT_TOLERANCES
    try:
        tols = tols.with_overrides(data.get("tolerances") or {})
        tols = tols.with_overrides(extra_tolerances or {})
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError("tolerances", str(exc)) from exc
    normalize = data.get("normalize", True)
    if not isinstance(normalize, bool):
        raise ScenarioError("normalize", "must be true or false")
    if normalize:
        H = hamiltonian_data(sys, ExtremalPoint(q, p)).H
        if not H > 0.0:
            raise ScenarioError("covector", f"cannot normalize H = {H!r} to 1 (set normalize: false)")
        p = p / H
    expected = data.get("expected") or {}
    if not isinstance(expected, dict):
        raise ScenarioError("expected", "must be an object")
    oracle = str(data.get("oracle", "none"))
    return Scenario(name, sys, q, p, (float(hz[0]), float(hz[1])), tols, normalize, dict(expected), oracle, dict(data))


HEIS_F1 = ["1", "0", "-x2/2"]
HEIS_F2 = ["0", "1", "x1/2"]

_BUILTIN = [
    {
        "name": "slab3",
        "dim": 3,
        "controls": 2,
        "drift": ["0", "0", "1+x1"],
        "fields": [["1", "0", "0"], ["0", "1", "0"]],
        "base_point": [0.0, 0.0, 0.0],
        "covector": [0.0, 0.0, 1.0],
        "horizon": [-0.5, 0.5],
        "normalize": True,
        "oracle": "brute-force",
        "expected": {
            "T1": "OPTIMAL_T1",
            "T2": "HYPOTHESIS_FAILED",
            "T3": "OPTIMAL_T3",
            "classification": "INDEPENDENT_DRIFT",
        },
    },
    {
        "name": "heis3",
        "dim": 3,
        "controls": 2,
        "drift": ["0", "0", "1-2*x1"],
        "fields": [HEIS_F1, HEIS_F2],
        "base_point": [0.0, 0.0, 0.0],
        "covector": [0.0, 0.0, 1.0],
        "horizon": [-0.5, 0.5],
        "normalize": True,
        "oracle": "none",
        "expected": {
            "T1": "HYPOTHESIS_FAILED",
            "T2": "OPTIMAL_T2",
            "T3": "HYPOTHESIS_FAILED",
            "classification": "INDEPENDENT_DRIFT",
        },
    },
    {
        "name": "dint2",
        "dim": 2,
        "controls": 1,
        "drift": ["x2", "0"],
        "fields": [["0", "1"]],
        "base_point": [0.5, -1.0],
        "covector": [-1.0, 0.0],
        "horizon": [-1.0, 1.0],
        "normalize": True,
        "oracle": "closed-form",
        "expected": {"T1": "OPTIMAL_T1", "T2": "NOT_APPLICABLE", "T3": "NOT_APPLICABLE"},
    },
    {
        # drift inside the contact distribution (f0 = 2 f1); the extremal is abnormal
        "name": "open3",
        "dim": 3,
        "controls": 2,
        "drift": ["2", "0", "-x2"],
        "fields": [HEIS_F1, HEIS_F2],
        "base_point": [0.0, 0.0, 0.0],
        "covector": [0.0, 0.0, 1.0],
        "horizon": [-0.5, 0.5],
        "normalize": False,
        "oracle": "none",
        "expected": {
            "T1": "NOT_APPLICABLE",
            "T2": "NOT_APPLICABLE",
            "T3": "HYPOTHESIS_FAILED",
            "classification": "OPEN_CASE",
        },
    },
]


def builtin_scenario_dicts() -> list[dict]:
    import copy

    return copy.deepcopy(_BUILTIN)


def builtin_scenarios() -> list[Scenario]:
    return [scenario_from_dict(d) for d in builtin_scenario_dicts()]


def get_scenario(name: str, extra_tolerances: Optional[dict] = None) -> Scenario:
    for d in builtin_scenario_dicts():
        if d["name"] == name:
            return scenario_from_dict(d, extra_tolerances)
    known = ", ".join(d["name"] for d in _BUILTIN)
    raise ScenarioError("name", f"unknown scenario {name!r} (known: {known})")


# --- linear-systems oracles --------------------------------------------------

def kalman_rank(A, B, rank_tol: float = 1e-9) -> int:
    """Numerical rank of ``[B, AB, ..., A^{n-1} B]``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B[:, None]
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n:
        raise WrongDimensions("A must be n x n and B must have n rows")
    blocks, M = [], B
    for _ in range(n):
        blocks.append(M)
        M = A @ M
    C = np.hstack(blocks)
    s = np.linalg.svd(C, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


def double_integrator_time(x0) -> tuple[float, Optional[float]]:
    """Minimum time to the origin for ``x1' = x2, x2' = u, |u| <= 1``.

    Returns ``(T, switch_time)``; ``switch_time`` is None when the start
    already lies on the switching curve ``x1 = -x2 |x2| / 2``.
    """
    x1, x2 = (float(v) for v in x0)
    sigma = x1 + 0.5 * x2 * abs(x2)
    if sigma == 0.0:
        return abs(x2), None
    if sigma > 0.0:  # u = -1 first
        r = math.sqrt(x1 + 0.5 * x2 * x2)
        return x2 + 2.0 * r, x2 + r
    r = math.sqrt(-x1 + 0.5 * x2 * x2)
    return -x2 + 2.0 * r, -x2 + r


def double_integrator_path(x0, s) -> np.ndarray:
    """Closed-form optimal state at time ``s`` after leaving ``x0`` (held at 0 after arrival)."""
    x1, x2 = (float(v) for v in x0)
    T, ts = double_integrator_time(x0)
    sigma = x1 + 0.5 * x2 * abs(x2)
    u1 = -1.0 if sigma > 0 else 1.0
    if ts is None:
        u1, ts = (-math.copysign(1.0, x2) if x2 != 0 else 0.0), T
    s = min(max(float(s), 0.0), T)
    if s <= ts:
        return np.array([x1 + x2 * s + 0.5 * u1 * s * s, x2 + u1 * s])
    y1 = x1 + x2 * ts + 0.5 * u1 * ts * ts
    y2 = x2 + u1 * ts
    r = s - ts
    return np.array([y1 + y2 * r - 0.5 * u1 * r * r, y2 - u1 * r])


def dint2_ground_truth(scenario: Optional[Scenario] = None) -> dict:
    """Compare the stitched broken extremal of ``dint2`` with the closed form."""
    from .junction import stitch_broken_extremal

    sc = get_scenario("dint2") if scenario is None else scenario
    broken = stitch_broken_extremal(sc.system, sc.lam, sc.horizon, sc.tolerances)
    t_lo = sc.horizon[0]
    x0 = broken.pre_arc.q[-1] if broken.pre_arc.t[-1] == t_lo else broken.state_at(t_lo).q
    T_cf, ts_cf = double_integrator_time(x0)
    post = broken.post_arc
    # arrival: x2 crosses zero on the post arc (bisection on the dense output)
    lo, hi = 0.0, float(post.t[-1])
    end_x2 = post.state_at(hi).q[1]
    if end_x2 < -1e-9:
        arrival = math.nan
    elif end_x2 <= 0.0:
        arrival = hi
    else:
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if post.state_at(mid).q[1] < 0.0:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-14:
                break
        arrival = 0.5 * (lo + hi)
    q_arr = post.state_at(arrival).q if math.isfinite(arrival) else np.full(2, math.nan)
    traj = broken.trajectory()
    errs = [np.linalg.norm(q - double_integrator_path(x0, t - t_lo)) for t, q in zip(traj["t"], traj["q"])]
    return {
        "x0": x0.tolist(),
        "T_closed_form": T_cf,
        "switch_closed_form": ts_cf,
        "T_stitched": arrival - t_lo,
        "switch_stitched": 0.0 - t_lo,
        "arrival_distance": float(np.linalg.norm(q_arr)),
        "max_path_error": float(max(errs)),
        "H_drift": max(broken.pre_arc.H_drift(), broken.post_arc.H_drift()),
    }


# --- brute-force oracle ------------------------------------------------------

@dataclass
class OracleReport:
    passed: bool
    hits: int
    min_hit_time: Optional[float]
    T_ref: float
    threshold: float
    delta: float
    slack: float
    samples: int
    segments: int
    seed: int
    steps_per_segment: int
    reference_hit_time: Optional[float] = None
    label: str = "evidence"

    def to_dict(self) -> dict:
        return {
            "verdict": "PASS" if self.passed else "FAIL",
            "label": self.label,
            "hits": self.hits,
            "min_hit_time": self.min_hit_time,
            "T_ref": self.T_ref,
            "threshold": self.threshold,
            "delta": self.delta,
            "slack": self.slack,
            "samples": self.samples,
            "segments": self.segments,
            "seed": self.seed,
            "steps_per_segment": self.steps_per_segment,
            "reference_hit_time": self.reference_hit_time,
        }


def _ball(rng: np.random.Generator, count: int, k: int) -> np.ndarray:
    g = rng.normal(size=(count, k))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    r = rng.uniform(0.0, 1.0, size=(count, 1)) ** (1.0 / k)
    return g / norms * r


def _batch_rhs(sys: ControlAffineSystem):
    def rhs(Q: np.ndarray, U: np.ndarray) -> np.ndarray:
        out = eval_field_batch(sys.drift, Q)
        for i, f in enumerate(sys.fields):
            out = out + U[:, i : i + 1] * eval_field_batch(f, Q)
        return out

    return rhs


def _closest_approach(P0, P1, target):
    """Parameter in [0, 1] and distance of the closest point of each segment P0->P1."""
    d = P1 - P0
    dd = np.einsum("ij,ij->i", d, d)
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(dd > 0, np.einsum("ij,ij->i", target - P0, d) / dd, 0.0)
    s = np.clip(s, 0.0, 1.0)
    pts = P0 + s[:, None] * d
    return s, np.linalg.norm(pts - target, axis=1)


def simulate_controls(
    sys: ControlAffineSystem, q0, controls: np.ndarray, durations: np.ndarray, steps_per_segment: int,
    target=None, delta: float = 0.0,
):
    """Fixed-step RK4 for a batch of piecewise-constant controls.

    ``controls`` has shape ``(batch, segments, k)`` and ``durations`` shape
    ``(segments,)``. Returns the first time each trajectory comes closest to
    ``target`` inside its ``delta``-ball (``inf`` when it never enters), and
    the final states.
    """
    rhs = _batch_rhs(sys)
    batch = controls.shape[0]
    Q = np.tile(np.asarray(q0, dtype=float), (batch, 1))
    t = 0.0
    best = np.full(batch, np.inf)
    best_time = np.full(batch, np.inf)
    done = np.zeros(batch, dtype=bool)
    target = None if target is None else np.asarray(target, dtype=float)
    inside_prev = np.zeros(batch, dtype=bool)
    for j, dur in enumerate(durations):
        U = controls[:, j, :]
        h = dur / steps_per_segment
        for _ in range(steps_per_segment):
            k1 = rhs(Q, U)
            k2 = rhs(Q + 0.5 * h * k1, U)
            k3 = rhs(Q + 0.5 * h * k2, U)
            k4 = rhs(Q + h * k3, U)
            Qn = Q + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            if target is not None:
                s, dist = _closest_approach(Q, Qn, target)
                inside = dist <= delta
                improve = inside & ~done & (dist < best)
                best = np.where(improve, dist, best)
                best_time = np.where(improve, t + s * h, best_time)
                # leaving the ball after being inside fixes the hit time
                done |= inside_prev & ~inside
                inside_prev = inside
            Q, t = Qn, t + h
    return best_time, Q


def trajectory_diameter(points: np.ndarray) -> float:
    P = np.asarray(points, dtype=float)
    if len(P) < 2:
        return 0.0
    diff = P[:, None, :] - P[None, :, :]
    return float(np.sqrt(np.max(np.einsum("ijk,ijk->ij", diff, diff))))


def brute_force_oracle(
    sys: ControlAffineSystem,
    q_a,
    q_b,
    T_ref: float,
    samples: int = 2000,
    segments: int = 8,
    seed: int = 42,
    delta: Optional[float] = None,
    slack: float = 1e-3,
    steps_per_segment: int = 16,
    reference: Optional[Sequence[tuple[Sequence[float], float]]] = None,
    diameter: Optional[float] = None,
    batch_size: int = 1000,
) -> OracleReport:
    """Search random admissible controls for a faster way from ``q_a`` to ``q_b``.

    Controls are piecewise constant on ``segments`` equal pieces of
    ``[0, T_ref]`` with values uniform in the unit ball. A sample "hits" when
    it enters the ``delta``-ball around ``q_b``; its hit time is the time of
    closest approach inside the ball. ``reference`` optionally adds one
    known control, given as ``(u, duration)`` pieces (its last value is held
    until ``T_ref``). PASS means no hit earlier than ``T_ref (1 - slack)``;
    it is statistical evidence only.
    """
    q_a = np.asarray(q_a, dtype=float)
    q_b = np.asarray(q_b, dtype=float)
    k = sys.k
    if diameter is None:
        diameter = float(np.linalg.norm(q_b - q_a))
    if delta is None:
        delta = 1e-3 * diameter
    threshold = T_ref * (1.0 - slack)
    rng = np.random.default_rng(seed)
    hit_times = []
    durations = np.full(segments, T_ref / segments)
    done = 0
    while done < samples:
        b = min(batch_size, samples - done)
        U = _ball(rng, b * segments, k).reshape(b, segments, k)
        times, _ = simulate_controls(sys, q_a, U, durations, steps_per_segment, q_b, delta)
        hit_times.extend(times[np.isfinite(times)].tolist())
        done += b
    ref_time = None
    if reference is not None:
        pieces = [(np.asarray(u, dtype=float), float(dur)) for u, dur in reference]
        used = sum(d for _, d in pieces)
        if used < T_ref:
            pieces.append((pieces[-1][0], T_ref - used))
        steps = max(1, steps_per_segment)
        U = np.array([[u for u, _ in pieces]])
        durs = np.array([d for _, d in pieces])
        times, _ = simulate_controls(sys, q_a, U, durs, steps * 4, q_b, delta)
        if np.isfinite(times[0]):
            ref_time = float(times[0])
            hit_times.append(ref_time)
    min_hit = min(hit_times) if hit_times else None
    passed = min_hit is None or min_hit >= threshold
    return OracleReport(
        passed, len(hit_times), min_hit, float(T_ref), threshold, float(delta), slack,
        samples, segments, seed, steps_per_segment, ref_time,
    )


def broken_reference(broken) -> list[tuple[np.ndarray, float]]:
    """Piecewise-constant approximation of a broken extremal's control, in time order."""
    tr = broken.trajectory()
    t, u = tr["t"], tr["u"]
    pieces = []
    for i in range(len(t) - 1):
        dt = float(t[i + 1] - t[i])
        if dt > 0:
            pieces.append((0.5 * (u[i] + u[i + 1]), dt))
    return pieces


def scenario_oracle(
    sc: Scenario,
    samples: int = 2000,
    segments: int = 8,
    seed: int = 42,
    delta: Optional[float] = None,
    slack: float = 1e-3,
    inflate: float = 1.0,
) -> OracleReport:
    """Run the oracle between the endpoints of the scenario's broken extremal.

    ``inflate > 1`` gives the sanity inversion: the reference time is
    overstated, so the broken control itself must beat it.
    """
    from .junction import stitch_broken_extremal

    broken = stitch_broken_extremal(sc.system, sc.lam, sc.horizon, sc.tolerances)
    tr = broken.trajectory()
    q_a, q_b = tr["q"][0], tr["q"][-1]
    T = float(tr["t"][-1] - tr["t"][0]) * inflate
    return brute_force_oracle(
        sc.system, q_a, q_b, T, samples, segments, seed, delta, slack,
        reference=broken_reference(broken),
        diameter=trajectory_diameter(tr["q"]),
    )
