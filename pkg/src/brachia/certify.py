"""Numeric certificates for the sufficient-optimality hypotheses.

Three certificates are implemented:

* ``T1`` (flat case): ``p`` annihilates the Lie algebra generated by the
  controlled fields, ``h0 > 0``, and that algebra has rank ``n - 1`` (or a
  smaller rank that is constant near ``q``);
* ``T2`` (contact case, ``n = 3``, ``k = 2``): ``span{f1, f2}`` is contact at ``q``;
* ``T3`` (``k = 2``): ``p`` annihilates ``f1``, ``f2`` and ``[f1, f2]``.

Every check compares a raw pairing or determinant against an explicit,
scale-aware tolerance, and the raw values are kept in the diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .errors import NotOnLocus, PrereqFailed, WrongDimensions
from .extremal import ExtremalArc, ExtremalPoint, hamiltonian_data
from .fieldexpr import Dual, eval_field, iterated_brackets, lie_bracket, word_label
from .fieldexpr.dual import tangent, value
from .junction import switch_data, transversality_margin
from .serialize import plain
from .system import DEFAULT_TOLERANCES, ControlAffineSystem, Tolerances


class Verdict(str, Enum):
    OPTIMAL_T1 = "OPTIMAL_T1"
    OPTIMAL_T2 = "OPTIMAL_T2"
    OPTIMAL_T3 = "OPTIMAL_T3"
    OPEN_CASE = "OPEN_CASE"
    NOT_APPLICABLE = "NOT_APPLICABLE"
    HYPOTHESIS_FAILED = "HYPOTHESIS_FAILED"


ANALYTICITY_CAVEAT = "analyticity of the controlled fields is assumed, not checked"
SAMPLED_CAVEAT = "rank constancy near q is a sampled check (evidence, not proof)"


@dataclass
class OptimalityCertificate:
    verdict: Verdict
    theorem: str
    diagnostics: dict = field(default_factory=dict)
    caveats: list = field(default_factory=list)
    samples: Optional[dict] = None

    @property
    def optimal(self) -> bool:
        return self.verdict.value.startswith("OPTIMAL")

    def to_dict(self) -> dict:
        out = {
            "verdict": self.verdict.value,
            "theorem": self.theorem,
            "diagnostics": plain(self.diagnostics),
            "caveats": list(self.caveats),
        }
        if self.samples is not None:
            out["samples"] = plain(self.samples)
        return out


# --- Lie rank ----------------------------------------------------------------

@dataclass
class LieRank:
    rank: int
    stabilized_depth: int
    basis: list  # (word, vector) pairs for every generated bracket
    singular_values: np.ndarray

    def words(self) -> list[str]:
        return [word_label(w) for w, _ in self.basis]


def numerical_rank(vectors, rank_tol: float = 1e-9) -> tuple[int, np.ndarray]:
    if len(vectors) == 0:
        return 0, np.zeros(0)
    s = np.linalg.svd(np.atleast_2d(np.asarray(vectors, dtype=float)), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0, s
    return int(np.sum(s > rank_tol * s[0])), s


def lie_rank(sys_or_fields, q, depth_cap: Optional[int] = None, rank_tol: float = 1e-9) -> LieRank:
    """Rank of the Lie algebra generated by the controlled fields at ``q``.

    Brackets are added one generation (word length) at a time; the search
    stops once a generation adds no rank, the rank reaches ``n``, or
    ``depth_cap`` (default ``2n``) is hit.
    """
    fields = sys_or_fields.fields if isinstance(sys_or_fields, ControlAffineSystem) else tuple(sys_or_fields)
    n = fields[0].n
    cap = 2 * n if depth_cap is None else int(depth_cap)
    rank, sv, basis = 0, np.zeros(0), []
    depth = 0
    for m in range(1, cap + 1):
        words = iterated_brackets(fields, q, depth=m)
        gen = [(w, v) for w, v in words if len(w) == m]
        basis.extend(gen)
        new_rank, sv = numerical_rank([v for _, v in basis], rank_tol)
        depth = m
        grew = new_rank > rank
        rank = new_rank
        if rank >= n or (m > 1 and not grew):
            break
    return LieRank(rank, depth, basis, sv)


# --- shared prerequisites ----------------------------------------------------

def _perp_tol(tols: Tolerances, p: np.ndarray, columns) -> float:
    scale = max([1.0] + [float(np.linalg.norm(c)) for c in columns])
    return tols.tol_perp * float(np.linalg.norm(p)) * scale


def _locus_and_margin(sys, lam, tols) -> dict:
    try:
        H0I, HIJ = switch_data(sys, lam, tols)
    except NotOnLocus as exc:
        raise PrereqFailed(f"not on the singular locus: {exc}") from exc
    margin = transversality_margin(H0I, HIJ)
    if margin <= tols.margin_tol:
        raise PrereqFailed(f"transversality margin {margin!r} <= {tols.margin_tol!r}")
    return {"margin": margin, "margin_tol": tols.margin_tol, "H0I": H0I, "HIJ": HIJ}


def _normalized(sys, lam, tols) -> dict:
    hd = hamiltonian_data(sys, lam)
    if abs(hd.H - 1.0) > tols.normalization_tol:
        raise PrereqFailed(f"H(lambda) = {hd.H!r} is not normalized to 1")
    return {"H": hd.H, "h0": hd.h0, "normalization_tol": tols.normalization_tol}


# --- T1 ----------------------------------------------------------------------

def certify_flat(
    sys: ControlAffineSystem,
    lam: ExtremalPoint,
    tols: Tolerances = DEFAULT_TOLERANCES,
    sample_radius: float = 1e-2,
    sample_count: int = 100,
    seed: int = 0,
) -> OptimalityCertificate:
    diag = _locus_and_margin(sys, lam, tols)
    diag.update(_normalized(sys, lam, tols))
    q, p = lam.q, lam.p
    n = sys.n
    lr = lie_rank(sys, q, rank_tol=tols.rank_tol)
    pairings = [float(p @ v) for _, v in lr.basis]
    perp = max((abs(x) for x in pairings), default=0.0)
    ptol = _perp_tol(tols, p, [v for _, v in lr.basis])
    ok_perp = perp <= ptol
    ok_h0 = diag["h0"] > 0.0
    diag.update(
        lie_rank=lr.rank,
        stabilized_depth=lr.stabilized_depth,
        bracket_words=lr.words(),
        bracket_pairings=pairings,
        max_perp=perp,
        tol_perp=ptol,
        rank_tol=tols.rank_tol,
        h0_positive=ok_h0,
        h0_equals_H=abs(diag["h0"] - diag["H"]) <= tols.normalization_tol,
    )
    caveats = [ANALYTICITY_CAVEAT]
    samples = None
    if lr.rank == n - 1:
        ok_rank = True
        diag["rank_branch"] = "codimension_one"
    elif lr.rank < n - 1:
        rng = np.random.default_rng(seed)
        pts = q + rng.uniform(-sample_radius, sample_radius, size=(sample_count, n))
        ranks = [lie_rank(sys, x, rank_tol=tols.rank_tol).rank for x in pts]
        ok_rank = all(r == lr.rank for r in ranks)
        diag["rank_branch"] = "constant_rank"
        samples = {
            "count": sample_count,
            "radius": sample_radius,
            "seed": seed,
            "min_rank": min(ranks, default=lr.rank),
            "max_rank": max(ranks, default=lr.rank),
        }
        caveats.append(SAMPLED_CAVEAT)
    else:
        ok_rank = False
        diag["rank_branch"] = "full_rank"
    diag.update(perp_ok=ok_perp, rank_ok=ok_rank)
    verdict = Verdict.OPTIMAL_T1 if (ok_perp and ok_h0 and ok_rank) else Verdict.HYPOTHESIS_FAILED
    return OptimalityCertificate(verdict, "T1", diag, caveats, samples)


# --- T2 ----------------------------------------------------------------------

def _require_32(sys: ControlAffineSystem) -> None:
    if sys.n != 3 or sys.k != 2:
        raise WrongDimensions(f"requires n=3 and k=2, got n={sys.n}, k={sys.k}")


def _column_scale(cols) -> float:
    return float(np.prod([np.linalg.norm(c) for c in cols]))


def contact_test(sys: ControlAffineSystem, q, tol_det: float = DEFAULT_TOLERANCES.tol_det):
    """``(is_contact, det[f1 | f2 | [f1, f2]](q))``."""
    _require_32(sys)
    f1, f2 = sys.fields
    cols = [eval_field(f1, q), eval_field(f2, q), lie_bracket(f1, f2, q)]
    det = float(np.linalg.det(np.column_stack(cols)))
    return bool(det != 0.0 and abs(det) > tol_det * _column_scale(cols)), det


@dataclass
class ReebData:
    omega: np.ndarray
    curl: np.ndarray
    omega_wedge_domega: float
    xi: Optional[np.ndarray]
    normalized_by_drift: bool


def reeb_field(sys: ControlAffineSystem, q) -> ReebData:
    """Annihilator form of ``span{f1, f2}`` and its Reeb field at ``q``.

    ``omega`` is ``f1 x f2`` scaled so that ``omega(f0) = 1`` when the drift
    is transverse to the distribution. In R^3, ``d omega`` corresponds to
    ``curl omega``, so the Reeb field is ``curl omega / (omega . curl omega)``.
    """
    _require_32(sys)
    q = np.asarray(q, dtype=float)
    f0, (f1, f2) = sys.drift, sys.fields
    s0 = float(np.cross(eval_field(f1, q), eval_field(f2, q)) @ eval_field(f0, q))
    use_drift = abs(s0) > 1e-12
    J = np.zeros((3, 3))
    val = np.zeros(3)
    for j in range(3):
        x = [Dual(q[i], 1.0 if i == j else 0.0) for i in range(3)]
        a, b, c = (f.evaluate_generic(x) for f in (f1, f2, f0))
        cr = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
        if use_drift:
            s = cr[0] * c[0] + cr[1] * c[1] + cr[2] * c[2]
            cr = [ci / s for ci in cr]
        val = np.array([value(ci) for ci in cr])
        J[:, j] = [tangent(ci) for ci in cr]
    curl = np.array([J[2, 1] - J[1, 2], J[0, 2] - J[2, 0], J[1, 0] - J[0, 1]])
    w = float(val @ curl)
    xi = curl / w if w != 0.0 else None
    return ReebData(val, curl, w, xi, use_drift)


def certify_contact(
    sys: ControlAffineSystem, lam: ExtremalPoint, tols: Tolerances = DEFAULT_TOLERANCES
) -> OptimalityCertificate:
    _require_32(sys)
    diag = _locus_and_margin(sys, lam, tols)
    diag.update(_normalized(sys, lam, tols))
    is_contact, det = contact_test(sys, lam.q, tols.tol_det)
    diag.update(contact_det=det, tol_det=tols.tol_det, is_contact=is_contact)
    reeb = reeb_field(sys, lam.q)
    diag.update(
        reeb_field=None if reeb.xi is None else reeb.xi,
        reeb_omega=reeb.omega,
        reeb_omega_wedge_domega=reeb.omega_wedge_domega,
        reeb_omega_minus_p=float(np.linalg.norm(reeb.omega - lam.p)),
    )
    verdict = Verdict.OPTIMAL_T2 if is_contact else Verdict.HYPOTHESIS_FAILED
    return OptimalityCertificate(verdict, "T2", diag, [ANALYTICITY_CAVEAT])


# --- T3 ----------------------------------------------------------------------

def certify_bracket_orthogonal(
    sys: ControlAffineSystem, lam: ExtremalPoint, tols: Tolerances = DEFAULT_TOLERANCES
) -> OptimalityCertificate:
    if sys.k != 2:
        raise WrongDimensions(f"requires k=2, got k={sys.k}")
    diag = _locus_and_margin(sys, lam, tols)
    q, p = lam.q, lam.p
    f1, f2 = sys.fields
    cols = [eval_field(f1, q), eval_field(f2, q), lie_bracket(f1, f2, q)]
    vals = [float(p @ c) for c in cols]
    ptol = _perp_tol(tols, p, cols)
    hd = hamiltonian_data(sys, lam)
    diag.update(h1=vals[0], h2=vals[1], h12=vals[2], tol_perp=ptol, H=hd.H, h0=hd.h0)
    ok = all(abs(v) <= ptol for v in vals)
    verdict = Verdict.OPTIMAL_T3 if ok else Verdict.HYPOTHESIS_FAILED
    return OptimalityCertificate(verdict, "T3", diag, [])


# --- classification ----------------------------------------------------------

@dataclass
class Classification:
    label: str  # INDEPENDENT_DRIFT | NONCONTACT | OPEN_CASE
    independent_drift: bool
    noncontact: bool
    det_drift: float
    det_contact: float
    tol_det: float

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "independent_drift": self.independent_drift,
            "noncontact": self.noncontact,
            "det_drift": self.det_drift,
            "det_contact": self.det_contact,
            "tol_det": self.tol_det,
        }


def classify_3_2(
    sys: ControlAffineSystem, lam: ExtremalPoint, tols: Tolerances = DEFAULT_TOLERANCES
) -> Classification:
    _require_32(sys)
    q = lam.q
    cols = [eval_field(f, q) for f in sys.all_fields]
    det0 = float(np.linalg.det(np.column_stack(cols)))
    indep = det0 != 0.0 and abs(det0) > tols.tol_det * _column_scale(cols)
    contact, det1 = contact_test(sys, q, tols.tol_det)
    if indep:
        label = "INDEPENDENT_DRIFT"
    elif not contact:
        label = "NONCONTACT"
    else:
        label = "OPEN_CASE"
    return Classification(label, bool(indep), not contact, det0, det1, tols.tol_det)


# --- Goh condition -----------------------------------------------------------

def goh_residual(
    sys: ControlAffineSystem, arc: ExtremalArc, interior_tol: float = 1e-9
) -> tuple[float, bool]:
    """Largest ``|<p, [f_i, f_j](q)>|`` over samples with ``|u| < 1 - interior_tol``.

    Returns ``(residual, no_interior)``; without interior samples the
    residual is 0 and the flag is set.
    """
    worst = 0.0
    seen = False
    k = sys.k
    for q, p, u in zip(arc.q, arc.p, arc.u):
        if np.linalg.norm(u) >= 1.0 - interior_tol:
            continue
        seen = True
        for i in range(k):
            for j in range(i + 1, k):
                worst = max(worst, abs(float(p @ lie_bracket(sys.fields[i], sys.fields[j], q))))
    return worst, not seen


# --- all at once -------------------------------------------------------------

def _not_applicable(theorem: str, exc: Exception) -> OptimalityCertificate:
    return OptimalityCertificate(
        Verdict.NOT_APPLICABLE,
        theorem,
        {"reason": f"{type(exc).__name__}: {exc}"},
        [],
    )


def certify_all(
    sys: ControlAffineSystem,
    lam: ExtremalPoint,
    tols: Tolerances = DEFAULT_TOLERANCES,
    normalize: bool = True,
    sample_radius: float = 1e-2,
    sample_count: int = 100,
    seed: int = 0,
) -> list[OptimalityCertificate]:
    """T1, T2, T3 in that order; unmet prerequisites give ``NOT_APPLICABLE``.

    With ``normalize`` a covector with ``H > 0`` is first rescaled to ``H = 1``
    (extremals are defined up to a positive factor).
    """
    if normalize:
        H = hamiltonian_data(sys, lam).H
        if H > 0.0:
            lam = lam.scaled(1.0 / H)
    out = []
    runs = (
        ("T1", lambda: certify_flat(sys, lam, tols, sample_radius, sample_count, seed)),
        ("T2", lambda: certify_contact(sys, lam, tols)),
        ("T3", lambda: certify_bracket_orthogonal(sys, lam, tols)),
    )
    for name, fn in runs:
        try:
            out.append(fn())
        except (PrereqFailed, WrongDimensions) as exc:
            out.append(_not_applicable(name, exc))
    return out


def verdicts(certs: list[OptimalityCertificate]) -> dict[str, str]:
    return {c.theorem: c.verdict.value for c in certs}


def overall_verdict(certs: list[OptimalityCertificate], classification: Optional[Classification] = None) -> Verdict:
    """First optimal verdict if any; otherwise ``OPEN_CASE`` when the classifier says so."""
    for c in certs:
        if c.optimal:
            return c.verdict
    if classification is not None and classification.label == "OPEN_CASE":
        return Verdict.OPEN_CASE
    if all(c.verdict is Verdict.NOT_APPLICABLE for c in certs):
        return Verdict.NOT_APPLICABLE
    return Verdict.HYPOTHESIS_FAILED
