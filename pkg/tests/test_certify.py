from __future__ import annotations

import numpy as np
import pytest

from brachia.certify import (
    Verdict,
    certify_all,
    certify_bracket_orthogonal,
    certify_contact,
    certify_flat,
    classify_3_2,
    contact_test,
    goh_residual,
    lie_rank,
    overall_verdict,
    reeb_field,
    verdicts,
)
from brachia.errors import PrereqFailed, WrongDimensions
from brachia.extremal import ExtremalPoint, arc_from_samples, integrate_arc
from brachia.fieldexpr import parse_field
from brachia.system import ControlAffineSystem

from conftest import HEIS_F1, HEIS_F2, make_dint, make_heis, make_slab


def fields(*texts):
    return [parse_field(list(t), len(t)) for t in texts]


# --- Lie rank ----------------------------------------------------------------

def test_lie_rank_involutive():
    lr = lie_rank(fields(("1", "0", "0"), ("0", "1", "0")), np.zeros(3))
    assert (lr.rank, lr.stabilized_depth) == (2, 2)


def test_lie_rank_heisenberg():
    lr = lie_rank(fields(HEIS_F1, HEIS_F2), np.zeros(3))
    assert (lr.rank, lr.stabilized_depth) == (3, 2)
    assert "[f1,f2]" in lr.words()


def test_lie_rank_single_field():
    lr = lie_rank(fields(("1", "x1", "x3^2")), np.array([0.2, 0.0, 0.0]))
    assert lr.rank == 1


def test_lie_rank_stops_on_stalled_generation():
    # f2 = d/dx2 + x1^2 d/dx3: [f1,f2] = 2 x1 d/dx3 vanishes at the origin, so the
    # search stops there after depth 2 even though depth 3 would add d/dx3
    fs = fields(("1", "0", "0"), ("0", "1", "x1^2"))
    at0 = lie_rank(fs, np.zeros(3))
    assert (at0.rank, at0.stabilized_depth) == (2, 2)
    assert lie_rank(fs, np.array([0.5, 0.0, 0.0])).rank == 3
    assert lie_rank(fs, np.array([0.5, 0.0, 0.0]), depth_cap=1).rank == 2


# --- T1 ----------------------------------------------------------------------

def test_flat_slab_optimal(slab, lam0):
    cert = certify_flat(slab, lam0)
    assert cert.verdict is Verdict.OPTIMAL_T1
    d = cert.diagnostics
    assert d["lie_rank"] == 2 and d["rank_branch"] == "codimension_one"
    assert d["h0"] == 1.0 and d["max_perp"] == 0.0 and d["h0_equals_H"]
    assert cert.caveats


def test_flat_off_locus(slab):
    with pytest.raises(PrereqFailed):
        certify_flat(slab, ExtremalPoint(np.zeros(3), [1.0, 0.0, 0.0]))


def test_flat_unnormalized(slab, lam0):
    with pytest.raises(PrereqFailed):
        certify_flat(slab, lam0.scaled(2.0))


def test_flat_heis_full_rank(heis, lam0):
    cert = certify_flat(heis, lam0)
    assert cert.verdict is Verdict.HYPOTHESIS_FAILED
    assert cert.diagnostics["rank_branch"] == "full_rank"
    assert cert.diagnostics["max_perp"] == pytest.approx(1.0)


def single_field_system():
    return ControlAffineSystem.from_strings(["0", "0", "1+x1"], [["1", "0", "0"]])


def test_flat_constant_rank_branch(lam0):
    cert = certify_flat(single_field_system(), lam0)
    assert cert.verdict is Verdict.OPTIMAL_T1
    assert cert.diagnostics["rank_branch"] == "constant_rank"
    assert cert.samples["min_rank"] == cert.samples["max_rank"] == 1
    assert cert.samples["count"] == 100


def test_flat_seed_independent(lam0):
    sys = single_field_system()
    got = {certify_flat(sys, lam0, seed=s).verdict for s in range(10)}
    assert got == {Verdict.OPTIMAL_T1}


def test_flat_rank_jump_nearby_fails():
    # f2 = x1^3 d/dx2 vanishes at the origin: rank 1 there, higher rank nearby
    sys = ControlAffineSystem.from_strings(
        ["0", "0", "1"], [["1", "0", "0"], ["0", "x1^3", "0"]]
    )
    lam = ExtremalPoint(np.zeros(3), [0.0, 0.0, 1.0])
    # [f0, f1] = 0 here, so the transversality prerequisite fails first
    with pytest.raises(PrereqFailed):
        certify_flat(sys, lam)
    sys2 = ControlAffineSystem.from_strings(
        ["0", "0", "1+x1"], [["1", "0", "0"], ["0", "x1^3", "0"]]
    )
    cert = certify_flat(sys2, lam)
    assert cert.diagnostics["rank_branch"] == "constant_rank"
    assert cert.verdict is Verdict.HYPOTHESIS_FAILED
    assert cert.diagnostics["lie_rank"] == 1 and cert.samples["max_rank"] > 1


# --- T2 ----------------------------------------------------------------------

def test_contact_examples():
    heis = make_heis()
    for q in (np.zeros(3), np.array([1.0, -2.0, 5.0])):
        ok, det = contact_test(heis, q)
        assert ok and det == pytest.approx(1.0, abs=1e-14)
    ok, det = contact_test(make_slab(), np.zeros(3))
    assert not ok and det == 0.0
    sys = ControlAffineSystem.from_strings(["0", "0", "1"], [["1", "0", "0"], ["0", "1", "x1"]])
    ok, det = contact_test(sys, np.array([0.3, 0.0, 0.0]))
    assert ok and det == pytest.approx(1.0, abs=1e-14)


def test_certify_contact_heis(heis, lam0):
    cert = certify_contact(heis, lam0)
    assert cert.verdict is Verdict.OPTIMAL_T2
    d = cert.diagnostics
    assert abs(d["contact_det"] - 1.0) <= 1e-10
    assert d["margin"] == pytest.approx(1.0)
    assert d["reeb_omega_minus_p"] <= 1e-14


def test_certify_contact_slab(slab, lam0):
    assert certify_contact(slab, lam0).verdict is Verdict.HYPOTHESIS_FAILED


def test_certify_contact_wrong_dims():
    with pytest.raises(WrongDimensions):
        certify_contact(make_dint(), ExtremalPoint([0.0, 0.0], [1.0, 0.0]))


@pytest.mark.parametrize("q", [np.zeros(3), np.array([0.3, -0.1, 0.5]), np.array([-1.0, 2.0, 0.0])])
def test_reeb_field_defining_properties(q):
    rd = reeb_field(make_heis(("0", "0", "1")), q)
    assert rd.xi is not None
    assert float(rd.omega @ rd.xi) == pytest.approx(1.0, abs=1e-14)
    # i_xi d(omega) = 0  <=>  xi parallel to curl(omega) in R^3
    assert np.allclose(np.cross(rd.xi, rd.curl), 0.0, atol=1e-14)
    # omega annihilates the distribution
    f1, f2 = (parse_field(t, 3) for t in (HEIS_F1, HEIS_F2))
    assert abs(rd.omega @ f1(q)) <= 1e-14 and abs(rd.omega @ f2(q)) <= 1e-14


# --- T3 ----------------------------------------------------------------------

def test_bracket_orthogonal_examples(slab, heis, lam0):
    assert certify_bracket_orthogonal(slab, lam0).verdict is Verdict.OPTIMAL_T3
    cert = certify_bracket_orthogonal(heis, lam0)
    assert cert.verdict is Verdict.HYPOTHESIS_FAILED and cert.diagnostics["h12"] == 1.0
    with pytest.raises(PrereqFailed):
        certify_bracket_orthogonal(slab, ExtremalPoint(np.zeros(3), [0.0, 1.0, 1.0]))


def test_bracket_orthogonal_abnormal_allowed(slab, lam0):
    # no normalization needed
    assert certify_bracket_orthogonal(slab, lam0.scaled(7.0)).verdict is Verdict.OPTIMAL_T3


# --- classification ----------------------------------------------------------

def test_classify_examples(slab, heis, lam0):
    c = classify_3_2(slab, lam0)
    assert c.label == "INDEPENDENT_DRIFT" and c.independent_drift and c.noncontact
    assert c.det_drift == 1.0 and c.det_contact == 0.0
    c = classify_3_2(heis, lam0)
    assert c.label == "INDEPENDENT_DRIFT" and not c.noncontact
    open_sys = make_heis(HEIS_F1)
    assert classify_3_2(open_sys, lam0).label == "OPEN_CASE"
    noncontact = ControlAffineSystem.from_strings(["1", "0", "0"], [["1", "0", "0"], ["0", "1", "0"]])
    assert classify_3_2(noncontact, lam0).label == "NONCONTACT"
    with pytest.raises(WrongDimensions):
        classify_3_2(make_dint(), lam0)


def test_classifier_flips_once_on_drift_path(lam0):
    # f0 = (1, 0, s): det[f0|f1|f2] = s at the origin
    def cls(s):
        return classify_3_2(make_heis(("1", "0", repr(float(s)))), lam0)

    grid = np.linspace(-1.0, 1.0, 201)
    signs = np.sign([cls(s).det_drift for s in grid])
    signs = signs[signs != 0]
    assert int(np.sum(signs[1:] != signs[:-1])) == 1
    labels = [cls(s).label for s in np.linspace(0.0, 1.0, 101)]
    flips = sum(a != b for a, b in zip(labels, labels[1:]))
    assert flips == 1 and labels[0] == "OPEN_CASE" and labels[-1] == "INDEPENDENT_DRIFT"
    lo, hi = 0.0, 1.0
    while hi - lo > 1e-13:
        mid = 0.5 * (lo + hi)
        if cls(mid).label == "OPEN_CASE":
            lo = mid
        else:
            hi = mid
    # the transition sits at the determinant tolerance (column scale is sqrt(1 + s^2) ~ 1)
    assert hi == pytest.approx(1e-9, rel=1e-3)


# --- Goh ---------------------------------------------------------------------

def test_goh_bang_arc(heis):
    arc = integrate_arc(heis, ExtremalPoint(np.zeros(3), [0.3, 0.4, 1.0]), (0.0, 0.2), stop_at_locus=False)
    assert goh_residual(heis, arc) == (0.0, True)


def test_goh_invariant_set(slab):
    t = np.linspace(0, 1, 11)
    q = np.column_stack([np.zeros_like(t), np.zeros_like(t), t])
    p = np.tile([0.0, 0.0, 1.0], (t.size, 1))
    arc = arc_from_samples(slab, t, q, p, u=np.zeros((t.size, 2)))
    res, empty = goh_residual(slab, arc)
    assert res <= 1e-8 and not empty


def test_goh_violation(heis):
    t = np.linspace(0, 1, 5)
    arc = arc_from_samples(heis, t, np.zeros((5, 3)), np.tile([0.0, 0.0, 1.0], (5, 1)), u=np.zeros((5, 2)))
    assert goh_residual(heis, arc) == (1.0, False)


# --- combined ----------------------------------------------------------------

def test_certificate_matrix(slab3, heis3, dint2, open3):
    for sc in (slab3, heis3, dint2, open3):
        certs = certify_all(sc.system, sc.lam, sc.tolerances)
        assert verdicts(certs) == {t: sc.expected[t] for t in ("T1", "T2", "T3")}
        for c in certs:
            assert c.diagnostics


@pytest.mark.parametrize("c", [1e-3, 1.0, 1e3])
def test_verdicts_scale_invariant(c, slab3, heis3, dint2, open3):
    for sc in (slab3, heis3, dint2, open3):
        base = verdicts(certify_all(sc.system, sc.lam, sc.tolerances))
        scaled = verdicts(certify_all(sc.system, sc.lam.scaled(c), sc.tolerances))
        assert scaled == base


def test_overall_verdicts(slab3, heis3, open3):
    def overall(sc):
        certs = certify_all(sc.system, sc.lam, sc.tolerances)
        return overall_verdict(certs, classify_3_2(sc.system, sc.lam, sc.tolerances))

    assert overall(slab3) is Verdict.OPTIMAL_T1
    assert overall(heis3) is Verdict.OPTIMAL_T2
    assert overall(open3) is Verdict.OPEN_CASE


def test_certificate_dict_round_trip(heis, lam0):
    import json

    d = certify_contact(heis, lam0).to_dict()
    assert json.loads(json.dumps(d))["verdict"] == "OPTIMAL_T2"
