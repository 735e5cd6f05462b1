"""One check per acceptance criterion; the summary prints a PASS/FAIL line for each.

Run directly (``python3 tests/test_acceptance.py``) for the lines alone.
"""

import numpy as np
import pytest

from conftest import (
    MINUS, ONE, PLUS, SQ2, ZERO, in_span, kron, oracle_lasso_tp, raw_fixture, same_span,
)
from properties import CHECKS, run_suite
from nqterm.divergence import compute_divergent
from nqterm.io import FIXTURES, load_model
from nqterm.numerics import ket, operator_coefficients, outer
from nqterm.reachability import reachable_space_I, reachable_space_II
from nqterm.termination import check_termination, synth_nontermination_scheduler
from nqterm.universal import check_universal_termination, invariant_space

RESULTS = {}


def model(name):
    return load_model(FIXTURES / f"{name}.json")


def basis_tp(name, s, steps):
    kraus, mt, mf = raw_fixture(name)
    d = mt.shape[0]
    return [oracle_lasso_tp(kraus, mt, mf, outer(ket(i, d)), s.prefix, s.loop, steps) for i in range(d)]


def criterion_1():
    mf = model("qbf")
    r = reachable_space_I(mf.model, mf.states["11"])
    step1 = [kron(ONE, ONE), kron(MINUS, ZERO), (kron(PLUS, ZERO) - SQ2 * kron(ZERO, ONE)) / np.sqrt(3)]
    ok = r.dim == 4 and r.chain_depth == 2 and r.chain[1].dim == 3 and same_span(r.chain[1].vectors, step1)
    return ok, f"dim {r.dim}, fixedpoint at step {r.chain_depth}, step-1 dim {r.chain[1].dim}"


def criterion_2():
    mf = model("qbf")
    r = reachable_space_II(mf.model, kron(ONE, ONE))
    coeffs, _ = operator_coefficients(outer(kron(ZERO, ZERO)), r.op_space)
    want = np.array([1, -1, 0, 0, 0, 1, -3, 3])
    uniform = np.full(4, 0.5)
    _, residual = operator_coefficients(outer(uniform), r.op_space)
    ok = len(r.pure_basis) == 8 and np.allclose(coeffs, want, atol=1e-6, rtol=0) and residual > 1e-6
    return ok, f"{len(r.pure_basis)} generators, coefficients {np.round(np.real(coeffs), 6).tolist()}, uniform residual {residual:.3f}"


def criterion_3():
    m = model("qbf").model
    div = compute_divergent(m)
    leaves = {n.loop_action: n for n in div.leaves}
    want = {
        "alpha1": [kron(ONE, ONE), kron(MINUS, ZERO)],
        "alpha2": [kron(ZERO, ZERO), kron(ONE, PLUS)],
    }
    ok = len(div.leaves) == 2 and set(leaves) == set(want) and div.depth == 1
    ok = ok and all(same_span(leaves[a].space.vectors, v) for a, v in want.items())
    mixed = {
        ("alpha1", "alpha2"): (SQ2 * kron(ONE, ONE) - kron(MINUS, ZERO)) / np.sqrt(3),
        ("alpha2", "alpha1"): (-SQ2 * kron(ZERO, ZERO) + kron(ONE, PLUS)) / np.sqrt(3),
    }
    for w, v in mixed.items():
        s = div.space_of(w)
        ok = ok and s.dim == 1 and abs(np.vdot(s.vectors[0], v)) >= 1 - 1e-8
    return ok, f"{len(div.leaves)} leaves with loops {sorted(leaves)}, depth {div.depth}"


def certificate_residual(name, loop, gamma):
    kraus, mt, _ = raw_fixture(name)
    out = gamma
    for a in loop:
        out = sum(k @ mt @ out @ mt.conj().T @ k.conj().T for k in kraus[a])
    return float(np.max(np.abs(out - gamma)))


def criterion_4():
    mf = model("qbf")
    rho = mf.states["11"]
    v = synth_nontermination_scheduler(mf.model, rho)
    kraus, mt, mfalse = raw_fixture("qbf")
    s = v.scheduler
    tp = oracle_lasso_tp(kraus, mt, mfalse, rho, s.prefix, s.loop, 100)
    before = oracle_lasso_tp(kraus, mt, mfalse, rho, s.prefix, s.loop, 100 - len(s.loop))
    res = certificate_residual("qbf", s.loop, v.certificate)
    ok = tp <= 1 - 1e-6 and tp - before <= 1e-9 and res <= 1e-8
    forced = synth_nontermination_scheduler(
        mf.model, rho, witness=kron(ZERO, ZERO), candidate_order=[("alpha1", "alpha2")]
    )
    fs = forced.scheduler
    phi = kron(MINUS, PLUS) + kron(ZERO, MINUS) / SQ2 + (1 + SQ2) * kron(ONE, PLUS) / SQ2
    phi = phi / np.linalg.norm(phi)
    w, vecs = np.linalg.eigh(forced.certificate)
    supp = vecs[:, np.abs(w) > 1e-8]
    fid = float(np.linalg.norm(supp.conj().T @ phi) ** 2)
    fres = certificate_residual("qbf", fs.loop, forced.certificate)
    ok = ok and fs.prefix == ("alpha1", "alpha2") and fs.loop == ("alpha2",) and fid >= 1 - 1e-6 and fres <= 1e-8
    return ok, f"default {s} TP {tp:.3e}; forced {fs} fidelity {fid:.9f}, residual {fres:.1e}"


def criterion_5():
    m = model("qbf_modified").model
    inv = invariant_space(m)
    verdict = check_universal_termination(m)
    bell = (kron(ZERO, ZERO) + kron(ONE, ONE)) / SQ2
    fid = abs(np.vdot(inv.space.vectors[0], bell)) ** 2 if inv.present else 0.0
    ok = inv.present and inv.space.dim == 1 and fid >= 1 - 1e-8 and verdict.status.value == "NotUniversal"
    return ok, f"space dim {inv.space.dim if inv.present else 0}, fidelity {fid:.12f}, verdict {verdict.status.value}"


def criterion_6():
    m = model("qbf").model
    v = check_universal_termination(m)
    s = v.scheduler
    tps = basis_tp("qbf", s, 120)
    ok = not v.invariant.present and s.loop == ("alpha1", "alpha2", "alpha1") and min(tps) >= 0.99
    return ok, (f"loop {' '.join(s.loop)}; 120-step TP per basis input {np.round(tps, 4).tolist()}; "
                f"0.99 first reached at step {v.validation['steps_to_target']}")


def criterion_7():
    mf = model("nqw")
    m = mf.model
    phi = reachable_space_I(m, mf.states["0"]).dim
    ups = reachable_space_II(m, ket(0, 3)).dim
    div = compute_divergent(m)
    verdict = check_termination(m, mf.states["0"]).status.value
    u = check_universal_termination(m)
    tps = basis_tp("nqw", u.scheduler, 120)
    parts = {
        "reach dims": phi == 3 and ups == 8,
        "no divergence leaves": not div.leaves,
        "Terminating": verdict == "Terminating",
        "universal w1": u.scheduler.loop == ("w1",) and min(tps) >= 0.99,
    }
    failed = [k for k, good in parts.items() if not good]
    detail = (f"dims {phi}/{ups}; leaves {[str(n.scheduler()) for n in div.leaves]}; verdict {verdict}; "
              f"universal {u.scheduler} min TP {min(tps):.4f}")
    return not failed, detail + (f"; failing: {', '.join(failed)}" if failed else "")


def criterion_8():
    failures = {name: run_suite(check) for name, check in CHECKS.items()}
    bad = {k: len(v) for k, v in failures.items() if v}
    detail = f"{len(CHECKS)} suites x 100 cases"
    if bad:
        first = next(iter(failures[next(iter(bad))]))
        detail += f"; failing {bad}; e.g. {first}"
    return not bad, detail


CRITERIA = {n: globals()[f"criterion_{n}"] for n in range(1, 9)}


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    ok, detail = CRITERIA[number]()
    RESULTS[number] = (ok, detail)
    print(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


if __name__ == "__main__":
    for n, check in CRITERIA.items():
        ok, detail = check()
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
