"""Randomized property checks shared by the hypothesis suites and the acceptance run.

Each check takes a numpy Generator and a dimension and raises AssertionError
on a violation.
"""

import numpy as np

from conftest import oracle_tp, random_channel, random_density, random_projector, random_unitary
from nqterm.divergence import compute_divergent
from nqterm.errors import PreconditionError
from nqterm.model import (
    Measurement,
    QuantumMDP,
    SuperOperator,
    apply_word,
    flat_to_located,
    run_located,
    termination_probability,
    termination_probability_lasso,
)
from nqterm.numerics import Subspace, membership, outer, subspace_join, support
from nqterm.reachability import reachable_space_I, reachable_space_II
from nqterm.termination import Status, synth_nontermination_scheduler
from nqterm.universal import invariant_space, synth_universal_scheduler, validate_universal

DIMS = (2, 3, 4)


def random_model(rng, d, planted=None):
    """Two-action model; ``planted`` keeps a subspace away from termination under the first action."""
    planted = rng.random() < 0.5 if planted is None else planted
    if planted and d >= 3:
        q = random_unitary(rng, d)
        r = int(rng.integers(1, d - 1))
        s = int(rng.integers(1, d - r))
        block = np.eye(d, dtype=complex)
        block[r:r + s, r:r + s] = random_unitary(rng, s)
        block[r + s:, r + s:] = random_unitary(rng, d - r - s)
        block[:r, :r] = random_unitary(rng, r)
        first = [q @ block @ q.conj().T]
        m_false = q[:, :r] @ q[:, :r].conj().T
    else:
        first = random_channel(rng, d, int(rng.integers(1, 3)))
        m_false = random_projector(rng, d, int(rng.integers(1, d)))
    second = random_channel(rng, d, int(rng.integers(1, 3)))
    dynamics = {"a": SuperOperator(tuple(first)), "b": SuperOperator(tuple(second))}
    return QuantumMDP(d, ("a", "b"), dynamics, Measurement.from_false(m_false))


def random_word(rng, m, max_len=6):
    return tuple(rng.choice(m.actions, size=int(rng.integers(0, max_len + 1))))


def check_support_inclusion(rng, d):
    kraus = random_channel(rng, d, int(rng.integers(1, 4)))
    apply = lambda rho: sum(k @ rho @ k.conj().T for k in kraus)
    count = int(rng.integers(1, d + 1))
    psis = [random_unitary(rng, d)[:, 0] for _ in range(count)]
    coeffs = rng.normal(size=count) + 1j * rng.normal(size=count)
    psi = sum(c * p for c, p in zip(coeffs, psis))
    psi = psi / np.linalg.norm(psi)
    joined = Subspace.zero(d)
    for p in psis:
        joined = subspace_join(joined, support(apply(outer(p))))
    for v in support(apply(outer(psi))).vectors:
        assert membership(v, joined), "support of a span member escapes the joined supports"


def check_tp_identity(rng, d):
    m = random_model(rng, d)
    rho = random_density(rng, d, int(rng.integers(1, d + 1)))
    word = random_word(rng, m)
    tp = termination_probability(m, rho, word)
    rest = np.real(np.trace(m.meas.m_true @ apply_word(m, word, rho) @ m.meas.m_true))
    assert abs(tp - (1 - rest)) <= 1e-9, (tp, rest)
    kraus = {a: list(m.dynamics[a].kraus) for a in m.actions}
    assert abs(tp - oracle_tp(kraus, m.meas.m_true, m.meas.m_false, rho, word)) <= 1e-9


def check_round_trip(rng, d):
    m = random_model(rng, d)
    located = flat_to_located(m)
    psi = random_unitary(rng, d)[:, 0]
    word = random_word(rng, m)
    tp = termination_probability(m, outer(psi), word)
    state = run_located(located, "l1", outer(psi), word + (m.actions[0],))
    mass = np.real(np.trace(state.get(1, np.zeros((d, d)))))
    assert abs(tp - mass) <= 1e-9, (tp, mass)


def check_reach_bounds(rng, d):
    m = random_model(rng, d)
    psi = random_unitary(rng, d)[:, 0]
    r1 = reachable_space_I(m, random_density(rng, d, int(rng.integers(1, d + 1))))
    assert r1.chain_depth <= d - 1
    assert all(a.dim < b.dim for a, b in zip(r1.chain, r1.chain[1:]))
    r2 = reachable_space_II(m, psi)
    assert r2.chain_depth <= d * d - 1
    assert r2.dim <= d * d


def check_divergence_chain(rng, d):
    m = random_model(rng, d)
    div = compute_divergent(m)
    assert div.depth <= d, f"depth {div.depth} exceeds {d}"
    assert all(x >= y for x, y in zip(div.union_dim_profile, div.union_dim_profile[1:]))
    for word, space in div.spaces.items():
        if word:
            assert div.spaces[word[:-1]].includes(space), f"{word} escapes its parent"
    for leaf in div.leaves:
        for v in leaf.space.vectors:
            tp, _ = termination_probability_lasso(m, outer(v), leaf.scheduler(), len(leaf.word) + 6 * d)
            assert tp <= 1e-8, f"leaf {leaf.word} loop {leaf.loop} leaks {tp:.3e}"


def check_synthesis(rng, d):
    m = random_model(rng, d)
    rho = random_density(rng, d, int(rng.integers(1, d + 1)))
    verdict = synth_nontermination_scheduler(m, rho)
    if verdict.status is Status.NONTERMINATING:
        assert verdict.validation["passed"]
        kraus = {a: list(m.dynamics[a].kraus) for a in m.actions}
        s = verdict.scheduler
        steps = verdict.validation["steps"]
        tp = oracle_tp(kraus, m.meas.m_true, m.meas.m_false, rho, s.unroll(steps))
        assert tp <= 1 - 1e-6
    report = _universal_report(m)
    if report is not None:
        assert report["spectral_radius"] < 1 - 1e-8
        assert report["min_one_pass_gain"] > 1e-6
        assert report["steps_to_target"] is not None


def _universal_report(m):
    if invariant_space(m).present:
        return None
    try:
        s = synth_universal_scheduler(m)
    except PreconditionError:
        return None
    return dict(validate_universal(m, s), loop=str(s))


def check_universal_budget(rng, d):
    """The fixed-budget target: TP >= 0.99 within max(40 |loop|, 120) unrolled steps."""
    report = _universal_report(random_model(rng, d))
    if report is not None:
        assert report["passed"], (
            f"{report['loop']} reaches {report['min_tp']:.4f} in {report['steps']} steps "
            f"(needs {report['steps_to_target']}, loop spectral radius {report['spectral_radius']:.4f})"
        )


def check_planted_invariant(rng, d):
    """Both actions preserve a planted block outside the termination region, so it must be found."""
    q = random_unitary(rng, d)
    r = int(rng.integers(1, d))
    k = int(rng.integers(1, d - r + 1))
    planted = q[:, r:r + k]
    dynamics = {}
    for a in ("a", "b"):
        block = np.eye(d, dtype=complex)
        block[r:r + k, r:r + k] = random_unitary(rng, k)
        rest = [i for i in range(d) if not r <= i < r + k]
        block[np.ix_(rest, rest)] = random_unitary(rng, len(rest))
        dynamics[a] = SuperOperator((q @ block @ q.conj().T,))
    m = QuantumMDP(d, ("a", "b"), dynamics, Measurement.from_false(q[:, :r] @ q[:, :r].conj().T))
    inv = invariant_space(m)
    assert inv.present and inv.verified
    for v in planted.T:
        assert membership(v, inv.space), "planted invariant block not covered"
    assert inv.stationary_residual <= 1e-8


CHECKS = {
    "support inclusion": check_support_inclusion,
    "TP identity": check_tp_identity,
    "located round trip": check_round_trip,
    "reachability chain bounds": check_reach_bounds,
    "divergence chain": check_divergence_chain,
    "scheduler validation": check_synthesis,
    "planted invariant space": check_planted_invariant,
    "universal step budget": check_universal_budget,
}


def run_suite(check, cases=100, seed=0):
    """Run ``cases`` seeded cases over the test dimensions; returns the failure messages."""
    failures = []
    for i in range(cases):
        rng = np.random.default_rng([seed, i])
        d = DIMS[i % len(DIMS)]
        try:
            check(rng, d)
        except AssertionError as exc:
            failures.append(f"case {i} (d={d}): {exc}")
    return failures
