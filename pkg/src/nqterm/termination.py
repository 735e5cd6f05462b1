"""Termination under all schedulers, and synthesis of nontermination evidence."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .divergence import DivergenceResult, DivNode, compute_divergent
from .errors import InconsistencyError, PreconditionError
from .model import LassoScheduler, QuantumMDP, apply_word, termination_probability_lasso
from .numerics import (
    Subspace,
    Tolerances,
    as_vector,
    hermitian_basis,
    hermitian_devectorize,
    hermitian_vectorize,
    membership,
    operator_membership,
    outer,
    real_nullspace,
    subspace_intersect,
)
from .reachability import (
    ReachSpaceI,
    ReachSpaceII,
    express_in_generators,
    loop_reachable_space,
    reachable_space_I,
    reachable_space_II,
    word_kraus,
)

NONTERM_TP_MARGIN = 1e-6
PLATEAU_TOL = 1e-9
CERTIFICATE_TOL = 1e-8


class Status(str, enum.Enum):
    TERMINATING = "Terminating"
    NONTERMINATING = "Nonterminating"
    NONTERMINATING_EVIDENCE = "NonterminatingEvidence"
    UNKNOWN = "Unknown"


@dataclass(eq=False)
class TerminationVerdict:
    status: Status
    tolerances: Tolerances
    witness: np.ndarray | None = None
    leaf: DivNode | None = None
    scheduler: LassoScheduler | None = None
    certificate: np.ndarray | None = None
    certificate_space: Subspace | None = None
    candidate_word: tuple | None = None
    validation: dict = field(default_factory=dict)
    reach: ReachSpaceI | None = None
    divergence: DivergenceResult | None = None


@dataclass(eq=False)
class EvidenceII:
    status: Status
    state: np.ndarray | None = None
    leaf: DivNode | None = None
    reach: ReachSpaceII | None = None


def check_termination(m: QuantumMDP, rho0, tol: Tolerances | None = None) -> TerminationVerdict:
    tol = tol or m.tol
    reach = reachable_space_I(m, rho0, tol)
    div = compute_divergent(m, tol)
    for leaf in div.leaves:
        common = subspace_intersect(reach.basis, leaf.space, tol)
        if common.dim:
            return TerminationVerdict(
                Status.NONTERMINATING, tol, witness=common.vectors[0], leaf=leaf, reach=reach, divergence=div
            )
    return TerminationVerdict(Status.TERMINATING, tol, reach=reach, divergence=div)


def _guarded_map(m: QuantumMDP, loop) -> list[np.ndarray]:
    if isinstance(loop, str):
        loop = (loop,)
    return word_kraus(m, loop)


def fixedpoint_residual(m: QuantumMDP, loop, gamma: np.ndarray) -> float:
    out = sum(k @ gamma @ k.conj().T for k in _guarded_map(m, loop))
    return float(np.max(np.abs(out - gamma)))


def fixedpoint_hermitian(m: QuantumMDP, loop, s: Subspace, tol: Tolerances | None = None) -> np.ndarray | None:
    """A nonzero Hermitian operator on ``s`` fixed by the guarded step of ``loop``, or None.

    ``loop`` is an action name or a word; the solution is the first canonical
    vector of the real solution space, with unit Frobenius norm.
    """
    tol = tol or m.tol
    if s.dim == 0:
        raise PreconditionError("fixedpoint search needs a nonnull subspace")
    kraus = _guarded_map(m, loop)
    v = s.basis
    cols = []
    for b in hermitian_basis(s.dim):
        g = v @ b @ v.conj().T
        out = sum(k @ g @ k.conj().T for k in kraus)
        cols.append(hermitian_vectorize(out - g, tol))
    a = np.column_stack(cols)
    null = real_nullspace(a, s.dim ** 2, tol)
    if null.shape[1] == 0:
        return None
    gamma = v @ hermitian_devectorize(null[:, 0]) @ v.conj().T
    return gamma / np.linalg.norm(gamma)


def _validate(m: QuantumMDP, rho0, s: LassoScheduler) -> dict:
    steps = max(25 * m.dim, len(s.prefix) + 25 * len(s.loop))
    tp, plateau = termination_probability_lasso(m, rho0, s, steps)
    ok = tp <= 1 - NONTERM_TP_MARGIN and plateau <= PLATEAU_TOL
    return {"steps": steps, "tp_lower_bound": tp, "plateau_delta": plateau, "passed": bool(ok)}


def _find_leaf(div: DivergenceResult, reach: ReachSpaceI, witness: np.ndarray, tol: Tolerances) -> DivNode:
    if not membership(witness, reach.basis, tol):
        raise PreconditionError("forced witness is not in the reachable space")
    for leaf in div.leaves:
        if membership(witness, leaf.space, tol):
            return leaf
    raise PreconditionError("forced witness lies in no divergent leaf space")


def synth_nontermination_scheduler(
    m: QuantumMDP,
    rho0,
    tol: Tolerances | None = None,
    witness=None,
    candidate_order: Sequence[Sequence[str]] | None = None,
) -> TerminationVerdict:
    """Lasso scheduler under which ``rho0`` terminates with probability below one.

    ``witness`` forces the divergent reachable state and ``candidate_order``
    lists generator words to try before the default discovery order.
    """
    tol = tol or m.tol
    verdict = check_termination(m, rho0, tol)
    if verdict.status is Status.TERMINATING:
        return verdict
    reach, div = verdict.reach, verdict.divergence
    if witness is not None:
        psi = as_vector(witness, m.dim)
        psi = psi / np.linalg.norm(psi)
        leaf = _find_leaf(div, reach, psi, tol)
    else:
        psi, leaf = verdict.witness, verdict.leaf
    sigma = leaf.scheduler().normalized()
    candidates = express_in_generators(psi, reach, tol)
    if candidate_order:
        rank = {tuple(w): i for i, w in enumerate(candidate_order)}
        candidates.sort(key=lambda c: rank.get(c[1].word, len(rank)))
    attempts = []
    for _, gen in candidates:
        rho = apply_word(m, sigma.prefix, outer(gen.vector))
        tr = float(np.real(np.trace(rho)))
        if tr <= tol.rank_tol:
            attempts.append({"word": list(gen.word), "skipped": "vanishes under the prefix"})
            continue
        space = loop_reachable_space(m, sigma.loop, rho / tr, tol)
        gamma = fixedpoint_hermitian(m, sigma.loop, space, tol)
        if gamma is None:
            attempts.append({"word": list(gen.word), "skipped": "no stationary operator"})
            continue
        s = LassoScheduler(gen.word + sigma.prefix, sigma.loop)
        check = _validate(m, rho0, s)
        check["certificate_residual"] = fixedpoint_residual(m, sigma.loop, gamma)
        check["passed"] = check["passed"] and check["certificate_residual"] <= CERTIFICATE_TOL
        attempts.append({"word": list(gen.word), "validation": check})
        if not check["passed"]:
            continue
        verdict.witness, verdict.leaf = psi, leaf
        verdict.scheduler = s
        verdict.certificate = gamma
        verdict.certificate_space = space
        verdict.candidate_word = gen.word
        verdict.validation = dict(check, attempts=attempts)
        return verdict
    raise InconsistencyError(
        f"no candidate produced a validated nontermination scheduler (attempts: {attempts}); "
        f"tolerances {tol.as_dict()}"
    )


def check_termination_II(m: QuantumMDP, psi0, tol: Tolerances | None = None) -> EvidenceII:
    """Look for a divergent leaf basis state whose projector lies in the II-reachable space.

    A miss is reported as Unknown, never as termination.
    """
    tol = tol or m.tol
    reach = reachable_space_II(m, psi0, tol)
    div = compute_divergent(m, tol)
    for leaf in div.leaves:
        for v in leaf.space.vectors:
            rho = outer(v)
            if operator_membership(rho, reach.op_space, tol):
                return EvidenceII(Status.NONTERMINATING_EVIDENCE, rho, leaf, reach)
    return EvidenceII(Status.UNKNOWN, reach=reach)
