"""Universal termination: invariant-space detection and universal scheduler synthesis."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InconsistencyError, PreconditionError
from .model import LassoScheduler, QuantumMDP, _primitive_root, termination_probability_lasso, tp_trace
from .numerics import (
    Subspace,
    Tolerances,
    fix_phase,
    hermitian_basis,
    hermitian_devectorize,
    hermitian_vectorize,
    ket,
    outer,
    real_nullspace,
    subspace_join,
    support,
)
from .reachability import word_kraus

UNIVERSAL_TP_TARGET = 0.99
STATIONARY_TOL = 1e-8


class UniversalStatus(str, enum.Enum):
    UNIVERSALLY_TERMINATING = "UniversallyTerminating"
    NOT_UNIVERSAL = "NotUniversal"


@dataclass(eq=False)
class InvariantSpaceResult:
    space: Subspace | None
    stationary_solution: np.ndarray | None
    verified: bool
    solution_count: int = 0
    stationary_residual: float = 0.0
    invariance_residual: float = 0.0

    @property
    def present(self) -> bool:
        return self.space is not None


@dataclass(eq=False)
class UniversalVerdict:
    status: UniversalStatus
    tolerances: Tolerances
    invariant: InvariantSpaceResult
    counterexample: np.ndarray | None = None
    scheduler: LassoScheduler | None = None
    validation: dict = field(default_factory=dict)


def _averaged_guarded(m: QuantumMDP) -> list[np.ndarray]:
    scale = 1 / np.sqrt(len(m.actions))
    return [scale * k for a in m.actions for k in m.guarded(a)]


def averaged_map(m: QuantumMDP, gamma: np.ndarray) -> np.ndarray:
    return sum(k @ gamma @ k.conj().T for k in _averaged_guarded(m))


def _invariance_residual(m: QuantumMDP, space: Subspace) -> float:
    proj = np.eye(m.dim) - space.projector()
    worst = 0.0
    for a in m.actions:
        for k in m.dynamics[a].kraus:
            for v in space.vectors:
                worst = max(worst, float(np.linalg.norm(proj @ (k @ v))))
    return worst


def invariant_space(m: QuantumMDP, tol: Tolerances | None = None) -> InvariantSpaceResult:
    """Solve the averaged stationary equation on range(M_true) and verify closure of the support.

    The returned space joins the supports of every canonical solution, so it
    is the largest space this route certifies.
    """
    tol = tol or m.tol
    r = support(m.meas.m_true, tol)
    if r.dim == 0:
        return InvariantSpaceResult(None, None, True)
    kraus = _averaged_guarded(m)
    v = r.basis
    cols = []
    for b in hermitian_basis(r.dim):
        g = v @ b @ v.conj().T
        out = sum(k @ g @ k.conj().T for k in kraus)
        cols.append(hermitian_vectorize(out - g, tol))
    null = real_nullspace(np.column_stack(cols), r.dim ** 2, tol)
    if null.shape[1] == 0:
        return InvariantSpaceResult(None, None, True)
    solutions = [v @ hermitian_devectorize(null[:, i]) @ v.conj().T for i in range(null.shape[1])]
    gamma = sum(solutions)
    gamma = gamma / np.linalg.norm(gamma)
    space = Subspace.zero(m.dim)
    for s in solutions:
        space = subspace_join(space, support(s, tol), tol)
    stationary = float(np.max(np.abs(averaged_map(m, gamma) - gamma)))
    leak = _invariance_residual(m, space)
    outside = float(np.linalg.norm((np.eye(m.dim) - r.projector()) @ space.basis))
    result = InvariantSpaceResult(space, gamma, False, len(solutions), stationary, leak)
    if leak > tol.rank_tol or outside > tol.rank_tol or stationary > STATIONARY_TOL:
        raise InconsistencyError(
            f"stationary support fails invariance: image leakage {leak:.3e}, "
            f"outside range(M_true) {outside:.3e}, stationary residual {stationary:.3e}; "
            f"tolerances {tol.as_dict()}"
        )
    result.verified = True
    return result


def _coupling_direction(m: QuantumMDP, action, s: Subspace, tol: Tolerances) -> np.ndarray | None:
    q_s = s.basis
    q_perp = s.complement(tol).basis
    stacked = np.vstack([q_s.conj().T @ k @ q_perp for k in m.dynamics[action].kraus])
    _, sv, vh = np.linalg.svd(stacked)
    if sv.size == 0 or sv[0] <= tol.rank_tol:
        return None
    return fix_phase(q_perp @ vh[0].conj(), tol)


def universal_steps(loop_len: int) -> int:
    return max(40 * loop_len, 120)


def loop_spectral_radius(m: QuantumMDP, loop) -> float:
    """Spectral radius of the guarded loop map; below one means every input terminates almost surely."""
    t = sum(np.kron(k, k.conj()) for k in word_kraus(m, loop))
    return float(np.max(np.abs(np.linalg.eigvals(t))))


def _steps_to_target(m: QuantumMDP, s: LassoScheduler, limit: int) -> int | None:
    """Steps until every computational-basis input reaches the TP target, or None within ``limit``."""
    d = m.dim
    # column i is vec(|i><i|); all inputs evolve together under the row-major vectorized guarded maps
    maps = {a: sum(np.kron(k, k.conj()) for k in m.guarded(a)) for a in m.actions}
    rows = np.eye(d * d, dtype=complex)[[i * d + i for i in range(d)]].T
    mf = m.meas.m_false.T.reshape(-1)
    done = np.zeros(d)
    for step, a in enumerate(s.unroll(limit) + (None,)):
        done = done + np.real(mf @ rows)
        if np.all(done >= UNIVERSAL_TP_TARGET):
            return step
        if a is not None:
            rows = maps[a] @ rows
    return None


def validate_universal(m: QuantumMDP, s: LassoScheduler, steps: int | None = None) -> dict:
    """Oracle TP table over the computational basis under ``s``.

    ``passed`` is the fixed-budget target; ``steps_to_target`` is how many
    unrolled steps the slowest basis input actually needs.
    """
    steps = universal_steps(len(s.loop)) if steps is None else steps
    table = []
    for i in range(m.dim):
        rho = outer(ket(i, m.dim))
        tp, _ = termination_probability_lasso(m, rho, s, steps)
        gain, _ = termination_probability_lasso(m, rho, s, len(s.prefix) + len(s.loop))
        table.append({"input": i, "tp": tp, "one_pass_gain": gain})
    worst = min(row["tp"] for row in table)
    return {
        "steps": steps,
        "table": table,
        "min_tp": worst,
        "min_one_pass_gain": min(row["one_pass_gain"] for row in table),
        "spectral_radius": loop_spectral_radius(m, s.loop),
        "steps_to_target": _steps_to_target(m, s, 50 * steps),
        "passed": bool(worst >= UNIVERSAL_TP_TARGET),
    }


def synth_universal_scheduler(m: QuantumMDP, tol: Tolerances | None = None, check: bool = True) -> LassoScheduler:
    """Grow the terminating region one coupled direction at a time and repeat the collected word.

    The collected word is reduced to its primitive root before being returned.
    """
    tol = tol or m.tol
    if check and invariant_space(m, tol).present:
        raise PreconditionError("model has an invariant space, so no universal scheduler exists")
    s = support(m.meas.m_false, tol)
    word = []
    while s.dim < m.dim:
        for a in m.actions:
            psi = _coupling_direction(m, a, s, tol)
            if psi is not None:
                s = subspace_join(s, Subspace(psi[:, None]), tol)
                word.append(a)
                break
        else:
            raise InconsistencyError(
                f"no action couples the complement of a {s.dim}-dimensional terminating region; "
                f"tolerances {tol.as_dict()}"
            )
    if not word:
        raise PreconditionError("every state terminates immediately; no action is needed")
    sched = LassoScheduler((), _primitive_root(tuple(word)))
    radius = loop_spectral_radius(m, sched.loop)
    if radius >= 1 - tol.rank_tol:
        raise InconsistencyError(
            f"universal scheduler {sched} keeps mass forever (loop spectral radius {radius:.12f}); "
            f"tolerances {tol.as_dict()}"
        )
    return sched


def check_universal_termination(m: QuantumMDP, tol: Tolerances | None = None) -> UniversalVerdict:
    tol = tol or m.tol
    inv = invariant_space(m, tol)
    if inv.present:
        rho = inv.space.projector() / inv.space.dim
        return UniversalVerdict(UniversalStatus.NOT_UNIVERSAL, tol, inv, counterexample=rho)
    if support(m.meas.m_false, tol).dim == m.dim:
        sched, report = None, {}
    else:
        sched = synth_universal_scheduler(m, tol, check=False)
        report = validate_universal(m, sched)
    return UniversalVerdict(UniversalStatus.UNIVERSALLY_TERMINATING, tol, inv, scheduler=sched, validation=report)
