"""Reachable-space fixedpoints over state space and over Hermitian operator space."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError
from .model import QuantumMDP, Word, operator_level
from .numerics import (
    DEFAULT_TOL,
    OperatorSpace,
    Subspace,
    Tolerances,
    as_vector,
    check_density,
    fix_phase,
    gram_schmidt_extend,
    hermitian_vectorize,
    outer,
    support,
)


@dataclass(frozen=True, eq=False)
class ReachGenerator:
    """A pure reachable state together with a finite scheduler that reaches it."""

    vector: np.ndarray
    word: Word
    kraus_path: tuple = ()


@dataclass(frozen=True, eq=False)
class ReachSpaceI:
    basis: Subspace
    generators: tuple
    chain_depth: int
    chain: tuple  # S_0, S_1, ... up to the fixedpoint

    @property
    def dim(self) -> int:
        return self.basis.dim


@dataclass(frozen=True, eq=False)
class ReachSpaceII:
    pure_basis: tuple
    op_space: OperatorSpace
    chain_depth: int
    layer_sizes: tuple  # cumulative basis size per layer

    @property
    def dim(self) -> int:
        return self.op_space.dim


def _image(k: np.ndarray, v: np.ndarray, tol: Tolerances) -> np.ndarray | None:
    w = k @ v
    n = np.linalg.norm(w)
    if n <= tol.rank_tol:
        return None
    return fix_phase(w / n, tol)


def reachable_space_I(m: QuantumMDP, rho0, tol: Tolerances | None = None) -> ReachSpaceI:
    """Least fixedpoint of the support chain under the averaged guarded dynamics."""
    tol = tol or m.tol
    rho0 = check_density(rho0, tol, partial=True)
    if np.real(np.trace(rho0)) <= tol.rank_tol:
        raise PreconditionError("input state has zero trace")
    seeds = support(rho0, tol)
    space = seeds
    generators = [ReachGenerator(v, ()) for v in seeds.vectors]
    chain = [space]
    frontier = list(generators)
    while frontier and space.dim < m.dim:
        added = []
        for g in frontier:
            for a in m.actions:
                for j, k in enumerate(m.guarded(a)):
                    v = _image(k, g.vector, tol)
                    if v is None:
                        continue
                    r = gram_schmidt_extend(space, v, tol)
                    if r is None:
                        continue
                    space = Subspace(np.column_stack([space.basis, r]))
                    added.append(ReachGenerator(v, g.word + (a,), g.kraus_path + (f"{a}.{j + 1}",)))
        if not added:
            break
        chain.append(space)
        generators.extend(added)
        frontier = added
    return ReachSpaceI(space, tuple(generators), len(chain) - 1, tuple(chain))


def reachable_space_II(m: QuantumMDP, psi0, tol: Tolerances | None = None) -> ReachSpaceII:
    """Pure reachable states of the operator-level program whose outer products stay independent."""
    tol = tol or m.tol
    psi0 = as_vector(psi0, m.dim)
    if abs(np.linalg.norm(psi0) - 1) > tol.norm_tol:
        raise PreconditionError("input vector must be normalized")
    ops = [(name, name.rsplit(".", 1)[0], e @ m.meas.m_true) for name, e in operator_level(m)]
    d2 = m.dim ** 2
    q = np.zeros((d2, 0))

    def residual(v):
        x = hermitian_vectorize(outer(v), tol)
        for _ in range(2):
            x = x - q @ (q.T @ x)
        return x

    first = fix_phase(psi0, tol)
    q = np.column_stack([q, residual(first) / np.linalg.norm(residual(first))])
    pure = [ReachGenerator(first, ())]
    sizes = [1]
    frontier = list(pure)
    while frontier and len(pure) < d2:
        added = []
        for g in frontier:
            for name, action, k in ops:
                v = _image(k, g.vector, tol)
                if v is None:
                    continue
                r = residual(v)
                n = np.linalg.norm(r)
                if n <= tol.rank_tol:
                    continue
                q = np.column_stack([q, r / n])
                added.append(ReachGenerator(v, g.word + (action,), g.kraus_path + (name,)))
                if len(pure) + len(added) == d2:
                    break
            if len(pure) + len(added) == d2:
                break
        if not added:
            break
        pure.extend(added)
        sizes.append(len(pure))
        frontier = added
    space = OperatorSpace(tuple(outer(g.vector) for g in pure))
    return ReachSpaceII(tuple(pure), space, len(sizes) - 1, tuple(sizes))


def express_in_generators(v, r: ReachSpaceI, tol: Tolerances | None = None) -> list[tuple[complex, ReachGenerator]]:
    """Coefficients of ``v`` over a first-come independent subset of the generators."""
    tol = tol or DEFAULT_TOL
    v = as_vector(v, r.basis.ambient_dim)
    chosen: list[ReachGenerator] = []
    span = Subspace.zero(r.basis.ambient_dim)
    for g in r.generators:
        e = gram_schmidt_extend(span, g.vector, tol)
        if e is not None:
            chosen.append(g)
            span = Subspace(np.column_stack([span.basis, e]))
    if not chosen:
        raise PreconditionError("reachable space has no generators")
    mat = np.column_stack([g.vector for g in chosen])
    coeffs, *_ = np.linalg.lstsq(mat, v, rcond=None)
    err = np.linalg.norm(mat @ coeffs - v)
    if err > tol.rank_tol * max(1.0, np.linalg.norm(v)):
        raise PreconditionError(f"vector lies outside the reachable space (residual {err:.3e})")
    return [(complex(c), g) for c, g in zip(coeffs, chosen) if abs(c) > tol.rank_tol]


def word_kraus(m: QuantumMDP, word) -> list[np.ndarray]:
    """Kraus operators of the guarded composite step along ``word`` (first action acts first)."""
    ops = [np.eye(m.dim, dtype=complex)]
    for a in m.check_word(word):
        ops = [k @ o for o in ops for k in m.guarded(a)]
    return ops


def loop_reachable_space(m: QuantumMDP, loop, rho, tol: Tolerances | None = None) -> Subspace:
    """Reachable space of ``rho`` when the scheduler repeats ``loop`` forever."""
    tol = tol or m.tol
    kraus = word_kraus(m, loop)
    space = support(check_density(rho, tol, partial=True), tol)
    frontier = space.vectors
    while frontier and space.dim < m.dim:
        added = []
        for v in frontier:
            for k in kraus:
                w = _image(k, v, tol)
                if w is None:
                    continue
                r = gram_schmidt_extend(space, w, tol)
                if r is not None:
                    space = Subspace(np.column_stack([space.basis, r]))
                    added.append(w)
        frontier = added
    return space
