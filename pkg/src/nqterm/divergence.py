"""Pure divergent set via a breadth-first derivation tree of subspaces."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InconsistencyError, PreconditionError
from .model import LassoScheduler, QuantumMDP, Word, termination_probability_lasso
from .numerics import (
    Subspace,
    Tolerances,
    canonical_basis,
    nullspace,
    outer,
    subspace_join,
)


@dataclass(eq=False)
class DivNode:
    """Tree node for the finite scheduler ``word``; a nonempty ``loop`` marks a stabilized leaf."""

    word: Word
    space: Subspace
    children: dict = field(default_factory=dict)
    loop: Word = ()

    @property
    def stabilized(self) -> bool:
        return bool(self.loop)

    @property
    def loop_action(self) -> str | None:
        return self.loop[0] if len(self.loop) == 1 else None

    def scheduler(self) -> LassoScheduler:
        return LassoScheduler(self.word, self.loop)


@dataclass(eq=False)
class DivergenceResult:
    root: DivNode | None
    leaves: list
    union_dim_profile: list  # dimension of the join of each layer's node spaces
    depth: int
    spaces: dict  # every derived word -> subspace

    def space_of(self, word) -> Subspace:
        return self.spaces[tuple(word)]


def pd_zero(m: QuantumMDP, tol: Tolerances | None = None) -> Subspace:
    """States that never measure the termination outcome right away."""
    tol = tol or m.tol
    vecs = nullspace(m.meas.m_false, m.dim, tol)
    return Subspace(np.column_stack(vecs)) if vecs else Subspace.zero(m.dim)


def derive_child(m: QuantumMDP, action, suffix_space: Subspace, pd0: Subspace, tol: Tolerances | None = None) -> Subspace:
    """States of ``pd0`` whose guarded ``action``-image stays inside ``suffix_space``."""
    tol = tol or m.tol
    b = pd0.basis
    if pd0.dim == 0:
        return Subspace.zero(m.dim)
    perp = suffix_space.complement(tol).basis
    if perp.shape[1] == 0:
        return pd0
    rows = np.vstack([perp.conj().T @ k @ b for k in m.guarded(action)])
    coords = nullspace(rows, pd0.dim, tol)
    if not coords:
        return Subspace.zero(m.dim)
    c = np.column_stack(coords)
    vecs = b @ c
    return Subspace(canonical_basis(vecs @ vecs.conj().T, tol))


def compute_divergent(m: QuantumMDP, tol: Tolerances | None = None, max_depth: int | None = None) -> DivergenceResult:
    tol = tol or m.tol
    max_depth = m.dim * m.dim if max_depth is None else max_depth
    pd0 = pd_zero(m, tol)
    spaces: dict[Word, Subspace] = {(): pd0}

    def space(word: Word) -> Subspace:
        if word not in spaces:
            spaces[word] = derive_child(m, word[0], space(word[1:]), pd0, tol)
        return spaces[word]

    if pd0.dim == 0:
        return DivergenceResult(None, [], [0], 0, spaces)
    root = DivNode((), pd0)
    layer = [root]
    leaves: list[DivNode] = []
    profile: list[int] = []
    depth = 0
    while layer:
        if depth > max_depth:
            raise InconsistencyError(
                f"derivation tree did not stabilize within depth {max_depth}; tolerances {tol.as_dict()}"
            )
        union = Subspace.zero(m.dim)
        for node in layer:
            union = subspace_join(union, node.space, tol)
        profile.append(union.dim)
        nxt = []
        for node in layer:
            for a in m.actions:
                w = node.word + (a,)
                node.children[a] = DivNode(w, space(w))
            node.loop = _find_loop(node, space, m, tol)
            if node.stabilized:
                leaves.append(node)
            else:
                nxt.extend(c for c in node.children.values() if c.space.dim > 0)
        if not nxt:
            break
        layer = nxt
        depth += 1
    return DivergenceResult(root, leaves, profile, depth, spaces)


def _loop_keeps(space, prefix: Word, loop: Word, dim: int, target: int) -> bool:
    # the spaces of prefix.loop^k shrink with k and freeze once two agree, so k = d decides all k
    return space(prefix + loop * dim).dim == target


def _find_loop(node: DivNode, space, m: QuantumMDP, tol: Tolerances) -> Word:
    d, k = m.dim, node.space.dim
    for a, child in node.children.items():
        if child.space.dim == k and node.space.includes(child.space, tol):
            if _loop_keeps(space, node.word, (a,), d, k):
                return (a,)
    # longer loops: the path back from an ancestor whose space has the same dimension
    for j in range(len(node.word) - 1, -1, -1):
        prefix, loop = node.word[:j], node.word[j:]
        if space(prefix).dim != k:
            break
        if len(loop) > 1 and _loop_keeps(space, prefix, loop, d, k):
            return loop
    return ()


def divergence_violation(m: QuantumMDP, node: DivNode, extra_steps: int | None = None) -> float:
    """Largest truncated termination probability over the node's basis states under its lasso."""
    s = node.scheduler()
    steps = len(node.word) + (extra_steps if extra_steps is not None else 3 * m.dim * len(node.loop))
    worst = 0.0
    for v in node.space.vectors:
        tp, _ = termination_probability_lasso(m, outer(v), s, steps)
        worst = max(worst, tp)
    return worst


def divergence_scheduler(m: QuantumMDP, node: DivNode, tol: Tolerances | None = None) -> LassoScheduler:
    tol = tol or m.tol
    if not node.stabilized:
        raise PreconditionError(f"node {node.word} is not stabilized")
    s = node.scheduler()
    worst = divergence_violation(m, node)
    if worst > tol.rank_tol:
        raise InconsistencyError(
            f"divergence lasso {s} lets basis states terminate with probability {worst:.3e}"
        )
    return s
