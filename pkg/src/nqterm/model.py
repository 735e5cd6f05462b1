"""Flat and located quantum MDPs, schedulers and the evolution oracle."""

from __future__ import annotations

import enum
import itertools
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import PreconditionError, ValidationError
from .numerics import DEFAULT_TOL, Tolerances, as_matrix, check_density, check_hermitian

Word = tuple  # finite scheduler: a tuple of action names, () is the empty word


class OpClass(enum.Enum):
    TRACE_PRESERVING = "trace-preserving"
    TRACE_NONINCREASING = "trace-nonincreasing"
    UNCLASSIFIED = "unclassified"


@dataclass(frozen=True, eq=False)
class SuperOperator:
    """Quantum operation rho -> sum_k E_k rho E_k^dagger."""

    kraus: tuple
    kind: OpClass = OpClass.UNCLASSIFIED

    def __post_init__(self):
        ks = tuple(as_matrix(k) for k in self.kraus)
        if not ks:
            raise ValidationError("a super-operator needs at least one Kraus operator")
        d = ks[0].shape[0]
        for k in ks:
            if k.shape != (d, d):
                raise ValidationError("Kraus operators must share one square shape")
            k.setflags(write=False)
        object.__setattr__(self, "kraus", ks)

    @property
    def dim(self) -> int:
        return self.kraus[0].shape[0]

    def gram(self) -> np.ndarray:
        return sum(k.conj().T @ k for k in self.kraus)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        return sum(k @ rho @ k.conj().T for k in self.kraus)

    def check(self, kind: OpClass, tol: Tolerances = DEFAULT_TOL) -> "SuperOperator":
        """Validate against ``kind`` and return a copy tagged with it."""
        g = self.gram()
        if kind is OpClass.TRACE_PRESERVING:
            err = np.max(np.abs(g - np.eye(self.dim)))
            if err > tol.trace_tol:
                raise ValidationError(f"super-operator is not trace-preserving (deviation {err:.3e})")
        elif kind is OpClass.TRACE_NONINCREASING:
            low = np.linalg.eigvalsh(np.eye(self.dim) - (g + g.conj().T) / 2)[0]
            if low < -tol.psd_tol:
                raise ValidationError(f"super-operator increases trace (eigenvalue {low:.3e})")
        if len(self.kraus) > self.dim ** 2:
            warnings.warn(f"{len(self.kraus)} Kraus operators exceed d^2 = {self.dim ** 2}", stacklevel=2)
        return SuperOperator(self.kraus, kind)


@dataclass(frozen=True, eq=False)
class Measurement:
    """Two-outcome projective guard; the false outcome means termination."""

    m_true: np.ndarray
    m_false: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "m_true", as_matrix(self.m_true))
        object.__setattr__(self, "m_false", as_matrix(self.m_false, self.m_true.shape[0]))

    def check(self, tol: Tolerances = DEFAULT_TOL) -> "Measurement":
        d = self.m_true.shape[0]
        for name, p in (("m_true", self.m_true), ("m_false", self.m_false)):
            check_hermitian(p, tol)
            err = np.max(np.abs(p @ p - p))
            if err > tol.herm_tol:
                raise ValidationError(f"{name} is not a projector (deviation {err:.3e})")
        if np.max(np.abs(self.m_true + self.m_false - np.eye(d))) > tol.trace_tol:
            raise ValidationError("m_true + m_false must equal the identity")
        if np.max(np.abs(self.m_true @ self.m_false)) > tol.herm_tol:
            raise ValidationError("m_true and m_false must be orthogonal")
        return self

    @classmethod
    def from_false(cls, m_false) -> "Measurement":
        m_false = as_matrix(m_false)
        return cls(np.eye(m_false.shape[0]) - m_false, m_false)


@dataclass(frozen=True)
class LassoScheduler:
    """Infinite scheduler prefix . loop^omega."""

    prefix: Word
    loop: Word

    def __post_init__(self):
        object.__setattr__(self, "prefix", tuple(self.prefix))
        object.__setattr__(self, "loop", tuple(self.loop))
        if not self.loop:
            raise ValidationError("a lasso scheduler needs a nonempty loop")

    def unroll(self, steps: int) -> Word:
        word = list(self.prefix[:steps])
        while len(word) < steps:
            word.extend(self.loop)
        return tuple(word[:steps])

    def normalized(self) -> "LassoScheduler":
        """Absorb trailing copies of the loop into it and reduce the loop to its primitive root."""
        loop = _primitive_root(self.loop)
        prefix = list(self.prefix)
        while len(prefix) >= len(loop) and tuple(prefix[len(prefix) - len(loop):]) == loop:
            del prefix[len(prefix) - len(loop):]
        return LassoScheduler(tuple(prefix), loop)

    def __str__(self):
        pre = " ".join(self.prefix) or "eps"
        return f"{pre} . ({' '.join(self.loop)})^w"

    def to_json(self) -> dict:
        return {"prefix": list(self.prefix), "loop": list(self.loop)}


def _primitive_root(word: Word) -> Word:
    n = len(word)
    for p in range(1, n + 1):
        if n % p == 0 and word[:p] * (n // p) == word:
            return word[:p]
    return word


@dataclass(frozen=True, eq=False)
class QuantumMDP:
    """Flat quantum MDP: actions, trace-preserving dynamics and a termination guard."""

    dim: int
    actions: tuple
    dynamics: Mapping
    meas: Measurement
    tol: Tolerances = field(default=DEFAULT_TOL, repr=False)

    def __post_init__(self):
        actions = tuple(self.actions)
        if not actions:
            raise ValidationError("a quantum MDP needs at least one action")
        if len(set(actions)) != len(actions):
            raise ValidationError("action names must be unique")
        if set(self.dynamics) != set(actions):
            raise ValidationError("dynamics must be given for exactly the declared actions")
        dyn = {}
        for a in actions:
            op = self.dynamics[a]
            if not isinstance(op, SuperOperator):
                op = SuperOperator(tuple(op))
            if op.dim != self.dim:
                raise ValidationError(f"action {a!r} acts on dimension {op.dim}, expected {self.dim}")
            dyn[a] = op.check(OpClass.TRACE_PRESERVING, self.tol)
        if self.meas.m_true.shape[0] != self.dim:
            raise ValidationError("measurement dimension does not match the model")
        self.meas.check(self.tol)
        guarded = {a: tuple(k @ self.meas.m_true for k in dyn[a].kraus) for a in actions}
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "dynamics", dyn)
        object.__setattr__(self, "_guarded", guarded)

    def guarded(self, action) -> tuple:
        """Kraus operators of E_action composed after the M_true projection."""
        try:
            return self._guarded[action]
        except KeyError:
            raise ValidationError(f"unknown action {action!r}") from None

    def check_word(self, word: Iterable) -> Word:
        word = tuple(word)
        for a in word:
            if a not in self.dynamics:
                raise ValidationError(f"unknown action {a!r}")
        return word

    def with_tolerances(self, tol: Tolerances) -> "QuantumMDP":
        return QuantumMDP(self.dim, self.actions, self.dynamics, self.meas, tol)

    def restrict(self, actions: Sequence) -> "QuantumMDP":
        actions = self.check_word(actions)
        return QuantumMDP(self.dim, actions, {a: self.dynamics[a] for a in actions}, self.meas, self.tol)


def apply_F(m: QuantumMDP, action, rho) -> np.ndarray:
    return sum(k @ rho @ k.conj().T for k in m.guarded(action))


def apply_word(m: QuantumMDP, word: Iterable, rho) -> np.ndarray:
    """Apply the guarded steps of ``word``; the first action acts first."""
    rho = np.asarray(rho, dtype=complex)
    for a in m.check_word(word):
        rho = apply_F(m, a, rho)
    return rho


def _terminated_series(m: QuantumMDP, rho: np.ndarray, word: Word) -> np.ndarray:
    """Termination mass tr(M_false F_{word up to i}(rho)) for i = 0..len(word)."""
    out = np.empty(len(word) + 1)
    mf = m.meas.m_false
    for i, a in enumerate(word):
        out[i] = np.real(np.trace(mf @ rho))
        rho = apply_F(m, a, rho)
    out[len(word)] = np.real(np.trace(mf @ rho))
    return out


def termination_probability(m: QuantumMDP, rho, word: Iterable = (), strict: bool = False) -> float:
    word = m.check_word(word)
    rho = check_density(rho, m.tol, partial=not strict)
    return float(np.clip(np.sum(_terminated_series(m, rho, word)), 0.0, 1.0 + m.tol.trace_tol))


def termination_probability_lasso(m: QuantumMDP, rho, s: LassoScheduler, max_steps: int) -> tuple[float, float]:
    """Truncated TP of ``s`` over ``max_steps`` actions and the gain over the final loop period."""
    if max_steps < len(s.prefix):
        raise PreconditionError("max_steps must cover the scheduler prefix")
    word = m.check_word(s.unroll(max_steps))
    rho = check_density(rho, m.tol, partial=True)
    cumulative = np.cumsum(_terminated_series(m, rho, word))
    last = cumulative[-1]
    before = cumulative[max(len(cumulative) - 1 - len(s.loop), 0)]
    return float(last), float(last - before)


def tp_trace(m: QuantumMDP, rho, word: Iterable) -> list[float]:
    """Cumulative TP after each prefix length 0..len(word)."""
    word = m.check_word(word)
    rho = check_density(rho, m.tol, partial=True)
    return [float(x) for x in np.cumsum(_terminated_series(m, rho, word))]


AVERAGE_ACTION = "avg"


def average_program(m: QuantumMDP) -> QuantumMDP:
    scale = 1 / np.sqrt(len(m.actions))
    kraus = tuple(scale * k for a in m.actions for k in m.dynamics[a].kraus)
    return QuantumMDP(m.dim, (AVERAGE_ACTION,), {AVERAGE_ACTION: SuperOperator(kraus)}, m.meas, m.tol)


def operator_level(m: QuantumMDP) -> list[tuple[str, np.ndarray]]:
    """One (name, E_{j,k}) entry per Kraus operator, named ``action.k`` with k counted from 1."""
    return [(f"{a}.{k + 1}", e) for a in m.actions for k, e in enumerate(m.dynamics[a].kraus)]


# -- located models ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Transition:
    source: int
    action: str
    target: int
    op: SuperOperator


@dataclass(frozen=True, eq=False)
class LocatedQMDP:
    """Locations 0..n-1 (the last one is the end location) with labelled transitions."""

    dim: int
    locations: tuple
    actions: tuple
    transitions: tuple
    tol: Tolerances = field(default=DEFAULT_TOL, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "locations", tuple(self.locations))
        object.__setattr__(self, "actions", tuple(self.actions))
        object.__setattr__(self, "transitions", tuple(self.transitions))
        n = len(self.locations)
        if n == 0 or not self.actions:
            raise ValidationError("a located model needs locations and actions")
        table = {}
        for t in self.transitions:
            if not (0 <= t.source < n and 0 <= t.target < n):
                raise ValidationError(f"transition refers to an unknown location: {t.source} -> {t.target}")
            if t.action not in self.actions:
                raise ValidationError(f"transition uses unknown action {t.action!r}")
            if t.op.dim != self.dim:
                raise ValidationError("transition super-operator has the wrong dimension")
            table.setdefault((t.source, t.action), []).append(t)
        for loc in range(n):
            for a in self.actions:
                group = table.get((loc, a))
                if not group:
                    raise ValidationError(f"no transition from {self.locations[loc]} under {a!r}")
                gram = sum(t.op.gram() for t in group)
                err = np.max(np.abs(gram - np.eye(self.dim)))
                if err > self.tol.trace_tol:
                    raise ValidationError(
                        f"transitions from {self.locations[loc]} under {a!r} are not trace-preserving "
                        f"(deviation {err:.3e})"
                    )
        object.__setattr__(self, "_table", {k: tuple(v) for k, v in table.items()})

    @property
    def end(self) -> int:
        return len(self.locations) - 1

    def outgoing(self, loc: int, action) -> tuple:
        try:
            return self._table[(loc, action)]
        except KeyError:
            raise ValidationError(f"unknown location/action pair ({loc!r}, {action!r})") from None

    def location_index(self, loc) -> int:
        if isinstance(loc, (int, np.integer)):
            return int(loc)
        try:
            return self.locations.index(loc)
        except ValueError:
            raise ValidationError(f"unknown location {loc!r}") from None

    def choice_points(self) -> list[int]:
        """Locations whose transitions depend on the chosen action."""
        out = []
        for loc in range(len(self.locations)):
            sigs = {_transition_signature(self.outgoing(loc, a)) for a in self.actions}
            if len(sigs) > 1:
                out.append(loc)
        return out


def _transition_signature(group) -> tuple:
    return tuple((t.target, tuple(k.tobytes() for k in t.op.kraus)) for t in group)


def step_located(m: LocatedQMDP, loc, rho, action) -> list[tuple[int, np.ndarray]]:
    loc = m.location_index(loc)
    rho = check_density(rho, m.tol, partial=True)
    return [(t.target, t.op.apply(rho)) for t in m.outgoing(loc, action)]


def run_located(m: LocatedQMDP, loc, rho, word: Iterable) -> dict[int, np.ndarray]:
    """Evolve a location-indexed distribution of partial states along ``word``."""
    state = {m.location_index(loc): np.asarray(rho, dtype=complex)}
    for a in word:
        nxt: dict[int, np.ndarray] = {}
        for src, r in state.items():
            for t in m.outgoing(src, a):
                nxt[t.target] = nxt.get(t.target, 0) + t.op.apply(r)
        state = nxt
    return state


def located_to_flat(m: LocatedQMDP, lazy: bool = True) -> QuantumMDP:
    """Encode locations into a control register; basis index is location * dim + value."""
    n, d = len(m.locations), m.dim
    if lazy:
        varying = m.choice_points()
    else:
        varying = list(range(n))
    default = m.actions[0]
    actions, dynamics = [], {}
    for combo in itertools.product(m.actions, repeat=len(varying)):
        chosen = dict(zip(varying, combo))
        name = ",".join(combo) if combo else default
        kraus = []
        for loc in range(n):
            for t in m.outgoing(loc, chosen.get(loc, default)):
                jump = np.zeros((n, n))
                jump[t.target, loc] = 1
                kraus.extend(np.kron(jump, k) for k in t.op.kraus)
        actions.append(name)
        dynamics[name] = SuperOperator(tuple(kraus))
    end = np.zeros((n, n))
    end[m.end, m.end] = 1
    m_false = np.kron(end, np.eye(d))
    return QuantumMDP(n * d, tuple(actions), dynamics, Measurement.from_false(m_false), m.tol)


def flat_to_located(m: QuantumMDP) -> LocatedQMDP:
    """Two locations: a running location that self-loops and an absorbing end location."""
    eye = np.eye(m.dim)
    transitions = []
    for a in m.actions:
        transitions.append(Transition(0, a, 0, SuperOperator(m.guarded(a))))
        transitions.append(Transition(0, a, 1, SuperOperator((m.meas.m_false,))))
        transitions.append(Transition(1, a, 1, SuperOperator((eye,))))
    return LocatedQMDP(m.dim, ("l1", "l2"), m.actions, tuple(transitions), m.tol)
