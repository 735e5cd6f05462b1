"""Text frontend for nondeterministic quantum while-programs and their lowering to located MDPs.

Grammar (statements separated by newlines or ``;``, ``#`` starts a comment)::

    stmt  := "skip"
           | VAR ":=" "|0>"
           | VAR ("," VAR)* ":=" "U" "[" NAME "]"
           | "choice" "{" block ("|" block)+ "}"
           | "if" guard "{" block "}"
           | "while" guard "{" block "}"
    guard := "M" "[" NAME "]" ("[" VAR ("," VAR)* "]")?

Operator names resolve against a bindings mapping::

    {"variables": {"q1": 2, ...},                     # optional, fixes tensor order
     "unitaries": {"NAME": matrix, ...},
     "measurements": {"NAME": {"m_true": matrix, "m_false": matrix}, ...}}
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import ValidationError
from .io import decode_matrix
from .model import LocatedQMDP, Measurement, SuperOperator, Transition
from .numerics import DEFAULT_TOL, Tolerances, as_matrix


class ProgramSyntaxError(ValidationError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {message}")
        self.line = line
        self.col = col


# -- AST ----------------------------------------------------------------------

@dataclass(frozen=True)
class Skip:
    pass


@dataclass(frozen=True)
class Init:
    var: str


@dataclass(frozen=True)
class Unitary:
    reg: tuple
    name: str


@dataclass(frozen=True)
class Seq:
    stmts: tuple


@dataclass(frozen=True)
class Choice:
    branches: tuple


@dataclass(frozen=True)
class If:
    meas: str
    reg: tuple | None
    then: Seq


@dataclass(frozen=True)
class While:
    meas: str
    reg: tuple | None
    body: Seq


@dataclass(frozen=True, eq=False)
class ProgramAST:
    body: Seq
    variables: dict  # name -> dimension, in tensor order
    unitaries: dict  # name -> matrix
    measurements: dict  # name -> (m_true, m_false)

    @property
    def dim(self) -> int:
        return int(np.prod(list(self.variables.values()), dtype=int))

    @property
    def arity(self) -> int:
        """Number of actions: the widest nondeterministic choice, at least one."""
        return max([1] + [len(s.branches) for s in _walk(self.body) if isinstance(s, Choice)])


def _walk(stmt):
    yield stmt
    if isinstance(stmt, Seq):
        for s in stmt.stmts:
            yield from _walk(s)
    elif isinstance(stmt, Choice):
        for b in stmt.branches:
            yield from _walk(b)
    elif isinstance(stmt, If):
        yield from _walk(stmt.then)
    elif isinstance(stmt, While):
        yield from _walk(stmt.body)


# -- parsing --------------------------------------------------------------------

_TOKEN = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<comment>#[^\n]*)|(?P<nl>\n)|(?P<ket>\|0>)|(?P<assign>:=)"
    r"|(?P<punct>[{}\[\],|;])|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
)
_KEYWORDS = {"skip", "choice", "if", "while"}


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(src: str) -> list[_Tok]:
    toks, pos, line, line_start = [], 0, 1, 0
    while pos < len(src):
        mt = _TOKEN.match(src, pos)
        if not mt:
            raise ProgramSyntaxError(f"unexpected character {src[pos]!r}", line, pos - line_start + 1)
        kind, text = mt.lastgroup, mt.group()
        col = pos - line_start + 1
        if kind == "nl":
            toks.append(_Tok("sep", "\n", line, col))
            line, line_start = line + 1, mt.end()
        elif kind in ("punct", "assign", "ket"):
            toks.append(_Tok("sep" if text == ";" else text, text, line, col))
        elif kind == "ident":
            toks.append(_Tok(text if text in _KEYWORDS else "ident", text, line, col))
        pos = mt.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, src: str):
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, kind: str, what: str | None = None) -> _Tok:
        tok = self.next()
        if tok.kind != kind:
            shown = tok.text if tok.kind != "sep" else "end of statement"
            raise ProgramSyntaxError(f"expected {what or kind!r}, found {shown or 'end of input'!r}", tok.line, tok.col)
        return tok

    def skip_seps(self):
        while self.peek().kind == "sep":
            self.i += 1

    def block(self, stops: tuple) -> Seq:
        stmts = []
        self.skip_seps()
        while self.peek().kind not in stops:
            stmts.append(self.stmt())
            tok = self.peek()
            if tok.kind not in stops and tok.kind != "sep":
                raise ProgramSyntaxError(f"expected end of statement, found {tok.text!r}", tok.line, tok.col)
            self.skip_seps()
        return Seq(tuple(s for s in stmts if not isinstance(s, Skip)))

    def register(self) -> tuple:
        names = [self.expect("ident", "variable").text]
        while self.peek().kind == ",":
            self.next()
            names.append(self.expect("ident", "variable").text)
        return tuple(names)

    def guard(self) -> tuple[str, tuple | None]:
        tok = self.expect("ident", "M")
        if tok.text != "M":
            raise ProgramSyntaxError(f"expected 'M', found {tok.text!r}", tok.line, tok.col)
        self.expect("[")
        name = self.expect("ident", "measurement name").text
        self.expect("]")
        reg = None
        if self.peek().kind == "[":
            self.next()
            reg = self.register()
            self.expect("]")
        return name, reg

    def braced(self) -> Seq:
        self.expect("{")
        body = self.block(("}",))
        self.expect("}")
        return body

    def stmt(self):
        tok = self.peek()
        if tok.kind == "skip":
            self.next()
            return Skip()
        if tok.kind == "choice":
            self.next()
            self.expect("{")
            branches = [self.block(("|", "}"))]
            while self.peek().kind == "|":
                self.next()
                branches.append(self.block(("|", "}")))
            self.expect("}")
            if len(branches) < 2:
                raise ProgramSyntaxError("a choice needs at least two branches", tok.line, tok.col)
            return Choice(tuple(branches))
        if tok.kind in ("if", "while"):
            self.next()
            name, reg = self.guard()
            body = self.braced()
            return If(name, reg, body) if tok.kind == "if" else While(name, reg, body)
        if tok.kind == "ident":
            reg = self.register()
            self.expect(":=")
            if self.peek().kind == "|0>":
                self.next()
                if len(reg) != 1:
                    raise ProgramSyntaxError("initialization takes a single variable", tok.line, tok.col)
                return Init(reg[0])
            u = self.expect("ident", "U")
            if u.text != "U":
                raise ProgramSyntaxError(f"expected '|0>' or 'U', found {u.text!r}", u.line, u.col)
            self.expect("[")
            name = self.expect("ident", "unitary name").text
            self.expect("]")
            if len(set(reg)) != len(reg):
                raise ProgramSyntaxError("register lists a variable twice", tok.line, tok.col)
            return Unitary(reg, name)
        shown = tok.text if tok.kind not in ("sep", "eof") else "end of statement"
        raise ProgramSyntaxError(f"unexpected {shown!r}", tok.line, tok.col)


def parse_program(source: str, bindings: Mapping, tol: Tolerances = DEFAULT_TOL) -> ProgramAST:
    parser = _Parser(source)
    body = parser.block(("eof",))
    return _resolve(body, bindings, tol)


def _used_variables(body: Seq) -> list[str]:
    seen: list[str] = []
    for s in _walk(body):
        names = ()
        if isinstance(s, Init):
            names = (s.var,)
        elif isinstance(s, Unitary):
            names = s.reg
        elif isinstance(s, (If, While)) and s.reg:
            names = s.reg
        for n in names:
            if n not in seen:
                seen.append(n)
    return seen


def _matrix(value, what: str) -> np.ndarray:
    try:
        return decode_matrix(value)
    except ValidationError as exc:
        raise ValidationError(f"{what}: {exc}") from None


def _resolve(body: Seq, bindings: Mapping, tol: Tolerances) -> ProgramAST:
    if not isinstance(bindings, Mapping):
        raise ValidationError("bindings must be a JSON object")
    used = _used_variables(body)
    if "variables" in bindings:
        variables = {str(k): int(v) for k, v in bindings["variables"].items()}
        missing = [v for v in used if v not in variables]
        if missing:
            raise ValidationError(f"undeclared variables: {missing}")
        if any(d < 1 for d in variables.values()):
            raise ValidationError("variable dimensions must be positive")
    else:
        variables = {v: 2 for v in used}
    if not variables:
        variables = {"q": 1}

    def reg_dim(reg):
        return int(np.prod([variables[v] for v in reg], dtype=int))

    total = int(np.prod(list(variables.values()), dtype=int))
    unitaries, measurements = {}, {}
    ubind = bindings.get("unitaries", {})
    mbind = bindings.get("measurements", {})
    for s in _walk(body):
        if isinstance(s, Unitary):
            if s.name not in ubind:
                raise ValidationError(f"unbound unitary {s.name!r}")
            u = _matrix(ubind[s.name], f"unitary {s.name}")
            if u.shape != (reg_dim(s.reg),) * 2:
                raise ValidationError(f"unitary {s.name!r} has shape {u.shape}, register {s.reg} needs {reg_dim(s.reg)}")
            if np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) > tol.trace_tol:
                raise ValidationError(f"operator {s.name!r} bound to a unitary slot is not unitary")
            unitaries[s.name] = u
        elif isinstance(s, (If, While)):
            if s.meas not in mbind:
                raise ValidationError(f"unbound measurement {s.meas!r}")
            spec = mbind[s.meas]
            if "m_true" not in spec and "m_false" not in spec:
                raise ValidationError(f"measurement {s.meas!r} needs m_true or m_false")
            mt = _matrix(spec["m_true"], f"measurement {s.meas}") if "m_true" in spec else None
            mf = _matrix(spec["m_false"], f"measurement {s.meas}") if "m_false" in spec else None
            k = (mt if mt is not None else mf).shape[0]
            mt = np.eye(k) - mf if mt is None else mt
            mf = np.eye(k) - mt if mf is None else mf
            expected = reg_dim(s.reg) if s.reg else total
            if mt.shape != (expected, expected) or mf.shape != (expected, expected):
                raise ValidationError(f"measurement {s.meas!r} does not match its register dimension {expected}")
            Measurement(mt, mf).check(tol)
            measurements[s.meas] = (mt, mf)
    return ProgramAST(body, variables, unitaries, measurements)


# -- lowering -------------------------------------------------------------------

def embed(op: np.ndarray, reg: tuple, variables: Mapping) -> np.ndarray:
    """Lift ``op`` acting on the ordered register ``reg`` to the full tensor space."""
    names = list(variables)
    dims = [variables[v] for v in names]
    pos = [names.index(v) for v in reg]
    rest = [i for i in range(len(names)) if i not in pos]
    n = len(names)
    full = np.kron(op, np.eye(int(np.prod([dims[i] for i in rest], dtype=int))))
    # full acts on (reg..., rest...); permute tensor legs back to declaration order
    order = pos + rest
    shape = [dims[i] for i in order]
    t = full.reshape(shape + shape)
    inv = np.argsort(order)
    t = t.transpose(list(inv) + [n + i for i in inv])
    total = int(np.prod(dims, dtype=int))
    return t.reshape(total, total)


def _locate(stmt, table: dict):
    """Assign pre-order location numbers to located statements."""
    if isinstance(stmt, Seq):
        for s in stmt.stmts:
            _locate(s, table)
        return
    table[id(stmt)] = len(table)
    if isinstance(stmt, Choice):
        for b in stmt.branches:
            _locate(b, table)
    elif isinstance(stmt, If):
        _locate(stmt.then, table)
    elif isinstance(stmt, While):
        _locate(stmt.body, table)


def compile_to_located(ast: ProgramAST, tol: Tolerances = DEFAULT_TOL) -> LocatedQMDP:
    table: dict[int, int] = {}
    _locate(ast.body, table)
    n = len(table) + 1
    end = n - 1
    d = ast.dim
    actions = tuple(f"alpha{j + 1}" for j in range(ast.arity))
    eye = np.eye(d)
    transitions: list[Transition] = []

    def entry(stmts: tuple, cont: int) -> int:
        return table[id(stmts[0])] if stmts else cont

    def every(src, dst, kraus):
        op = SuperOperator(tuple(kraus))
        transitions.extend(Transition(src, a, dst, op) for a in actions)

    def guard(s):
        mt, mf = ast.measurements[s.meas]
        if s.reg:
            return embed(mt, s.reg, ast.variables), embed(mf, s.reg, ast.variables)
        return mt, mf

    def emit_seq(seq: Seq, cont: int):
        for i, s in enumerate(seq.stmts):
            emit(s, table[id(s)], entry(seq.stmts[i + 1:], cont))

    def emit(s, loc: int, cont: int):
        if isinstance(s, Init):
            k = ast.variables[s.var]
            kraus = []
            for j in range(k):
                proj = np.zeros((k, k))
                proj[0, j] = 1
                kraus.append(embed(proj, (s.var,), ast.variables))
            every(loc, cont, kraus)
        elif isinstance(s, Unitary):
            every(loc, cont, [embed(ast.unitaries[s.name], s.reg, ast.variables)])
        elif isinstance(s, Choice):
            ident = SuperOperator((eye,))
            last = len(s.branches) - 1
            for j, a in enumerate(actions):
                branch = s.branches[min(j, last)]
                transitions.append(Transition(loc, a, entry(branch.stmts, cont), ident))
            for b in s.branches:
                emit_seq(b, cont)
        elif isinstance(s, If):
            mt, mf = guard(s)
            every(loc, entry(s.then.stmts, cont), [mt])
            every(loc, cont, [mf])
            emit_seq(s.then, cont)
        elif isinstance(s, While):
            mt, mf = guard(s)
            every(loc, entry(s.body.stmts, loc), [mt])
            every(loc, cont, [mf])
            emit_seq(s.body, loc)

    emit_seq(ast.body, end)
    every(end, end, [eye])
    locations = tuple(f"l{i + 1}" for i in range(n))
    return LocatedQMDP(d, locations, actions, tuple(transitions), tol)
