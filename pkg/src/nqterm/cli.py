"""Command-line front end: ``nqterm <command> --model FILE ...``.

Every command writes one JSON report (stdout or ``--out``). Exit codes: 0 ok,
2 bad input, 3 unmet precondition, 4 nonterm requested but the program
terminates, 5 internal inconsistency.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .divergence import compute_divergent
from .errors import NQTermError, PreconditionError, ValidationError
from .io import decode_state, decode_vector, dumps, encode_matrix, encode_vector, load_model, model_to_json, read_json
from .model import LassoScheduler, LocatedQMDP, QuantumMDP, located_to_flat, tp_trace
from .numerics import Subspace, Tolerances, outer
from .program import compile_to_located, parse_program
from .reachability import reachable_space_I, reachable_space_II
from .termination import Status, synth_nontermination_scheduler
from .universal import check_universal_termination, validate_universal

SCHEMA_VERSION = "v1"
EXIT_NEGATIVE = 4


@dataclass
class Loaded:
    model: QuantumMDP
    states: dict
    located: LocatedQMDP | None = None
    var_dim: int | None = None


def parse_tolerances(items) -> Tolerances:
    tol = Tolerances.from_env()
    changes = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValidationError(f"--tolerance expects key=value, got {item!r}")
        key = key.strip()
        if key == "profile":
            tol = Tolerances.profile(value.strip())
            continue
        try:
            changes[key] = float(value)
        except ValueError:
            raise ValidationError(f"tolerance {key!r} needs a number, got {value!r}") from None
    return tol.replace(**changes) if changes else tol


def load_source(args, tol: Tolerances) -> Loaded:
    if bool(args.model) == bool(args.program):
        raise ValidationError("give exactly one of --model or --program")
    if args.model:
        mf = load_model(args.model, tol)
        return Loaded(mf.model, mf.states)
    if not args.bindings:
        raise ValidationError("--program needs --bindings")
    try:
        source = Path(args.program).read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read {args.program}: {exc.strerror}") from None
    ast = parse_program(source, read_json(args.bindings), tol)
    located = compile_to_located(ast, tol)
    return Loaded(located_to_flat(located), {}, located, ast.dim)


def resolve_state(loaded: Loaded, spec: str | None, tol: Tolerances) -> np.ndarray:
    """A named fixture state, or inline JSON (vector or matrix); program states start at the entry location."""
    if spec is None:
        raise ValidationError("this command needs --state")
    if spec in loaded.states:
        return loaded.states[spec]
    try:
        data = json.loads(spec)
    except json.JSONDecodeError:
        known = ", ".join(sorted(loaded.states)) or "none"
        raise ValidationError(f"unknown state {spec!r} (named states: {known})") from None
    d = loaded.model.dim
    if loaded.var_dim is not None and len(data) == loaded.var_dim:
        rho = decode_state(data, loaded.var_dim, tol)
        lifted = np.zeros((d, d), dtype=complex)
        lifted[: loaded.var_dim, : loaded.var_dim] = rho
        return lifted
    return decode_state(data, d, tol)


def parse_word(text: str) -> tuple:
    return tuple(text.split())


def parse_lasso(text: str) -> LassoScheduler:
    """``"a b . c d"`` is prefix a b with loop c d; without a dot the whole word loops."""
    prefix, sep, loop = text.rpartition(".")
    if not sep:
        prefix, loop = "", text
    return LassoScheduler(parse_word(prefix), parse_word(loop))


def _basis(s: Subspace) -> list:
    return [encode_vector(v) for v in s.vectors]


def _lasso(s: LassoScheduler | None):
    return None if s is None else dict(s.to_json(), text=str(s))


def cmd_reach_i(loaded: Loaded, args, tol: Tolerances) -> tuple[dict, int]:
    r = reachable_space_I(loaded.model, resolve_state(loaded, args.state, tol), tol)
    return {
        "dim": r.dim,
        "chain_depth": r.chain_depth,
        "chain_dims": [s.dim for s in r.chain],
        "basis": _basis(r.basis),
        "generators": [{"word": list(g.word), "kraus_path": list(g.kraus_path), "vector": encode_vector(g.vector)}
                       for g in r.generators],
    }, 0


def cmd_reach_ii(loaded: Loaded, args, tol: Tolerances) -> tuple[dict, int]:
    rho = resolve_state(loaded, args.state, tol)
    w, v = np.linalg.eigh(rho)
    if np.sum(w > tol.rank_tol) != 1 or abs(w[-1] - 1) > tol.trace_tol:
        raise PreconditionError("reach-ii needs a normalized pure input state")
    r = reachable_space_II(loaded.model, v[:, -1], tol)
    return {
        "dim": r.dim,
        "chain_depth": r.chain_depth,
        "layer_sizes": list(r.layer_sizes),
        "generators": [{"word": list(g.word), "kraus_path": list(g.kraus_path), "vector": encode_vector(g.vector)}
                       for g in r.pure_basis],
    }, 0


def cmd_divergent(loaded: Loaded, args, tol: Tolerances) -> tuple[dict, int]:
    div = compute_divergent(loaded.model, tol)
    return {
        "depth": div.depth,
        "union_dim_profile": div.union_dim_profile,
        "root_dim": div.root.space.dim if div.root else 0,
        "leaves": [{"word": list(n.word), "loop": list(n.loop), "dim": n.space.dim, "basis": _basis(n.space),
                    "scheduler": _lasso(n.scheduler())} for n in div.leaves],
    }, 0


def cmd_nonterm(loaded: Loaded, args, tol: Tolerances) -> tuple[dict, int]:
    rho = resolve_state(loaded, args.state, tol)
    witness = decode_vector(json.loads(args.witness)) if args.witness else None
    order = [parse_word(c) for c in args.candidate] if args.candidate else None
    v = synth_nontermination_scheduler(loaded.model, rho, tol, witness=witness, candidate_order=order)
    out = {
        "status": v.status.value,
        "reach_dim": v.reach.dim,
        "leaf_count": len(v.divergence.leaves),
        "witness": None if v.witness is None else encode_vector(v.witness),
        "leaf": None if v.leaf is None else {"word": list(v.leaf.word), "loop": list(v.leaf.loop)},
        "scheduler": _lasso(v.scheduler),
        "candidate_word": None if v.candidate_word is None else list(v.candidate_word),
        "certificate": None if v.certificate is None else encode_matrix(v.certificate),
        "certificate_space": None if v.certificate_space is None else _basis(v.certificate_space),
        "validation": v.validation or None,
    }
    return out, EXIT_NEGATIVE if v.status is Status.TERMINATING else 0


def cmd_universal(loaded: Loaded, args, tol: Tolerances) -> tuple[dict, int]:
    v = check_universal_termination(loaded.model, tol)
    inv = v.invariant
    return {
        "status": v.status.value,
        "invariant": {
            "present": inv.present,
            "verified": inv.verified,
            "basis": _basis(inv.space) if inv.present else None,
            "stationary_solution": encode_matrix(inv.stationary_solution) if inv.present else None,
            "solution_count": inv.solution_count,
            "stationary_residual": inv.stationary_residual,
            "invariance_residual": inv.invariance_residual,
        },
        "counterexample": None if v.counterexample is None else encode_matrix(v.counterexample),
        "scheduler": _lasso(v.scheduler),
        "validation": v.validation or None,
    }, 0


def cmd_simulate(loaded: Loaded, args, tol: Tolerances) -> tuple[dict, int]:
    if bool(args.lasso) == bool(args.word):
        raise ValidationError("simulate needs exactly one of --lasso or --word")
    rho = resolve_state(loaded, args.state, tol)
    if args.lasso:
        sched = parse_lasso(args.lasso)
        word = sched.unroll(max(args.steps, len(sched.prefix)))
    else:
        sched, word = None, parse_word(args.word)
    trace = tp_trace(loaded.model, rho, word)
    out = {
        "scheduler": _lasso(sched),
        "word": list(word),
        "steps": len(word),
        "trace": [{"step": i, "tp": tp} for i, tp in enumerate(trace)],
        "final_tp": trace[-1],
    }
    if sched is not None and args.basis_table:
        out["basis_table"] = validate_universal(loaded.model, sched, args.steps)["table"]
    return out, 0


def cmd_compile(loaded: Loaded, args, tol: Tolerances) -> tuple[dict, int]:
    if loaded.located is None:
        raise ValidationError("compile needs --program and --bindings")
    lm = loaded.located
    out = {
        "variable_dim": loaded.var_dim,
        "locations": list(lm.locations),
        "end": lm.locations[lm.end],
        "actions": list(lm.actions),
        "choice_points": [lm.locations[i] for i in lm.choice_points()],
        "transitions": [{"source": lm.locations[t.source], "action": t.action, "target": lm.locations[t.target]}
                        for t in lm.transitions],
        "flat": {"dim": loaded.model.dim, "actions": list(loaded.model.actions)},
    }
    if args.emit_model:
        Path(args.emit_model).write_text(dumps(model_to_json(loaded.model), pretty=args.pretty), encoding="utf-8")
        out["flat"]["written_to"] = args.emit_model
    return out, 0


COMMANDS = {
    "reach-i": cmd_reach_i,
    "reach-ii": cmd_reach_ii,
    "divergent": cmd_divergent,
    "nonterm": cmd_nonterm,
    "universal": cmd_universal,
    "simulate": cmd_simulate,
    "compile": cmd_compile,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nqterm", description="Termination analysis of nondeterministic quantum programs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", help="flat model JSON file")
    common.add_argument("--program", help="program text file (needs --bindings)")
    common.add_argument("--bindings", help="JSON bindings for the program's operator names")
    common.add_argument("--state", help="named state from the model file, or an inline JSON vector/matrix")
    common.add_argument("--tolerance", action="append", metavar="KEY=VALUE",
                        help="override a tolerance, or profile=NAME; repeatable")
    common.add_argument("--out", help="write the report here instead of stdout")
    common.add_argument("--pretty", action="store_true", help="indent the JSON report")
    common.add_argument("--timing", action="store_true", help="add wall time (makes reports nondeterministic)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("reach-i", "reach-ii", "divergent", "universal"):
        sub.add_parser(name, parents=[common])
    p = sub.add_parser("nonterm", parents=[common])
    p.add_argument("--witness", help="inline JSON vector forcing the divergent reachable state")
    p.add_argument("--candidate", action="append", metavar="WORD",
                   help="generator word (space separated actions) to try first; repeatable")
    p = sub.add_parser("simulate", parents=[common])
    p.add_argument("--lasso", help='lasso scheduler "prefix . loop" (no dot: the word loops)')
    p.add_argument("--word", help="finite scheduler word, actions separated by spaces")
    p.add_argument("--steps", type=int, default=100, help="unrolled steps for --lasso (default 100)")
    p.add_argument("--basis-table", action="store_true", help="add per-basis-input TP for the lasso")
    p = sub.add_parser("compile", parents=[common])
    p.add_argument("--emit-model", metavar="PATH", help="also write the flat model JSON")
    return parser


def run(argv=None) -> tuple[dict, int]:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    tol = parse_tolerances(args.tolerance)
    loaded = load_source(args, tol)
    result, code = COMMANDS[args.command](loaded, args, tol)
    report = {
        "schema": f"nqterm/{SCHEMA_VERSION}/{args.command}",
        "command": args.command,
        "input": {"model": args.model, "program": args.program, "bindings": args.bindings,
                  "state": getattr(args, "state", None)},
        "tolerances": tol.as_dict(),
        "result": result,
    }
    if args.timing:
        report["wall_time"] = time.perf_counter() - started
    text = dumps(report, pretty=args.pretty)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return report, code


def main(argv=None) -> int:
    try:
        _, code = run(argv)
    except NQTermError as exc:
        print(f"nqterm: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return code


if __name__ == "__main__":
    sys.exit(main())
