"""JSON encoding of complex vectors and matrices, and model-file loading.

Complex scalars are ``[re, im]`` pairs (a bare real number is also accepted on
input); matrices are row-major lists of rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import ValidationError
from .model import Measurement, QuantumMDP, SuperOperator
from .numerics import DEFAULT_TOL, Tolerances, check_density, normalize, outer


def _decode_scalar(x) -> complex:
    if isinstance(x, bool):
        raise ValidationError(f"expected a number or [re, im], got {x!r}")
    if isinstance(x, (int, float)):
        return complex(x)
    if isinstance(x, (list, tuple)) and len(x) == 2 and all(
        isinstance(p, (int, float)) and not isinstance(p, bool) for p in x
    ):
        return complex(x[0], x[1])
    raise ValidationError(f"expected a number or [re, im], got {x!r}")


def decode_vector(data) -> np.ndarray:
    if not isinstance(data, list) or not data:
        raise ValidationError("a vector must be a nonempty list")
    v = np.array([_decode_scalar(x) for x in data], dtype=complex)
    if not np.all(np.isfinite(v)):
        raise ValidationError("vector has non-finite entries")
    return v


def decode_matrix(data) -> np.ndarray:
    if not isinstance(data, list) or not data or not all(isinstance(r, list) for r in data):
        raise ValidationError("a matrix must be a nonempty list of rows")
    n = len(data[0])
    if any(len(r) != n for r in data):
        raise ValidationError("matrix rows have different lengths")
    m = np.array([[_decode_scalar(x) for x in row] for row in data], dtype=complex)
    if not np.all(np.isfinite(m)):
        raise ValidationError("matrix has non-finite entries")
    return m


def _clean(x: float) -> float:
    x = float(x)
    return 0.0 if x == 0 else x


def encode_scalar(z) -> list:
    z = complex(z)
    return [_clean(z.real), _clean(z.imag)]


def encode_vector(v) -> list:
    return [encode_scalar(z) for z in np.asarray(v).ravel()]


def encode_matrix(m) -> list:
    return [encode_vector(row) for row in np.asarray(m)]


def is_matrix_data(data) -> bool:
    return isinstance(data, list) and bool(data) and all(
        isinstance(r, list) and r and all(isinstance(x, list) for x in r) for r in data
    )


def decode_state(data, dim: int, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """A density matrix, or a vector which is normalized into a pure state."""
    if is_matrix_data(data):
        rho = decode_matrix(data)
    else:
        rho = outer(normalize(decode_vector(data), tol))
    if rho.shape != (dim, dim):
        raise ValidationError(f"state has shape {rho.shape}, model dimension is {dim}")
    return check_density(rho, tol)


@dataclass
class ModelFile:
    model: QuantumMDP
    states: dict = field(default_factory=dict)


def model_from_json(data: Mapping[str, Any], tol: Tolerances = DEFAULT_TOL) -> ModelFile:
    if not isinstance(data, Mapping):
        raise ValidationError("model file must contain a JSON object")
    for key in ("dim", "actions", "kraus", "measurement"):
        if key not in data:
            raise ValidationError(f"model file lacks {key!r}")
    dim = data["dim"]
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise ValidationError("'dim' must be a positive integer")
    actions = data["actions"]
    if not isinstance(actions, list) or not all(isinstance(a, str) for a in actions):
        raise ValidationError("'actions' must be a list of strings")
    kraus = data["kraus"]
    if not isinstance(kraus, Mapping):
        raise ValidationError("'kraus' must map actions to Kraus lists")
    dynamics = {}
    for a in actions:
        if a not in kraus or not isinstance(kraus[a], list) or not kraus[a]:
            raise ValidationError(f"action {a!r} needs a nonempty Kraus list")
        dynamics[a] = SuperOperator(tuple(decode_matrix(k) for k in kraus[a]))
    extra = set(kraus) - set(actions)
    if extra:
        raise ValidationError(f"Kraus operators given for undeclared actions {sorted(extra)}")
    meas = data["measurement"]
    if not isinstance(meas, Mapping) or not ({"m_true", "m_false"} & set(meas)):
        raise ValidationError("'measurement' needs m_true and/or m_false")
    mt = decode_matrix(meas["m_true"]) if "m_true" in meas else None
    mf = decode_matrix(meas["m_false"]) if "m_false" in meas else None
    mt = np.eye(dim) - mf if mt is None else mt
    mf = np.eye(dim) - mt if mf is None else mf
    model = QuantumMDP(dim, tuple(actions), dynamics, Measurement(mt, mf), tol)
    states = {}
    for name, s in (data.get("states") or {}).items():
        try:
            states[name] = decode_state(s, dim, tol)
        except ValidationError as exc:
            raise ValidationError(f"state {name!r}: {exc}") from None
    return ModelFile(model, states)


def model_to_json(m: QuantumMDP, states: Mapping | None = None) -> dict:
    out = {
        "dim": m.dim,
        "actions": list(m.actions),
        "kraus": {a: [encode_matrix(k) for k in m.dynamics[a].kraus] for a in m.actions},
        "measurement": {"m_true": encode_matrix(m.meas.m_true), "m_false": encode_matrix(m.meas.m_false)},
    }
    if states:
        out["states"] = {k: encode_matrix(v) for k, v in states.items()}
    return out


def read_json(path) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def load_model(path, tol: Tolerances = DEFAULT_TOL) -> ModelFile:
    return model_from_json(read_json(path), tol)


def dumps(report: Any, pretty: bool = False) -> str:
    if pretty:
        return json.dumps(report, indent=2, sort_keys=True) + "\n"
    return json.dumps(report, sort_keys=True, separators=(",", ":")) + "\n"


FIXTURES = Path(__file__).parent / "fixtures"
