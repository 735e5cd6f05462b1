import json

import numpy as np
import pytest

from nqterm.io import FIXTURES, load_model

SQ2 = np.sqrt(2)
ZERO, ONE = np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)
PLUS, MINUS = (ZERO + ONE) / SQ2, (ZERO - ONE) / SQ2


def kron(*vs):
    out = np.array([1], dtype=complex)
    for v in vs:
        out = np.kron(out, v)
    return out


def raw_fixture(name):
    """Kraus lists and measurement straight from the JSON, bypassing the package's model layer."""
    data = json.loads((FIXTURES / f"{name}.json").read_text())
    mat = lambda rows: np.array([[complex(*x) if isinstance(x, list) else x for x in r] for r in rows])
    kraus = {a: [mat(k) for k in data["kraus"][a]] for a in data["actions"]}
    meas = data["measurement"]
    d = data["dim"]
    mt = mat(meas["m_true"]) if "m_true" in meas else np.eye(d) - mat(meas["m_false"])
    mf = mat(meas["m_false"]) if "m_false" in meas else np.eye(d) - mt
    return kraus, mt, mf


def oracle_tp(kraus, mt, mf, rho, word):
    """Plain loop: measure, record the false branch, evolve the true branch."""
    tp = 0.0
    for a in list(word) + [None]:
        tp += np.real(np.trace(mf @ rho @ mf.conj().T))
        if a is None:
            break
        rho = mt @ rho @ mt.conj().T
        rho = sum(k @ rho @ k.conj().T for k in kraus[a])
    return float(tp)


def oracle_lasso_tp(kraus, mt, mf, rho, prefix, loop, steps):
    word = list(prefix)
    while len(word) < steps:
        word.extend(loop)
    return oracle_tp(kraus, mt, mf, rho, word[:steps])


def in_span(v, basis, tol=1e-8):
    q, _ = np.linalg.qr(np.column_stack(basis))
    return np.linalg.norm(v - q @ (q.conj().T @ v)) <= tol * max(1, np.linalg.norm(v))


def same_span(a, b, tol=1e-8):
    return len(a) == len(b) and all(in_span(v, b, tol) for v in a) and all(in_span(v, a, tol) for v in b)


def random_unitary(rng, d):
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_channel(rng, d, k):
    """k Kraus operators from a random isometry d -> k*d."""
    u = random_unitary(rng, k * d)[:, :d]
    return [u[i * d:(i + 1) * d] for i in range(k)]


def random_projector(rng, d, r):
    q = random_unitary(rng, d)[:, :r]
    return q @ q.conj().T


def random_density(rng, d, rank=None):
    rank = rank or d
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho)


@pytest.fixture(scope="session")
def qbf():
    return load_model(FIXTURES / "qbf.json")


@pytest.fixture(scope="session")
def qbf_modified():
    return load_model(FIXTURES / "qbf_modified.json")


@pytest.fixture(scope="session")
def nqw():
    return load_model(FIXTURES / "nqw.json")


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
