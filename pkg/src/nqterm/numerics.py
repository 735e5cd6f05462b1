"""Tolerance-aware complex linear algebra.

Vectors are 1-D complex numpy arrays, operators are 2-D complex arrays and
subspaces carry an orthonormal column basis.  Every zero/rank decision is
made against a :class:`Tolerances` instance so callers can surface the
thresholds that produced a verdict.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

TOLERANCE_ENV = "NQTERM_TOLERANCE_PROFILE"


@dataclass(frozen=True)
class Tolerances:
    norm_tol: float = 1e-9
    herm_tol: float = 1e-9
    psd_tol: float = 1e-9
    trace_tol: float = 1e-9
    ortho_tol: float = 1e-9
    rank_tol: float = 1e-8

    def __post_init__(self):
        for field in dataclasses.fields(self):
            value = getattr(self, field.name)
            if not (isinstance(value, (int, float)) and np.isfinite(value) and value > 0):
                raise ValidationError(f"tolerance {field.name} must be a positive finite number, got {value!r}")

    def replace(self, **changes) -> "Tolerances":
        unknown = set(changes) - {f.name for f in dataclasses.fields(self)}
        if unknown:
            raise ValidationError(f"unknown tolerance keys: {sorted(unknown)}")
        return dataclasses.replace(self, **{k: float(v) for k, v in changes.items()})

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def profile(cls, name: str) -> "Tolerances":
        try:
            return PROFILES[name]
        except KeyError:
            raise ValidationError(f"unknown tolerance profile {name!r}; choose from {sorted(PROFILES)}") from None

    @classmethod
    def from_env(cls) -> "Tolerances":
        """Default profile, overridable through ``NQTERM_TOLERANCE_PROFILE``."""
        return cls.profile(os.environ.get(TOLERANCE_ENV, "default"))


PROFILES = {
    "default": Tolerances(),
    "strict": Tolerances(1e-12, 1e-12, 1e-12, 1e-12, 1e-12, 1e-10),
    "loose": Tolerances(1e-7, 1e-7, 1e-7, 1e-7, 1e-7, 1e-6),
}

DEFAULT_TOL = PROFILES["default"]


# -- small helpers -----------------------------------------------------------

def as_vector(v, dim: int | None = None) -> np.ndarray:
    arr = np.asarray(v, dtype=complex)
    if arr.ndim != 1:
        raise ValidationError(f"expected a vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValidationError(f"expected a vector of length {dim}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("vector has non-finite entries")
    return arr


def as_matrix(a, dim: int | None = None) -> np.ndarray:
    arr = np.asarray(a, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValidationError(f"expected a {dim}x{dim} matrix, got {arr.shape[0]}x{arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("matrix has non-finite entries")
    return arr


def check_hermitian(h, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    h = as_matrix(h)
    err = np.max(np.abs(h - h.conj().T)) if h.size else 0.0
    if err > tol.herm_tol:
        raise ValidationError(f"operator is not Hermitian (deviation {err:.3e} > {tol.herm_tol:g})")
    return (h + h.conj().T) / 2


def check_density(rho, tol: Tolerances = DEFAULT_TOL, partial: bool = False) -> np.ndarray:
    """Validate a (partial) density operator and return its Hermitian part."""
    rho = check_hermitian(rho, tol)
    eigs = np.linalg.eigvalsh(rho)
    if eigs.size and eigs[0] < -tol.psd_tol:
        raise ValidationError(f"operator is not positive semidefinite (eigenvalue {eigs[0]:.3e})")
    tr = float(np.trace(rho).real)
    if partial:
        if tr > 1 + tol.trace_tol:
            raise ValidationError(f"partial density operator has trace {tr:.12g} > 1")
    elif abs(tr - 1) > tol.trace_tol:
        raise ValidationError(f"density operator has trace {tr:.12g}, expected 1")
    return rho


def fix_phase(v: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Rotate ``v`` so its first entry with modulus above rank_tol is real positive."""
    idx = np.flatnonzero(np.abs(v) > tol.rank_tol)
    if idx.size == 0:
        return v
    z = v[idx[0]]
    return v * (abs(z) / z)


def normalize(v, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    v = as_vector(v)
    n = np.linalg.norm(v)
    if n <= tol.rank_tol:
        raise ValidationError("cannot normalize a (numerically) zero vector")
    return v / n


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1
    return v


def outer(v: np.ndarray) -> np.ndarray:
    return np.outer(v, v.conj())


def fidelity(u: np.ndarray, v: np.ndarray) -> float:
    """|<u|v>|^2 for normalized inputs."""
    return float(abs(np.vdot(u, v)) ** 2)


# -- subspaces ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Subspace:
    """Linear subspace of C^d given by orthonormal columns of ``basis``."""

    basis: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=complex)
        if b.ndim != 2:
            raise ValidationError(f"subspace basis must be a d x k array, got shape {b.shape}")
        if b.shape[1] > b.shape[0]:
            raise ValidationError("subspace basis has more vectors than the ambient dimension")
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def vectors(self) -> list[np.ndarray]:
        return [self.basis[:, i] for i in range(self.dim)]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.conj().T

    def complement(self, tol: Tolerances = DEFAULT_TOL) -> "Subspace":
        d = self.ambient_dim
        return Subspace(canonical_basis(np.eye(d) - self.projector(), tol))

    def contains(self, v, tol: Tolerances = DEFAULT_TOL) -> bool:
        return membership(v, self, tol)

    def includes(self, other: "Subspace", tol: Tolerances = DEFAULT_TOL) -> bool:
        """True when ``other`` is a subspace of ``self``."""
        return all(membership(v, self, tol) for v in other.vectors)

    def equals(self, other: "Subspace", tol: Tolerances = DEFAULT_TOL) -> bool:
        return (
            self.ambient_dim == other.ambient_dim
            and self.includes(other, tol)
            and other.includes(self, tol)
        )

    @classmethod
    def zero(cls, d: int) -> "Subspace":
        return cls(np.zeros((d, 0), dtype=complex))

    @classmethod
    def full(cls, d: int) -> "Subspace":
        return cls(np.eye(d, dtype=complex))

    @classmethod
    def span(cls, vectors: Iterable, dim: int | None = None, tol: Tolerances = DEFAULT_TOL) -> "Subspace":
        vectors = [as_vector(v) for v in vectors]
        if dim is None:
            if not vectors:
                raise ValidationError("span of no vectors needs an explicit ambient dimension")
            dim = vectors[0].shape[0]
        s = cls.zero(dim)
        for v in vectors:
            s = _extend(s, as_vector(v, dim), tol)
        return s


def _orthogonalize(basis: np.ndarray, v: np.ndarray) -> np.ndarray:
    # two passes of classical Gram-Schmidt keep the residual orthogonal to working precision
    for _ in range(2):
        if basis.shape[1]:
            v = v - basis @ (basis.conj().T @ v)
    return v


def gram_schmidt_extend(basis: Subspace, v, tol: Tolerances = DEFAULT_TOL) -> np.ndarray | None:
    """Normalized residual of ``v`` against ``basis``, or None when ``v`` is contained."""
    v = as_vector(v, basis.ambient_dim)
    r = _orthogonalize(basis.basis, v)
    n = np.linalg.norm(r)
    if n <= tol.rank_tol:
        return None
    return fix_phase(r / n, tol)


def _extend(s: Subspace, v: np.ndarray, tol: Tolerances) -> Subspace:
    r = gram_schmidt_extend(s, v, tol)
    if r is None:
        return s
    return Subspace(np.column_stack([s.basis, r]))


def canonical_basis(projector_like: np.ndarray, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis of the column space of a projector, built from its columns in order.

    Projecting the coordinate vectors makes the result depend only on the
    subspace, not on how it was computed.
    """
    d = projector_like.shape[0]
    s = Subspace.zero(d)
    for i in range(d):
        col = projector_like[:, i]
        if np.linalg.norm(col) > tol.rank_tol:
            s = _extend(s, col, tol)
    return s.basis


def _check_same_ambient(a: Subspace, b: Subspace):
    if a.ambient_dim != b.ambient_dim:
        raise ValidationError(f"ambient dimensions differ: {a.ambient_dim} vs {b.ambient_dim}")


def subspace_join(a: Subspace, b: Subspace, tol: Tolerances = DEFAULT_TOL) -> Subspace:
    _check_same_ambient(a, b)
    s = a
    for v in b.vectors:
        s = _extend(s, v, tol)
    return s


def subspace_intersect(a: Subspace, b: Subspace, tol: Tolerances = DEFAULT_TOL) -> Subspace:
    """Vectors annihilated by both orthocomplement projectors."""
    _check_same_ambient(a, b)
    d = a.ambient_dim
    eye = np.eye(d)
    rows = np.vstack([eye - a.projector(), eye - b.projector()])
    return Subspace(_null_basis(rows, d, tol))


def membership(v, s: Subspace, tol: Tolerances = DEFAULT_TOL) -> bool:
    v = as_vector(v, s.ambient_dim)
    r = v - s.basis @ (s.basis.conj().T @ v)
    return bool(np.linalg.norm(r) <= tol.rank_tol)


def support(op, tol: Tolerances = DEFAULT_TOL) -> Subspace:
    """Span of eigenvectors with non-negligible eigenvalue, largest first."""
    h = check_hermitian(op, tol)
    d = h.shape[0]
    eigs, vecs = np.linalg.eigh(h)
    scale = np.max(np.abs(eigs)) if d else 0.0
    threshold = tol.rank_tol * scale if scale > tol.rank_tol else tol.rank_tol
    keep = np.flatnonzero(np.abs(eigs) > threshold)
    keep = keep[np.argsort(-np.abs(eigs[keep]), kind="stable")]
    cols = [fix_phase(vecs[:, i], tol) for i in keep]
    if not cols:
        return Subspace.zero(d)
    return Subspace(np.column_stack(cols))


def _null_basis(rows: np.ndarray, nvars: int, tol: Tolerances) -> np.ndarray:
    rows = np.asarray(rows, dtype=complex).reshape(-1, nvars)
    if rows.shape[0] == 0:
        return np.eye(nvars, dtype=complex)
    _, s, vh = np.linalg.svd(rows)
    scale = max(1.0, s[0]) if s.size else 1.0
    rank = int(np.sum(s > tol.rank_tol * scale))
    null = vh[rank:].conj().T
    if null.shape[1] == 0:
        return np.zeros((nvars, 0), dtype=complex)
    return canonical_basis(null @ null.conj().T, tol)


def nullspace(rows: Sequence, nvars: int, tol: Tolerances = DEFAULT_TOL) -> list[np.ndarray]:
    """Orthonormal basis of {x : rows @ x = 0}."""
    basis = _null_basis(np.asarray(rows, dtype=complex), nvars, tol)
    return [basis[:, i] for i in range(basis.shape[1])]


def real_nullspace(rows: np.ndarray, nvars: int, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal real basis (columns) of the real solution space, canonical in coordinate order."""
    rows = np.asarray(rows, dtype=float).reshape(-1, nvars)
    if rows.shape[0] == 0:
        return np.eye(nvars)
    _, s, vh = np.linalg.svd(rows)
    scale = max(1.0, s[0]) if s.size else 1.0
    rank = int(np.sum(s > tol.rank_tol * scale))
    null = vh[rank:].T
    if null.shape[1] == 0:
        return np.zeros((nvars, 0))
    proj = null @ null.T
    cols = []
    for i in range(nvars):
        r = proj[:, i].copy()
        for _ in range(2):
            for c in cols:
                r -= c * (c @ r)
        n = np.linalg.norm(r)
        if n > tol.rank_tol:
            cols.append(r / n)
    return np.column_stack(cols) if cols else np.zeros((nvars, 0))


# -- Hermitian operator coordinates -------------------------------------------

def hermitian_basis(d: int) -> list[np.ndarray]:
    """Hilbert-Schmidt orthonormal basis: diagonals, then symmetric, then antisymmetric pairs."""
    out = []
    for i in range(d):
        b = np.zeros((d, d), dtype=complex)
        b[i, i] = 1
        out.append(b)
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    for i, j in pairs:
        b = np.zeros((d, d), dtype=complex)
        b[i, j] = b[j, i] = 1 / np.sqrt(2)
        out.append(b)
    for i, j in pairs:
        b = np.zeros((d, d), dtype=complex)
        b[i, j] = 1j / np.sqrt(2)
        b[j, i] = -1j / np.sqrt(2)
        out.append(b)
    return out


def hermitian_vectorize(h, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    h = check_hermitian(h, tol)
    d = h.shape[0]
    iu, ju = np.triu_indices(d, k=1)
    upper = h[iu, ju]
    return np.concatenate([np.diag(h).real, np.sqrt(2) * upper.real, np.sqrt(2) * upper.imag])


def hermitian_devectorize(v, dim: int | None = None) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValidationError("expected a real vector")
    d = int(round(np.sqrt(v.shape[0])))
    if d * d != v.shape[0] or (dim is not None and d != dim):
        raise ValidationError(f"vector length {v.shape[0]} is not d^2 for the expected dimension")
    h = np.diag(v[:d]).astype(complex)
    iu, ju = np.triu_indices(d, k=1)
    npairs = iu.size
    upper = (v[d:d + npairs] + 1j * v[d + npairs:]) / np.sqrt(2)
    h[iu, ju] = upper
    h[ju, iu] = upper.conj()
    return h


@dataclass(frozen=True, eq=False)
class OperatorSpace:
    """Real span of linearly independent Hermitian operators."""

    basis: tuple

    def __post_init__(self):
        object.__setattr__(self, "basis", tuple(np.asarray(b, dtype=complex) for b in self.basis))

    @property
    def dim(self) -> int:
        return len(self.basis)

    def matrix(self) -> np.ndarray:
        """Vectorized basis as columns of a real d^2 x k matrix."""
        if not self.basis:
            return np.zeros((0, 0))
        return np.column_stack([hermitian_vectorize(b) for b in self.basis])


def operator_coefficients(h, space: OperatorSpace, tol: Tolerances = DEFAULT_TOL) -> tuple[np.ndarray, float]:
    """Least-squares real coefficients of ``h`` over ``space`` and the residual norm."""
    v = hermitian_vectorize(h, tol)
    if space.dim == 0:
        return np.zeros(0), float(np.linalg.norm(v))
    a = space.matrix()
    if a.shape[0] != v.shape[0]:
        raise ValidationError("operator dimension does not match the operator space")
    coeffs, *_ = np.linalg.lstsq(a, v, rcond=None)
    return coeffs, float(np.linalg.norm(a @ coeffs - v))


def operator_membership(h, space: OperatorSpace, tol: Tolerances = DEFAULT_TOL) -> bool:
    h = check_hermitian(h, tol)
    _, residual = operator_coefficients(h, space, tol)
    return residual <= tol.rank_tol * max(np.linalg.norm(h), 1e-300)
