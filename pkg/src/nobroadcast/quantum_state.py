"""Dense density-matrix algebra.

Subsystems follow the row-major Kronecker convention: in ``dims = [d0, d1, ...]``
subsystem 0 is the most significant index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
import scipy.stats

from .errors import (
    DimensionMismatch,
    EigensolverFailure,
    EmptyKeepSet,
    IndexOutOfRange,
    NotHermitian,
    NotPositive,
    NotUnitTrace,
    ValidationError,
)

VALIDATION_TOL = 1e-9
SUPPORT_CUTOFF = 1e-10


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class HermitianOperator:
    data: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def dim(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class DensityMatrix:
    """Validated state. Build through :func:`new_density` unless the data is
    known to be a state already (e.g. the image of a state under a unitary)."""

    data: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data))
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.data).real)

    def eigvalsh(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.data)


@dataclass(frozen=True)
class SupportDecomposition:
    eigenvalues: np.ndarray  # non-increasing
    eigenvectors: np.ndarray  # columns, same order
    rank: int
    threshold: float = field(default=0.0)

    @property
    def support(self) -> np.ndarray:
        return self.eigenvectors[:, : self.rank]

    @property
    def kernel(self) -> np.ndarray:
        return self.eigenvectors[:, self.rank :]

    def projector(self) -> np.ndarray:
        v = self.support
        return v @ v.conj().T


def _check_dims(n: int, dims: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if not dims or any(d < 1 for d in dims):
        raise ValidationError(f"invalid subsystem dimensions {dims}")
    if int(np.prod(dims)) != n:
        raise DimensionMismatch(f"product of dims {dims} is {int(np.prod(dims))}, matrix is {n}x{n}")
    return dims


def hermitize(data, tol: float = VALIDATION_TOL) -> np.ndarray:
    """Return (A + A^dag)/2, refusing inputs that are further than `tol` from Hermitian."""
    a = np.asarray(data, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {a.shape}")
    dev = float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0
    if dev > tol:
        raise NotHermitian(f"Hermiticity violated: max |A - A^dag| = {dev:.3e} > {tol:.1e}")
    return 0.5 * (a + a.conj().T)


def new_density(data, dims: Sequence[int] | None = None, tol: float = VALIDATION_TOL) -> DensityMatrix:
    if tol <= 0:
        raise ValidationError("tolerance must be positive")
    a = hermitize(data, tol)
    dims = _check_dims(a.shape[0], dims if dims is not None else [a.shape[0]])
    tr = np.trace(a).real
    if abs(tr - 1.0) > tol:
        raise NotUnitTrace(f"unit trace violated: |Tr - 1| = {abs(tr - 1.0):.3e} > {tol:.1e}")
    lmin = float(np.linalg.eigvalsh(a)[0])
    if lmin < -tol:
        raise NotPositive(f"positivity violated: smallest eigenvalue {lmin:.3e} < -{tol:.1e}")
    return DensityMatrix(a, dims)


def new_hermitian(data, dims: Sequence[int] | None = None, tol: float = VALIDATION_TOL) -> HermitianOperator:
    a = hermitize(data, tol)
    return HermitianOperator(a, _check_dims(a.shape[0], dims if dims is not None else [a.shape[0]]))


def as_density(rho, dims: Sequence[int] | None = None) -> DensityMatrix:
    if isinstance(rho, DensityMatrix):
        return rho
    return new_density(rho, dims)


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def pure(vec, dims: Sequence[int] | None = None) -> DensityMatrix:
    v = np.asarray(vec, dtype=complex)
    v = v / np.linalg.norm(v)
    return new_density(np.outer(v, v.conj()), dims)


def basis_state(index: int, dim: int) -> DensityMatrix:
    return pure(ket(index, dim))


def maximally_mixed(dim: int) -> DensityMatrix:
    return new_density(np.eye(dim) / dim)


def tensor(a: DensityMatrix, b: DensityMatrix) -> DensityMatrix:
    return DensityMatrix(np.kron(a.data, b.data), a.dims + b.dims)


def tensor_all(states: Iterable[DensityMatrix]) -> DensityMatrix:
    return reduce(tensor, states)


def _keep_indices(keep, n: int) -> list[int]:
    if isinstance(keep, (int, np.integer)):
        keep = [keep]
    keep = sorted(set(int(k) for k in keep))
    if not keep:
        raise EmptyKeepSet("the set of kept subsystems is empty")
    bad = [k for k in keep if not 0 <= k < n]
    if bad:
        raise IndexOutOfRange(f"subsystem indices {bad} out of range for {n} subsystems")
    return keep


def partial_trace_array(data: np.ndarray, dims: Sequence[int], keep) -> np.ndarray:
    dims = tuple(dims)
    n = len(dims)
    keep = _keep_indices(keep, n)
    drop = [k for k in range(n) if k not in keep]
    dk = int(np.prod([dims[k] for k in keep]))
    dd = int(np.prod([dims[k] for k in drop])) if drop else 1
    t = np.asarray(data).reshape(dims + dims)
    perm = keep + drop + [n + k for k in keep] + [n + k for k in drop]
    t = t.transpose(perm).reshape(dk, dd, dk, dd)
    return np.einsum("iaja->ij", t)


def partial_trace(rho: DensityMatrix, keep) -> DensityMatrix:
    """Reduced state on the subsystems listed in `keep` (kept in their original order)."""
    keep = _keep_indices(keep, len(rho.dims))
    out = partial_trace_array(rho.data, rho.dims, keep)
    return DensityMatrix(0.5 * (out + out.conj().T), tuple(rho.dims[k] for k in keep))


def embed_operator(op: np.ndarray, dims: Sequence[int], keep) -> np.ndarray:
    """Lift an operator on the `keep` subsystems to the full space, identity elsewhere."""
    dims = tuple(dims)
    n = len(dims)
    keep = _keep_indices(keep, n)
    drop = [k for k in range(n) if k not in keep]
    dd = int(np.prod([dims[k] for k in drop])) if drop else 1
    full = np.kron(np.asarray(op, dtype=complex), np.eye(dd))
    order = keep + drop
    shape = [dims[k] for k in order]
    t = full.reshape(shape + shape)
    inv = list(np.argsort(order))
    t = t.transpose(inv + [n + i for i in inv])
    return t.reshape(full.shape)


def _eigh(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise EigensolverFailure(str(exc)) from exc
    if not np.all(np.isfinite(w)):
        raise EigensolverFailure("non-finite eigenvalues")
    return w[::-1], v[:, ::-1]


def support_decompose(rho, cutoff: float = SUPPORT_CUTOFF) -> SupportDecomposition:
    """Eigendecomposition split into support and kernel.

    Eigenvalues at or below ``cutoff * max(eigenvalue)`` count as kernel.
    """
    if cutoff <= 0:
        raise ValidationError("cutoff must be positive")
    data = rho.data if isinstance(rho, (DensityMatrix, HermitianOperator)) else hermitize(rho)
    w, v = _eigh(data)
    thr = cutoff * max(float(w[0]), 0.0)
    rank = int(np.count_nonzero(w > thr))
    return SupportDecomposition(w, v, rank, thr)


def log_on_support(rho, cutoff: float = SUPPORT_CUTOFF) -> HermitianOperator:
    """Natural matrix logarithm on the support, zero on the kernel."""
    dec = support_decompose(rho, cutoff)
    v = dec.support
    logs = np.log(dec.eigenvalues[: dec.rank])
    out = (v * logs) @ v.conj().T
    dims = rho.dims if isinstance(rho, (DensityMatrix, HermitianOperator)) else (out.shape[0],)
    return HermitianOperator(0.5 * (out + out.conj().T), dims)


def _array(a) -> np.ndarray:
    return a.data if isinstance(a, (DensityMatrix, HermitianOperator)) else np.asarray(a)


def commutes(a, b, tol: float = 1e-10) -> tuple[bool, float]:
    """Return (``||ab - ba||_F <= tol``, ``||ab - ba||_F``)."""
    x, y = _array(a), _array(b)
    if x.shape != y.shape:
        raise DimensionMismatch(f"shapes {x.shape} and {y.shape} differ")
    res = float(np.linalg.norm(x @ y - y @ x))
    return res <= tol, res


def unitarity_residual(u) -> float:
    u = np.asarray(u)
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


def conjugate(rho: DensityMatrix, u: np.ndarray) -> DensityMatrix:
    out = u @ rho.data @ u.conj().T
    return DensityMatrix(0.5 * (out + out.conj().T), rho.dims)


def trace_distance(a, b) -> float:
    x, y = _array(a), _array(b)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(x - y))))


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None, dims=None) -> DensityMatrix:
    """Normalized A A^dag with standard complex normal A (dim x rank)."""
    k = dim if rank is None else rank
    a = rng.standard_normal((dim, k)) + 1j * rng.standard_normal((dim, k))
    rho = a @ a.conj().T
    rho /= np.trace(rho).real
    return DensityMatrix(0.5 * (rho + rho.conj().T), dims if dims is not None else (dim,))


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    return scipy.stats.unitary_group.rvs(dim, random_state=rng)


def random_diagonal(dim: int, rng: np.random.Generator) -> DensityMatrix:
    p = rng.dirichlet(np.ones(dim))
    return DensityMatrix(np.diag(p).astype(complex), (dim,))


def to_json(op) -> dict:
    data = _array(op)
    dims = list(op.dims) if isinstance(op, (DensityMatrix, HermitianOperator)) else [data.shape[0]]
    return {"dims": dims, "re": data.real.tolist(), "im": data.imag.tolist()}


def density_from_json(obj: dict, tol: float = VALIDATION_TOL) -> DensityMatrix:
    try:
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj.get("im", np.zeros_like(re)), dtype=float)
        dims = obj.get("dims")
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed matrix record: {exc}") from exc
    if re.shape != im.shape:
        raise DimensionMismatch(f"re shape {re.shape} != im shape {im.shape}")
    return new_density(re + 1j * im, dims, tol)
