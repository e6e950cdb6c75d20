"""Quantum relative entropy, Kullback-Leibler divergence and the monotonicity checks.

All logarithms are natural. Relative entropies are plain floats where
``math.inf`` stands for the infinite (disjoint-support) case.

Finiteness rule: ``S(r1|r2)`` is finite exactly when ``supp(r1)`` lies inside
``supp(r2)``. Some texts state the kernel inclusion the other way round; the
support form used here is the standard one.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .errors import (
    ConsistencyError,
    DimensionMismatch,
    GridMismatch,
    InfiniteEntropy,
    LengthMismatch,
    NotUnitary,
    ValidationError,
)
from .quantum_state import (
    SUPPORT_CUTOFF,
    DensityMatrix,
    as_density,
    conjugate,
    embed_operator,
    log_on_support,
    partial_trace,
    support_decompose,
    tensor,
    unitarity_residual,
)

CLAMP_TOL = 1e-9


def _clamp(value: float, what: str) -> float:
    if value < 0.0:
        if value < -CLAMP_TOL:
            raise ConsistencyError(f"{what} came out negative ({value:.3e}) beyond round-off")
        return 0.0
    return float(value)


def _outside_mass(d1, d2) -> tuple[float, np.ndarray]:
    """Tr[r1 (I - P2)] from the two decompositions, plus the overlap V2^dag V1."""
    v1 = d1.support
    overlap = d2.support.conj().T @ v1
    inside = np.sum(np.abs(overlap) ** 2, axis=0)
    mass = float(np.sum(d1.eigenvalues[: d1.rank] * np.clip(1.0 - inside, 0.0, None)))
    return mass, overlap


def support_contained(r1, r2, cutoff: float = SUPPORT_CUTOFF) -> tuple[bool, float]:
    """Check that r1 puts at most `cutoff` of its weight outside supp(r2).

    This is the same relative cutoff that decides which eigenvalues count
    as zero, so a numerically full-rank r2 does not turn weight of order
    1e-10 into an infinite entropy.
    """
    mass, _ = _outside_mass(support_decompose(r1, cutoff), support_decompose(r2, cutoff))
    return mass <= cutoff, mass


def quantum_relative_entropy(r1, r2, cutoff: float = SUPPORT_CUTOFF) -> float:
    """``Tr[r1 (ln r1 - ln r2)]``, or ``inf`` when supp(r1) is not inside supp(r2)."""
    r1 = as_density(r1)
    r2 = as_density(r2)
    if r1.dim != r2.dim:
        raise DimensionMismatch(f"dimensions {r1.dim} and {r2.dim} differ")
    d1 = support_decompose(r1, cutoff)
    d2 = support_decompose(r2, cutoff)
    mass, overlap = _outside_mass(d1, d2)
    if mass > cutoff:
        return math.inf
    p = d1.eigenvalues[: d1.rank]
    q = d2.eigenvalues[: d2.rank]
    # Tr[r1 ln r1] on supp(r1); Tr[r1 ln r2] in the eigenbasis of r2 restricted to its support
    neg_entropy = float(np.sum(p * np.log(p)))
    diag = np.einsum("ji,i,ji->j", overlap, p, overlap.conj()).real
    cross = float(np.sum(diag * np.log(q)))
    return _clamp(neg_entropy - cross, "quantum relative entropy")


def _probabilities(p, tol: float = 1e-9) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1:
        raise ValidationError("a distribution must be a flat list of probabilities")
    if np.any(p < 0):
        raise ValidationError("probabilities must be non-negative")
    if abs(p.sum() - 1.0) > tol:
        raise ValidationError(f"probabilities sum to {p.sum():.12g}, not 1")
    return p


def kl_divergence(p: Sequence[float], q: Sequence[float]) -> float:
    p = _probabilities(p)
    q = _probabilities(q)
    if p.shape != q.shape:
        raise LengthMismatch(f"lengths {p.size} and {q.size} differ")
    mask = p > 0
    if np.any(q[mask] == 0):
        return math.inf
    return _clamp(float(np.sum(p[mask] * np.log(p[mask] / q[mask]))), "KL divergence")


def kl_divergence_grid(p1, p2) -> float:
    """Quadrature of ``P1 (ln P1 - ln P2)`` over a shared phase-space grid."""
    if not p1.same_grid(p2):
        raise GridMismatch("distributions live on different grids")
    a = p1.values
    b = p2.values
    mask = a > 0
    if np.any(b[mask] <= 0):
        return math.inf
    integrand = np.zeros_like(a)
    integrand[mask] = a[mask] * (np.log(a[mask]) - np.log(b[mask]))
    return _clamp(float(np.sum(p1.weights * integrand)), "grid KL divergence")


def _finite(value: float, what: str) -> float:
    if math.isinf(value):
        raise InfiniteEntropy(f"{what} is infinite")
    return value


def tensoring_invariance_residual(s1, s2, tau, sig) -> float:
    """``|S(s1 x tau x sig | s2 x tau x sig) - S(s1|s2)|``."""
    s1, s2, tau, sig = (as_density(x) for x in (s1, s2, tau, sig))
    if s1.dim != s2.dim:
        raise DimensionMismatch(f"source dimensions {s1.dim} and {s2.dim} differ")
    bare = _finite(quantum_relative_entropy(s1, s2), "S(s1|s2)")
    joint = _finite(
        quantum_relative_entropy(tensor(tensor(s1, tau), sig), tensor(tensor(s2, tau), sig)),
        "S of the extended states",
    )
    return abs(joint - bare)


def unitary_invariance_residual(r1, r2, u, tol: float = 1e-9) -> float:
    r1 = as_density(r1)
    r2 = as_density(r2)
    u = np.asarray(u, dtype=complex)
    res = unitarity_residual(u)
    if res > tol:
        raise NotUnitary(f"max |U^dag U - I| = {res:.3e} > {tol:.1e}")
    before = _finite(quantum_relative_entropy(r1, r2), "S(r1|r2)")
    after = _finite(quantum_relative_entropy(conjugate(r1, u), conjugate(r2, u)), "S(u r1 u^dag|u r2 u^dag)")
    return abs(after - before)


def monotonicity_gap(r1: DensityMatrix, r2: DensityMatrix, keep) -> float:
    """``S(r1|r2) - S(Tr_rest r1 | Tr_rest r2)`` for the kept subsystems."""
    joint = _finite(quantum_relative_entropy(r1, r2), "S(r1|r2)")
    reduced = quantum_relative_entropy(partial_trace(r1, keep), partial_trace(r2, keep))
    return joint - reduced


def equality_condition_residual(r1: DensityMatrix, r2: DensityMatrix, keep, cutoff: float = SUPPORT_CUTOFF) -> float:
    """Frobenius norm on supp(r2) of ``ln r1 - ln r2 - I_rest x (ln r1_B - ln r2_B)``.

    Zero exactly when discarding the complement of `keep` loses no
    distinguishability, i.e. when the monotonicity bound is tight.
    """
    _finite(quantum_relative_entropy(r1, r2, cutoff), "S(r1|r2)")
    b1 = partial_trace(r1, keep)
    b2 = partial_trace(r2, keep)
    local = log_on_support(b1, cutoff).data - log_on_support(b2, cutoff).data
    diff = log_on_support(r1, cutoff).data - log_on_support(r2, cutoff).data
    diff = diff - embed_operator(local, r1.dims, keep)
    proj = support_decompose(r2, cutoff).projector()
    return float(np.linalg.norm(proj @ diff @ proj))


def format_value(value: float) -> dict:
    """Serialize a relative entropy as ``{"value": number | "inf"}``."""
    return {"value": "inf" if math.isinf(value) else value}
