"""Classical densities on phase space and their coherent-state (P) quantization.

A density P(x, p) becomes the mixture rho = int dx dp P(x, p) |alpha><alpha|
with alpha = (x + i p) / sqrt(2 hbar) (unit frequency). The moment identity

    Tr[rho1 (rho2 / (2 pi hbar))**(n-1)]  ->  int dx dp P1 P2**(n-1)   (hbar -> 0)

is what carries the quantum relative entropy over to the Kullback-Leibler
divergence. Coherent-state overlaps integrate to 2 pi hbar over phase space,
which is where the 2 pi in the normalization comes from.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.stats
from scipy.optimize import linear_sum_assignment
from scipy.special import gammaln

from .entropy import kl_divergence_grid, quantum_relative_entropy
from .errors import (
    BadSize,
    DimensionMismatch,
    GridMismatch,
    GridTooCoarse,
    TruncationInsufficient,
    ValidationError,
    VerificationFailure,
)
from .quantum_state import DensityMatrix

TAIL_TOL = 1e-8
NORM_TOL = 1e-6
DRIFT_TOL = 1e-4


def trapezoid_weights(x: np.ndarray) -> np.ndarray:
    w = np.zeros_like(x, dtype=float)
    dx = np.diff(x)
    w[:-1] += dx / 2
    w[1:] += dx / 2
    return w


@dataclass(frozen=True)
class PhaseSpaceDistribution:
    """A probability density sampled on a rectangular (x, p) grid.

    ``values[i, j]`` is P(x[i], p[j]); ``weights`` are the matching
    trapezoidal quadrature weights.
    """

    x: np.ndarray
    p: np.ndarray
    values: np.ndarray
    weights: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        p = np.asarray(self.p, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (x.size, p.size):
            raise GridMismatch(f"values have shape {vals.shape}, grid is {x.size}x{p.size}")
        if x.size < 2 or p.size < 2 or np.any(np.diff(x) <= 0) or np.any(np.diff(p) <= 0):
            raise ValidationError("grid axes must be strictly increasing with at least two nodes")
        if np.any(vals < 0):
            raise ValidationError("a phase-space density cannot be negative")
        w = self.weights
        if w is None:
            w = np.outer(trapezoid_weights(x), trapezoid_weights(p))
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "weights", np.asarray(w, dtype=float))
        total = self.total()
        if abs(total - 1.0) > NORM_TOL:
            raise ValidationError(f"density integrates to {total:.9f}, not 1")

    @classmethod
    def from_function(cls, f, x: np.ndarray, p: np.ndarray, normalize: bool = True) -> "PhaseSpaceDistribution":
        xx, pp = np.meshgrid(x, p, indexing="ij")
        vals = np.asarray(f(xx, pp), dtype=float)
        if normalize:
            w = np.outer(trapezoid_weights(np.asarray(x, float)), trapezoid_weights(np.asarray(p, float)))
            vals = vals / np.sum(w * vals)
        return cls(x, p, vals)

    @classmethod
    def gaussian(cls, center=(0.0, 0.0), sigma: float | tuple[float, float] = 1.0, nodes: int = 129,
                 extent: float | None = None, span: float = 6.0) -> "PhaseSpaceDistribution":
        """Gaussian with per-axis standard deviation `sigma`.

        The grid is centred on `center` and reaches `span` deviations each way
        unless `extent` (a half-width) is given, in which case it is centred on
        the origin.
        """
        sx, sp = (sigma, sigma) if np.isscalar(sigma) else sigma
        x0, p0 = center
        if extent is None:
            x = np.linspace(x0 - span * sx, x0 + span * sx, nodes)
            p = np.linspace(p0 - span * sp, p0 + span * sp, nodes)
        else:
            x = np.linspace(-extent, extent, nodes)
            p = np.linspace(-extent, extent, nodes)
        return cls.from_function(lambda a, b: gaussian_density(a, b, center, (sx, sp)), x, p)

    @classmethod
    def uniform_box(cls, x: np.ndarray, p: np.ndarray) -> "PhaseSpaceDistribution":
        return cls.from_function(lambda a, b: np.ones_like(a), x, p)

    @classmethod
    def from_csv(cls, path: str | Path, normalize: bool = True) -> "PhaseSpaceDistribution":
        """Read rows ``x,p,value`` (header optional) covering a full rectangular grid."""
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.reader(fh):
                if not rec or rec[0].strip().startswith("#"):
                    continue
                try:
                    rows.append([float(v) for v in rec[:3]])
                except ValueError:
                    continue  # header
        if not rows:
            raise ValidationError(f"{path}: no numeric rows")
        arr = np.asarray(rows)
        xs = np.unique(arr[:, 0])
        ps = np.unique(arr[:, 1])
        if arr.shape[0] != xs.size * ps.size:
            raise GridMismatch(f"{path}: {arr.shape[0]} rows do not fill a {xs.size}x{ps.size} grid")
        vals = np.zeros((xs.size, ps.size))
        vals[np.searchsorted(xs, arr[:, 0]), np.searchsorted(ps, arr[:, 1])] = arr[:, 2]
        if normalize:
            w = np.outer(trapezoid_weights(xs), trapezoid_weights(ps))
            vals = vals / np.sum(w * vals)
        return cls(xs, ps, vals)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["x", "p", "value"])
            for i, xv in enumerate(self.x):
                for j, pv in enumerate(self.p):
                    wr.writerow([repr(float(xv)), repr(float(pv)), repr(float(self.values[i, j]))])

    def total(self) -> float:
        return float(np.sum(self.weights * self.values))

    def same_grid(self, other: "PhaseSpaceDistribution") -> bool:
        return (
            self.x.shape == other.x.shape
            and self.p.shape == other.p.shape
            and np.allclose(self.x, other.x, rtol=0, atol=1e-12)
            and np.allclose(self.p, other.p, rtol=0, atol=1e-12)
        )

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.p, indexing="ij")

    def moments(self) -> dict[str, float]:
        xx, pp = self.mesh()
        wp = self.weights * self.values
        return {
            "x": float(np.sum(wp * xx)),
            "p": float(np.sum(wp * pp)),
            "x2": float(np.sum(wp * xx**2)),
            "p2": float(np.sum(wp * pp**2)),
        }


def gaussian_density(x, p, center=(0.0, 0.0), sigma=(1.0, 1.0)):
    sx, sp = sigma
    x0, p0 = center
    return np.exp(-0.5 * ((x - x0) / sx) ** 2 - 0.5 * ((p - p0) / sp) ** 2) / (2 * math.pi * sx * sp)


@dataclass(frozen=True)
class FockConfig:
    """Fock truncation (levels 0..dim-1) and Planck constant; frequency fixed at 1."""

    dim: int
    hbar: float

    def __post_init__(self):
        if self.dim < 2:
            raise ValidationError(f"Fock dimension must be >= 2, got {self.dim}")
        if not self.hbar > 0:
            raise ValidationError(f"hbar must be positive, got {self.hbar}")


def alpha_of(x, p, hbar: float):
    return (np.asarray(x) + 1j * np.asarray(p)) / math.sqrt(2.0 * hbar)


def fock_dim_for(alpha2_max: float) -> int:
    """Truncation rule: dim >= |alpha|^2 + 8 |alpha| + 10."""
    return int(math.ceil(alpha2_max + 8.0 * math.sqrt(alpha2_max) + 10.0))


def auto_config(hbar: float, *dists: PhaseSpaceDistribution, margin: int = 0) -> FockConfig:
    """Smallest Fock dimension satisfying the truncation rule at every grid node carrying weight."""
    a2 = 0.0
    for d in dists:
        xx, pp = d.mesh()
        live = d.values > 0
        if np.any(live):
            a2 = max(a2, float(np.max((xx[live] ** 2 + pp[live] ** 2) / (2.0 * hbar))))
    return FockConfig(fock_dim_for(a2) + margin, hbar)


def truncation_tail(alpha2, dim: int):
    """Coherent-state weight beyond level dim-1 (a Poisson tail)."""
    return scipy.stats.poisson.sf(dim - 1, alpha2)


def coherent_states(alpha: np.ndarray, dim: int, tail_tol: float = TAIL_TOL, renormalize: bool = True) -> np.ndarray:
    """Columns <m|alpha> for each alpha, renormalized after truncation.

    With ``renormalize=False`` the columns are the exact projections onto
    levels 0..dim-1 and no tail check is made.
    """
    alpha = np.atleast_1d(np.asarray(alpha, dtype=complex))
    a2 = np.abs(alpha) ** 2
    tail = truncation_tail(a2, dim) if renormalize else np.zeros(0)
    worst = float(np.max(tail)) if tail.size else 0.0
    if worst > tail_tol:
        raise TruncationInsufficient(
            f"Fock dimension {dim} loses weight {worst:.2e} > {tail_tol:.0e} at |alpha|^2 = {a2[np.argmax(tail)]:.3g}"
        )
    m = np.arange(dim)[:, None]
    mod = np.abs(alpha)[None, :]
    # alpha = 0 is the vacuum; keep log() away from it
    log_mod = np.log(np.where(mod > 0, mod, 1.0))
    log_amp = -0.5 * a2[None, :] + m * log_mod - 0.5 * gammaln(m + 1)
    amps = np.exp(log_amp) * np.exp(1j * m * np.angle(alpha)[None, :])
    amps[1:, mod[0] == 0] = 0.0
    if not renormalize:
        return amps
    return amps / np.linalg.norm(amps, axis=0, keepdims=True)


def coherent_state(x: float, p: float, cfg: FockConfig, tail_tol: float = TAIL_TOL) -> np.ndarray:
    return coherent_states(alpha_of(x, p, cfg.hbar), cfg.dim, tail_tol)[:, 0]


def resolution_drift(P: PhaseSpaceDistribution, hbar: float) -> float:
    """How far the grid sum of (2 pi hbar)^-1 |<alpha|beta>|^2 over alpha misses 1.

    The coherent states resolve the identity only if the grid resolves their
    width sqrt(hbar); the sum is evaluated at a node and halfway between
    nodes (the extremes of its periodic error) on each axis.
    """
    s = math.sqrt(hbar)

    def axis(nodes: np.ndarray) -> float:
        h = float(np.max(np.diff(nodes)))
        k = np.arange(-math.ceil(12 * s / h) - 1, math.ceil(12 * s / h) + 2)
        sums = [h * np.sum(np.exp(-((k * h - d) ** 2) / (2 * hbar))) / math.sqrt(2 * math.pi * hbar)
                for d in (0.0, 0.5 * h)]
        return max(abs(v - 1.0) for v in sums)

    ex, ep = axis(P.x), axis(P.p)
    return (1 + ex) * (1 + ep) - 1


def p_construct(P: PhaseSpaceDistribution, cfg: FockConfig, tail_tol: float = TAIL_TOL,
                chunk: int = 4096) -> DensityMatrix:
    """Quadrature of P(x, p) |alpha><alpha| over the grid, divided by its trace.

    Nodes are accumulated in row-major order. Raises :class:`GridTooCoarse`
    if the grid is too coarse for the coherent-state width (resolution drift
    above 1e-4) or the trace before division is more than 1e-4 away from 1.
    """
    drift = resolution_drift(P, cfg.hbar)
    if drift > DRIFT_TOL:
        raise GridTooCoarse(f"grid spacing too coarse for hbar = {cfg.hbar}: resolution drift {drift:.2e}")
    xx, pp = P.mesh()
    wp = (P.weights * P.values).ravel()
    live = wp > 0
    alphas = alpha_of(xx.ravel()[live], pp.ravel()[live], cfg.hbar)
    wp = wp[live]
    rho = np.zeros((cfg.dim, cfg.dim), dtype=complex)
    for start in range(0, alphas.size, chunk):
        c = coherent_states(alphas[start : start + chunk], cfg.dim, tail_tol)
        rho += (c * wp[start : start + chunk]) @ c.conj().T
    tr = float(np.trace(rho).real)
    if abs(tr - 1.0) > DRIFT_TOL:
        raise GridTooCoarse(f"P-construction trace is {tr:.6f}; refine or widen the grid")
    rho /= tr
    return DensityMatrix(0.5 * (rho + rho.conj().T), (cfg.dim,))


def moment_quantum(r1: DensityMatrix, r2: DensityMatrix, n: int, hbar: float,
                   normalization: str = "phase_space") -> float:
    """Tr[r1 (r2 / s)**(n-1)] with s = 2 pi hbar ("phase_space") or s = hbar ("hbar")."""
    if n < 2:
        raise ValidationError(f"moment order must be >= 2, got {n}")
    if r1.dim != r2.dim:
        raise DimensionMismatch(f"Fock dimensions {r1.dim} and {r2.dim} differ")
    scales = {"phase_space": 2 * math.pi * hbar, "hbar": hbar}
    if normalization not in scales:
        raise ValidationError(f"normalization must be 'phase_space' or 'hbar', got {normalization!r}")
    scale = scales[normalization]
    val = np.trace(r1.data @ np.linalg.matrix_power(r2.data / scale, n - 1))
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise VerificationFailure(f"moment has imaginary part {val.imag:.3e}")
    return float(val.real)


def moment_classical(P1: PhaseSpaceDistribution, P2: PhaseSpaceDistribution, n: int) -> float:
    """Quadrature of P1 * P2**(n-1)."""
    if n < 2:
        raise ValidationError(f"moment order must be >= 2, got {n}")
    if not P1.same_grid(P2):
        raise GridMismatch("distributions live on different grids")
    return float(np.sum(P1.weights * P1.values * P2.values ** (n - 1)))


@dataclass(frozen=True)
class SweepRow:
    hbar: float
    n: int
    quantum: float
    classical: float
    rel_error: float
    quantum_raw: float
    fock_dim: int

    CSV_FIELDS = ("hbar", "n", "quantum", "classical", "rel_error")


def hbar_sweep(P1: PhaseSpaceDistribution, P2: PhaseSpaceDistribution, n: int, schedule: Sequence[float],
               tail_tol: float = TAIL_TOL) -> list[SweepRow]:
    """Quantum moment against the classical one along a decreasing hbar schedule.

    The Fock dimension is re-derived for every hbar from the truncation rule.
    ``quantum`` uses the 2 pi hbar scaling; ``quantum_raw`` the bare hbar one.
    """
    schedule = [float(h) for h in schedule]
    if not schedule or any(h <= 0 for h in schedule) or any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ValidationError("hbar schedule must be positive and strictly decreasing")
    classical = moment_classical(P1, P2, n)
    rows = []
    for h in schedule:
        cfg = auto_config(h, P1, P2)
        r1 = p_construct(P1, cfg, tail_tol)
        r2 = r1 if P2 is P1 else p_construct(P2, cfg, tail_tol)
        q = moment_quantum(r1, r2, n, h)
        raw = moment_quantum(r1, r2, n, h, normalization="hbar")
        rel = abs(q - classical) / abs(classical) if classical != 0 else abs(q)
        rows.append(SweepRow(h, n, q, classical, rel, raw, cfg.dim))
    return rows


def entropy_limit_sweep(P1: PhaseSpaceDistribution, P2: PhaseSpaceDistribution,
                        schedule: Sequence[float]) -> list[tuple[float, float, float]]:
    """(hbar, S(rho1|rho2), K(P1|P2)) rows for full-rank constructions."""
    kl = kl_divergence_grid(P1, P2)
    out = []
    for h in schedule:
        cfg = auto_config(h, P1, P2)
        out.append((float(h), quantum_relative_entropy(p_construct(P1, cfg), p_construct(P2, cfg)), kl))
    return out


# -- the quadratic form behind the delta-function limit ----------------------------------

SIGMA_Y = np.array([[0, -1j], [1j, 0]])
B_BLOCK = -0.5 * (np.eye(2) - SIGMA_Y)


@dataclass(frozen=True)
class VMatrix:
    """Cyclic block-banded 2n x 2n matrix: identity blocks on the diagonal,
    B above it and B^T below it, wrapping around. Coordinates are ordered
    (x0, p0, x1, p1, ...)."""

    n: int
    data: np.ndarray

    def normality_residual(self) -> float:
        v = self.data
        return float(np.linalg.norm(v @ v.conj().T - v.conj().T @ v))


@dataclass(frozen=True)
class VEigensystem:
    eigenvalues: np.ndarray  # (2, n): row k-1 holds mu_kj
    eigenvectors: np.ndarray  # (2, n, 2n)
    roots: np.ndarray  # omega_j
    residual: float

    def unitary(self) -> np.ndarray:
        """Eigenvectors as columns, ordered (k=1, j=0..n-1), (k=2, j=0..n-1)."""
        return self.eigenvectors.reshape(-1, self.eigenvectors.shape[-1]).T

    def flat_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues.ravel()


def build_v_matrix(n: int, block: np.ndarray = B_BLOCK) -> VMatrix:
    """`block` defaults to -(I - sigma_y)/2; passing its transpose gives the
    same matrix under the opposite sign convention for sigma_y."""
    if n < 2:
        raise BadSize(f"block count must be >= 2, got {n}")
    v = np.zeros((2 * n, 2 * n), dtype=complex)
    for j in range(n):
        v[2 * j : 2 * j + 2, 2 * j : 2 * j + 2] += np.eye(2)
        r = (j + 1) % n
        l = (j - 1) % n
        v[2 * j : 2 * j + 2, 2 * r : 2 * r + 2] += block
        v[2 * j : 2 * j + 2, 2 * l : 2 * l + 2] += block.T
    return VMatrix(n, v)


def analytic_eigenpairs(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """e_kj = ((-1)^k, i) (x) (1, w_j, ..., w_j^(n-1)) / sqrt(2n) with its eigenvalue.

    For the matrix built here (B above the diagonal, standard sigma_y) the
    eigenvalue of e_kj is 1 - w_j^((-1)^(k+1)): k = 1 pairs with 1 - w_j and
    k = 2 with 1 - conj(w_j). Over j both families cover the same multiset
    {1 - w_j^(+-1)}, two of which vanish (j = 0).
    """
    roots = np.exp(2j * np.pi * np.arange(n) / n)
    vecs = np.zeros((2, n, 2 * n), dtype=complex)
    vals = np.zeros((2, n), dtype=complex)
    for k in (1, 2):
        spin = np.array([(-1) ** k, 1j])
        for j, w in enumerate(roots):
            vecs[k - 1, j] = np.kron(w ** np.arange(n), spin) / math.sqrt(2 * n)
            vals[k - 1, j] = 1 - w ** ((-1) ** (k + 1))
    return vals, vecs, roots


def v_eigensystem(v: VMatrix, tol: float = 1e-10) -> VEigensystem:
    vals, vecs, roots = analytic_eigenpairs(v.n)
    res = 0.0
    for k in range(2):
        for j in range(v.n):
            e = vecs[k, j]
            res = max(res, float(np.linalg.norm(v.data @ e - vals[k, j] * e)))
    if res > tol:
        raise VerificationFailure(f"analytic eigenpairs miss the matrix by {res:.3e}")
    return VEigensystem(vals, vecs, roots, res)


def gaussian_exponent_check(n: int, nodes: Sequence[tuple[float, float]]) -> tuple[complex, complex]:
    """u^dag V u evaluated directly and as sum_kj mu_kj |v_kj|^2 with v = U^dag u.

    The form is complex: its real part is half the sum of squared distances
    between cyclically consecutive nodes, its imaginary part the accumulated
    symplectic area, so it vanishes when all nodes coincide.
    """
    if len(nodes) != n:
        raise ValidationError(f"need {n} nodes, got {len(nodes)}")
    u = np.asarray(nodes, dtype=float).ravel()
    v = build_v_matrix(n)
    direct = complex(u @ v.data @ u)
    eig = v_eigensystem(v)
    coeffs = eig.unitary().conj().T @ u
    diagonal = complex(np.sum(eig.flat_eigenvalues() * np.abs(coeffs) ** 2))
    return direct, diagonal


def verify_v_matrix(n: int) -> dict:
    """Structural and spectral checks of the n-block V matrix.

    ``multiset_error`` matches the numerical eigenvalues against
    {1 - w_j, 1 - conj(w_j)} by optimal assignment.
    """
    v = build_v_matrix(n)
    eig = v_eigensystem(v)
    numeric = np.linalg.eigvals(v.data)
    formula = eig.flat_eigenvalues()
    cost = np.abs(numeric[:, None] - formula[None, :])
    rows, cols = linear_sum_assignment(cost)
    nonzero = formula[np.abs(formula) > 1e-12]
    return {
        "n": n,
        "normality": v.normality_residual(),
        "eigen_residual": eig.residual,
        "zero_eigenvalues": int(np.sum(np.abs(numeric) <= 1e-10)),
        "multiset_error": float(np.max(cost[rows, cols])),
        "nonzero_min": float(np.min(np.abs(nonzero))),
        "nonzero_max": float(np.max(np.abs(nonzero))),
    }
