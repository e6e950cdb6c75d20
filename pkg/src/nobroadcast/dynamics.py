"""Phase-space dynamics in characteristic-function form, classical and quantum.

Conventions: P(x, p) = sum over (lam, mu) of Pt(lam, mu) exp(i(lam x + mu p)),
so Pt = (2 pi)^-2 int P exp(-i(lam x + mu p)). Both Liouville and von Neumann
evolution then read

    d/dt Pt(lam, mu) = int dlam' dmu' Pt(lam', mu') Ht(lam - lam', mu - mu') K(lam, mu, lam', mu')

with the classical kernel K_C = lam' mu - lam mu' or the quantum kernel
K_Q = (2/hbar) exp(hbar/2 (lam'(lam - lam') + mu'(mu - mu'))) sin(hbar/2 (lam' mu - mu' lam)).

Polynomial Hamiltonians have characteristic functions made of derivatives of
delta functions; for them the integral collapses to derivatives of
Pt * K at lam' = lam, mu' = mu, which is how they are evolved here.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
import scipy.stats.qmc
from scipy.special import comb

from .errors import DimensionMismatch, GridMismatch, GridTooCoarse, OutsideGrid, UnstableStep, ValidationError, VerificationFailure
from .phase_space import (
    DRIFT_TOL,
    FockConfig,
    PhaseSpaceDistribution,
    alpha_of,
    auto_config,
    coherent_states,
    p_construct,
    resolution_drift,
    trapezoid_weights,
)
from .quantum_state import DensityMatrix, HermitianOperator

SYMMETRY_TOL = 1e-6  # per-step drift allowed during integration
SYMMETRY_TOL_INPUT = 1e-9
EDGE_TOL = 1e-3  # boundary density relative to the peak; the spectral noise floor sits near 1e-4


# -- kernels ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelPoint:
    lam: float
    mu: float
    lam_p: float
    mu_p: float
    hbar: float = 1.0


def classical_kernel(pt: KernelPoint):
    return pt.lam_p * pt.mu - pt.lam * pt.mu_p


def quantum_kernel(pt: KernelPoint):
    h = pt.hbar
    if not np.all(np.asarray(h) > 0):
        raise ValidationError("hbar must be positive")
    growth = np.exp(0.5 * h * (pt.lam_p * (pt.lam - pt.lam_p) + pt.mu_p * (pt.mu - pt.mu_p)))
    return (2.0 / h) * growth * np.sin(0.5 * h * (pt.lam_p * pt.mu - pt.mu_p * pt.lam))


def kernel_deviation(lo: Sequence[float], hi: Sequence[float], hbar: float, samples: int = 10_000) -> float:
    """max |K_Q - K_C| over an unscrambled Halton sample of the box [lo, hi] in (lam, mu, lam', mu')."""
    if samples < 1:
        raise ValidationError("need at least one sample")
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != (4,) or hi.shape != (4,) or np.any(hi < lo):
        raise ValidationError("box must be given by 4 lower and 4 upper bounds with lo <= hi")
    unit = scipy.stats.qmc.Halton(d=4, scramble=False).random(samples)
    pts = lo + unit * (hi - lo)
    kp = KernelPoint(pts[:, 0], pts[:, 1], pts[:, 2], pts[:, 3], hbar)
    return float(np.max(np.abs(quantum_kernel(kp) - classical_kernel(kp))))


@lru_cache(maxsize=None)
def _kernel_taylor(kind: str, r: int, s: int):
    """d^r/dlam'^r d^s/dmu'^s K at lam' = lam, mu' = mu, as f(lam, mu, hbar)."""
    import sympy as sp  # only needed once per derivative order

    lam, mu, a, b, h = sp.symbols("lam mu a b h")
    if kind == "classical":
        k = a * mu - b * lam
    else:
        k = (2 / h) * sp.exp(-(h / 2) * (lam * a + mu * b + a**2 + b**2)) * sp.sin((h / 2) * (a * mu - b * lam))
    expr = sp.diff(k, a, r, b, s) if (r or s) else k
    expr = sp.simplify(expr.subs({a: 0, b: 0}))
    f = sp.lambdify((lam, mu, h), expr, "numpy")
    return lambda L, M, H: np.broadcast_to(np.asarray(f(L, M, H), dtype=float), np.broadcast(L, M).shape)


# -- characteristic functions and Hamiltonians ----------------------------------------------


def _uniform_symmetric(axis: np.ndarray, name: str) -> float:
    d = np.diff(axis)
    if axis.size < 3 or axis.size % 2 == 0:
        raise ValidationError(f"{name} grid must have an odd number (>= 3) of nodes")
    if not np.allclose(d, d[0], rtol=1e-9, atol=0) or d[0] <= 0:
        raise ValidationError(f"{name} grid must be uniform and increasing")
    if not np.allclose(axis, -axis[::-1], atol=1e-9 * abs(axis[-1])):
        raise ValidationError(f"{name} grid must be symmetric about 0")
    return float(d[0])


@dataclass(frozen=True)
class CharacteristicFunction:
    """Complex samples ``values[i, j]`` = F(lam[i], mu[j]) on a uniform grid symmetric about 0."""

    lam: np.ndarray
    mu: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        mu = np.asarray(self.mu, dtype=float)
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != (lam.size, mu.size):
            raise GridMismatch(f"values have shape {vals.shape}, grid is {lam.size}x{mu.size}")
        _uniform_symmetric(lam, "lambda")
        _uniform_symmetric(mu, "mu")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "values", vals)
        if vals.size and self.symmetry_error() > SYMMETRY_TOL_INPUT:
            raise ValidationError(f"not the transform of a real function (symmetry error {self.symmetry_error():.2e})")

    @property
    def spacing(self) -> tuple[float, float]:
        return float(self.lam[1] - self.lam[0]), float(self.mu[1] - self.mu[0])

    def symmetry_error(self) -> float:
        """max |F(-lam, -mu) - conj F(lam, mu)|; zero for transforms of real functions."""
        return float(np.max(np.abs(self.values[::-1, ::-1] - self.values.conj())))

    def same_grid(self, other: "CharacteristicFunction") -> bool:
        return (
            self.lam.shape == other.lam.shape
            and self.mu.shape == other.mu.shape
            and np.allclose(self.lam, other.lam)
            and np.allclose(self.mu, other.mu)
        )

    def with_values(self, values: np.ndarray) -> "CharacteristicFunction":
        # same grid, no re-validation: used for integrator stages
        out = object.__new__(CharacteristicFunction)
        object.__setattr__(out, "lam", self.lam)
        object.__setattr__(out, "mu", self.mu)
        object.__setattr__(out, "values", np.asarray(values, dtype=complex))
        return out

    @classmethod
    def from_distribution(cls, P: PhaseSpaceDistribution, lam: np.ndarray, mu: np.ndarray) -> "CharacteristicFunction":
        """(2 pi)^-2 sum_xp w P exp(-i(lam x + mu p)) by grid quadrature."""
        ex = np.exp(-1j * np.outer(lam, P.x))
        ep = np.exp(-1j * np.outer(P.p, mu))
        return cls(lam, mu, ex @ (P.weights * P.values) @ ep / (2 * math.pi) ** 2)

    @classmethod
    def gaussian(cls, lam: np.ndarray, mu: np.ndarray, center=(0.0, 0.0), sigma: float = 1.0) -> "CharacteristicFunction":
        ll, mm = np.meshgrid(lam, mu, indexing="ij")
        vals = np.exp(-1j * (ll * center[0] + mm * center[1]) - 0.5 * sigma**2 * (ll**2 + mm**2))
        return cls(lam, mu, vals / (2 * math.pi) ** 2)

    @classmethod
    def grid(cls, nodes: int, lam_max: float) -> "CharacteristicFunction":
        axis = np.linspace(-lam_max, lam_max, nodes)
        return cls(axis, axis, np.zeros((nodes, nodes)))

    @classmethod
    def from_csv(cls, path) -> "CharacteristicFunction":
        """Read rows ``lam,mu,re,im`` (header optional) covering a full grid."""
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.reader(fh):
                if not rec or rec[0].strip().startswith("#"):
                    continue
                try:
                    rows.append([float(v) for v in rec[:4]])
                except ValueError:
                    continue  # header
        if not rows or len(rows[0]) < 4:
            raise ValidationError(f"{path}: expected numeric rows lam,mu,re,im")
        arr = np.asarray(rows)
        lam = np.unique(arr[:, 0])
        mu = np.unique(arr[:, 1])
        if arr.shape[0] != lam.size * mu.size:
            raise GridMismatch(f"{path}: {arr.shape[0]} rows do not fill a {lam.size}x{mu.size} grid")
        vals = np.zeros((lam.size, mu.size), dtype=complex)
        vals[np.searchsorted(lam, arr[:, 0]), np.searchsorted(mu, arr[:, 1])] = arr[:, 2] + 1j * arr[:, 3]
        return cls(lam, mu, vals)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["lam", "mu", "re", "im"])
            for i, lv in enumerate(self.lam):
                for j, mv in enumerate(self.mu):
                    v = self.values[i, j]
                    wr.writerow([repr(float(lv)), repr(float(mv)), repr(float(v.real)), repr(float(v.imag))])

    def weights(self) -> np.ndarray:
        dl, dm = self.spacing
        return np.full(self.values.shape, dl * dm)

    def to_function(self, x: np.ndarray, p: np.ndarray) -> np.ndarray:
        """sum_lam,mu w F exp(i(lam x + mu p)) on the (x, p) grid (real part)."""
        ex = np.exp(1j * np.outer(x, self.lam))
        ep = np.exp(1j * np.outer(self.mu, p))
        return (ex @ (self.weights() * self.values) @ ep).real

    def moments(self, x: np.ndarray, p: np.ndarray) -> dict[str, float]:
        """First and second moments of the inverse transform, by trapezoid quadrature on (x, p)."""
        f = self.to_function(x, p)
        w = np.outer(trapezoid_weights(x), trapezoid_weights(p))
        xx, pp = np.meshgrid(x, p, indexing="ij")
        wf = w * f
        return {
            "norm": float(np.sum(wf)),
            "x": float(np.sum(wf * xx)),
            "p": float(np.sum(wf * pp)),
            "x2": float(np.sum(wf * xx**2)),
            "p2": float(np.sum(wf * pp**2)),
        }


@dataclass(frozen=True)
class PolynomialHamiltonian:
    """H(x, p) = sum over (a, b) of coeffs[(a, b)] x**a p**b."""

    coeffs: Mapping[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for (a, b), c in dict(self.coeffs).items():
            if a < 0 or b < 0:
                raise ValidationError("monomial powers must be non-negative")
            if c != 0:
                clean[(int(a), int(b))] = float(c)
        object.__setattr__(self, "coeffs", clean)

    @classmethod
    def preset(cls, name: str, coefficient: float = 1.0, quartic: float = 0.1) -> "PolynomialHamiltonian":
        """'zero', 'free' (c p^2/2), 'harmonic' (c (x^2 + p^2)/2) or 'quartic' (p^2/2 + g x^4)."""
        if name == "zero":
            return cls({})
        if name == "free":
            return cls({(0, 2): 0.5 * coefficient})
        if name == "harmonic":
            return cls({(2, 0): 0.5 * coefficient, (0, 2): 0.5 * coefficient})
        if name == "quartic":
            return cls({(0, 2): 0.5 * coefficient, (4, 0): quartic})
        raise ValidationError(f"unknown Hamiltonian preset {name!r}")

    def __call__(self, x, p):
        return sum(c * np.asarray(x) ** a * np.asarray(p) ** b for (a, b), c in self.coeffs.items()) + 0 * np.asarray(x)

    @property
    def degree(self) -> int:
        return max((a + b for a, b in self.coeffs), default=0)


# -- evolution in characteristic space ---------------------------------------------------------


def _spectral_derivative(values: np.ndarray, spacing: float, order: int, axis: int) -> np.ndarray:
    if order == 0:
        return values
    n = values.shape[axis]
    k = 2 * math.pi * np.fft.fftfreq(n, d=spacing)
    if n % 2 == 0 and order % 2 == 1:
        k[n // 2] = 0.0
    shape = [1, 1]
    shape[axis] = n
    mult = ((1j * k) ** order).reshape(shape)
    return np.fft.ifft(np.fft.fft(values, axis=axis) * mult, axis=axis)


def _kernel_name(kernel: str, hbar: float | None) -> str:
    if kernel not in ("classical", "quantum"):
        raise ValidationError(f"kernel must be 'classical' or 'quantum', got {kernel!r}")
    if kernel == "quantum" and not (hbar and hbar > 0):
        raise ValidationError("the quantum kernel needs a positive hbar")
    return kernel


def _rhs_polynomial(f: CharacteristicFunction, H: PolynomialHamiltonian, kernel: str, hbar: float | None):
    dl, dm = f.spacing
    ll, mm = np.meshgrid(f.lam, f.mu, indexing="ij")
    h = hbar or 1.0
    out = np.zeros_like(f.values)
    derivs: dict[tuple[int, int], np.ndarray] = {}
    for (a, b), c in H.coeffs.items():
        acc = np.zeros_like(f.values)
        for r in range(a + 1):
            for s in range(b + 1):
                if r == a and s == b:
                    continue  # kernel itself vanishes at coincidence
                if kernel == "classical" and (a - r) + (b - s) > 1:
                    continue
                dk = _kernel_taylor(kernel, a - r, b - s)(ll, mm, h)
                if not np.any(dk):
                    continue
                if (r, s) not in derivs:
                    derivs[(r, s)] = _spectral_derivative(_spectral_derivative(f.values, dl, r, 0), dm, s, 1)
                acc += comb(a, r, exact=True) * comb(b, s, exact=True) * derivs[(r, s)] * dk
        out += c * (1j) ** (a + b) * acc
    return out


def _rhs_grid(f: CharacteristicFunction, H: CharacteristicFunction, kernel: str, hbar: float | None):
    n_l, n_m = f.values.shape
    cl, cm = n_l // 2, n_m // 2
    w = f.weights()[0, 0]
    pw = f.values * w
    ll, mm = f.lam, f.mu
    out = np.zeros_like(f.values)
    k_idx = np.arange(n_l)
    l_idx = np.arange(n_m)
    for i in range(n_l):
        di = i - k_idx + cl  # index of lam_i - lam_k in H's grid
        vi = (di >= 0) & (di < n_l)
        for j in range(n_m):
            dj = j - l_idx + cm
            vj = (dj >= 0) & (dj < n_m)
            ht = np.zeros((n_l, n_m), dtype=complex)
            ht[np.ix_(vi, vj)] = H.values[np.ix_(di[vi], dj[vj])]
            kp = KernelPoint(ll[i], mm[j], ll[:, None], mm[None, :], hbar or 1.0)
            kern = classical_kernel(kp) if kernel == "classical" else quantum_kernel(kp)
            out[i, j] = np.sum(pw * ht * kern)
    return out


def generator_bound(f: CharacteristicFunction, H, kernel: str = "classical", hbar: float | None = None) -> float:
    """Upper bound on the spectral radius of the right-hand side as a linear map on the grid."""
    kernel = _kernel_name(kernel, hbar)
    if isinstance(H, CharacteristicFunction):
        lmax, mmax = float(f.lam[-1]), float(f.mu[-1])
        kmax = 2 * lmax * mmax
        if kernel == "quantum":
            # |sin| <= 1 and the exponent peaks at lam' = lam/2, mu' = mu/2
            kmax = (2 / hbar) * math.exp(hbar * (lmax**2 + mmax**2) / 8)
        return float(kmax * np.sum(np.abs(H.values)) * f.weights()[0, 0])
    dl, dm = f.spacing
    kl, km = math.pi / dl, math.pi / dm
    ll, mm = np.meshgrid(f.lam, f.mu, indexing="ij")
    bound = 0.0
    for (a, b), c in H.coeffs.items():
        for r in range(a + 1):
            for s in range(b + 1):
                if (r, s) == (a, b):
                    continue
                dk = float(np.max(np.abs(_kernel_taylor(kernel, a - r, b - s)(ll, mm, hbar or 1.0))))
                bound += abs(c) * comb(a, r, exact=True) * comb(b, s, exact=True) * kl**r * km**s * dk
    return bound


def stable_steps(f: CharacteristicFunction, H, t_final: float, dt: float, kernel: str = "classical",
                 hbar: float | None = None, safety: float = 2.0) -> int:
    """Number of equal RK4 steps covering t_final with dt * bound <= safety (RK4 is stable to ~2.8)."""
    if t_final <= 0:
        return 0
    bound = generator_bound(f, H, kernel, hbar)
    step = dt if bound == 0 else min(dt, safety / bound)
    return max(1, int(math.ceil(t_final / step - 1e-9)))


def characteristic_rhs(f: CharacteristicFunction, H, kernel: str = "classical", hbar: float | None = None) -> np.ndarray:
    kernel = _kernel_name(kernel, hbar)
    if isinstance(H, PolynomialHamiltonian):
        return _rhs_polynomial(f, H, kernel, hbar)
    if isinstance(H, CharacteristicFunction):
        if not f.same_grid(H):
            raise GridMismatch("state and Hamiltonian characteristic functions use different grids")
        return _rhs_grid(f, H, kernel, hbar)
    raise ValidationError(f"unsupported Hamiltonian type {type(H).__name__}")


def evolve_characteristic(P0: CharacteristicFunction, H, kernel: str = "classical", hbar: float | None = None,
                          dt: float = 0.01, steps: int = 1, max_growth: float = 2.0) -> CharacteristicFunction:
    """Fixed-step classical Runge-Kutta (4 stages) integration of the kernel equation.

    Raises :class:`UnstableStep` when max|Pt| grows by more than `max_growth`
    in one step and :class:`VerificationFailure` when conjugate symmetry
    drifts by more than 1e-6.
    """
    if steps < 0 or dt < 0:
        raise ValidationError("dt and steps must be non-negative")
    f = P0
    vals = P0.values
    for _ in range(steps):
        def rhs(v):
            return characteristic_rhs(f.with_values(v), H, kernel, hbar)

        k1 = rhs(vals)
        k2 = rhs(vals + 0.5 * dt * k1)
        k3 = rhs(vals + 0.5 * dt * k2)
        k4 = rhs(vals + dt * k3)
        new = vals + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        before = float(np.max(np.abs(vals)))
        if before > 0 and float(np.max(np.abs(new))) > max_growth * before:
            raise UnstableStep(f"amplitude grew by more than {max_growth}x in one step; reduce dt")
        vals = new
        sym = float(np.max(np.abs(vals[::-1, ::-1] - vals.conj())))
        if sym > SYMMETRY_TOL:
            raise VerificationFailure(f"conjugate symmetry broken by {sym:.2e}")
    return P0.with_values(vals)


# -- operators in the truncated Fock space ----------------------------------------------------


def annihilation(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim)), k=1).astype(complex)


def _poly_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1] + b.shape[1] - 1), dtype=complex)
    for (i, j), c in np.ndenumerate(a):
        if c != 0:
            out[i : i + b.shape[0], j : j + b.shape[1]] += c * b
    return out


def anti_normal_coefficients(H: PolynomialHamiltonian, hbar: float) -> np.ndarray:
    """Coefficients c[k, l] with H(x, p) = sum c[k, l] alpha**k conj(alpha)**l."""
    s = math.sqrt(hbar / 2.0)
    xpoly = np.array([[0, s], [s, 0]], dtype=complex)  # x = s (alpha + conj alpha)
    ppoly = np.array([[0, 1j * s], [-1j * s, 0]], dtype=complex)  # p = -i s (alpha - conj alpha)
    deg = max(H.degree, 0)
    total = np.zeros((deg + 1, deg + 1), dtype=complex)
    for (a, b), c in H.coeffs.items():
        term = np.array([[1.0 + 0j]])
        for _ in range(a):
            term = _poly_mul(term, xpoly)
        for _ in range(b):
            term = _poly_mul(term, ppoly)
        total[: term.shape[0], : term.shape[1]] += c * term
    return total


def quantization_grid(H: CharacteristicFunction, cfg: FockConfig) -> tuple[np.ndarray, np.ndarray]:
    """Square (x, p) grid with spacing sqrt(hbar)/2 covering the Fock box with a margin.

    The half-width is sqrt(2 hbar)(sqrt(dim) + 7), clipped to half a period
    of the (lam, mu) grid so H(x, p) is not read from an alias.
    """
    dl, dm = H.spacing
    half = min(math.sqrt(2 * cfg.hbar) * (math.sqrt(cfg.dim) + 7), math.pi / dl, math.pi / dm)
    n = 2 * int(math.ceil(half / (0.5 * math.sqrt(cfg.hbar)))) + 1
    axis = np.linspace(-half, half, n)
    return axis, axis


def hamiltonian_operator(H, cfg: FockConfig, grid: tuple[np.ndarray, np.ndarray] | None = None) -> HermitianOperator:
    """Quantize H as (2 pi hbar)^-1 int dx dp H(x, p) |alpha><alpha|.

    Polynomial Hamiltonians are done exactly: the coherent-state integral maps
    alpha**k conj(alpha)**l to the anti-normally ordered a**k adag**l.
    A sampled characteristic function is first transformed back to H(x, p)
    and then integrated on `grid` (default: the grid dual to the lam, mu grid).
    """
    if isinstance(H, PolynomialHamiltonian):
        coef = anti_normal_coefficients(H, cfg.hbar)
        big = cfg.dim + coef.shape[0]
        a = annihilation(big)
        ad = a.conj().T
        op = np.zeros((big, big), dtype=complex)
        for (k, l), c in np.ndenumerate(coef):
            if c != 0:
                op += c * np.linalg.matrix_power(a, k) @ np.linalg.matrix_power(ad, l)
        op = op[: cfg.dim, : cfg.dim]
    elif isinstance(H, CharacteristicFunction):
        x, p = grid if grid is not None else quantization_grid(H, cfg)
        probe = PhaseSpaceDistribution.uniform_box(x, p)
        drift = resolution_drift(probe, cfg.hbar)
        if drift > DRIFT_TOL:
            raise GridTooCoarse(f"quadrature grid too coarse for hbar = {cfg.hbar}: resolution drift {drift:.2e}")
        hx = H.to_function(x, p)
        w = (probe.weights * hx).ravel()
        xx, pp = np.meshgrid(x, p, indexing="ij")
        alphas = alpha_of(xx.ravel(), pp.ravel(), cfg.hbar)
        op = np.zeros((cfg.dim, cfg.dim), dtype=complex)
        for start in range(0, alphas.size, 4096):
            # projections of far-away coherent states are tiny but exact
            c = coherent_states(alphas[start : start + 4096], cfg.dim, renormalize=False)
            op += (c * w[start : start + 4096]) @ c.conj().T
        op /= 2 * math.pi * cfg.hbar
    else:
        raise ValidationError(f"unsupported Hamiltonian type {type(H).__name__}")
    herm = float(np.max(np.abs(op - op.conj().T))) if op.size else 0.0
    if herm > 1e-8 * max(1.0, float(np.max(np.abs(op)))):
        raise VerificationFailure(f"quantized Hamiltonian is not Hermitian (residual {herm:.2e})")
    return HermitianOperator(0.5 * (op + op.conj().T), (cfg.dim,))


def von_neumann_evolve(rho: DensityMatrix, Hop: HermitianOperator, hbar: float, dt: float, steps: int = 1) -> DensityMatrix:
    """rho -> exp(-i H t / hbar) rho exp(i H t / hbar) with t = dt * steps, via eigh(H)."""
    if rho.dim != Hop.dim:
        raise DimensionMismatch(f"state is {rho.dim}-dimensional, Hamiltonian {Hop.dim}")
    if not hbar > 0:
        raise ValidationError("hbar must be positive")
    w, v = np.linalg.eigh(Hop.data)
    u = (v * np.exp(-1j * w * dt * steps / hbar)) @ v.conj().T
    out = u @ rho.data @ u.conj().T
    return DensityMatrix(0.5 * (out + out.conj().T), rho.dims)


def quadrature_operators(dim: int, hbar: float) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """x, p, x^2, p^2 on levels 0..dim-1 (squares built before truncating)."""
    a = annihilation(dim + 2)
    s = math.sqrt(hbar / 2.0)
    x = s * (a + a.conj().T)
    p = -1j * s * (a - a.conj().T)
    cut = slice(0, dim)
    return x[cut, cut], p[cut, cut], (x @ x)[cut, cut], (p @ p)[cut, cut]


def quantum_moments(rho: DensityMatrix, hbar: float, ordering: str = "symmetric") -> dict[str, float]:
    """<x>, <p>, <x^2>, <p^2> of rho.

    ``ordering="normal"`` returns the moments of the state's P function
    (normal-ordered expectations), which differ from the plain operator
    ones by hbar/2 in the second moments.
    """
    if ordering not in ("symmetric", "normal"):
        raise ValidationError(f"ordering must be 'symmetric' or 'normal', got {ordering!r}")
    ops = quadrature_operators(rho.dim, hbar)
    vals = [float(np.trace(rho.data @ o).real) for o in ops]
    if ordering == "normal":
        vals[2] -= 0.5 * hbar
        vals[3] -= 0.5 * hbar
    return dict(zip(("x", "p", "x2", "p2"), vals))


# -- classical / quantum correspondence ----------------------------------------------------------


@dataclass(frozen=True)
class CorrespondenceRow:
    hbar: float
    t_final: float
    dx_mean: float
    dp_mean: float
    dx2: float
    dp2: float
    quantum: dict = field(compare=False, repr=False, default_factory=dict)
    classical: dict = field(compare=False, repr=False, default_factory=dict)
    fock_dim: int = 0

    CSV_FIELDS = ("hbar", "t_final", "dx_mean", "dp_mean", "dx2", "dp2")


def dual_grid(P: PhaseSpaceDistribution, nodes: int | None = None, pad: float = 1.25) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric (lam, mu) axes whose period covers `pad` times the phase-space box."""
    n = nodes or (P.x.size if P.x.size % 2 else P.x.size + 1)
    if n % 2 == 0:
        n += 1
    half_x = max(abs(P.x[0]), abs(P.x[-1]))
    half_p = max(abs(P.p[0]), abs(P.p[-1]))
    dl = 2 * math.pi / (2 * half_x * pad)
    dm = 2 * math.pi / (2 * half_p * pad)
    return dl * np.arange(-(n // 2), n // 2 + 1), dm * np.arange(-(n // 2), n // 2 + 1)


def classical_endpoint(P0: PhaseSpaceDistribution, H, t_final: float, dt: float = 0.01,
                       lam_grid: tuple[np.ndarray, np.ndarray] | None = None) -> tuple[CharacteristicFunction, dict]:
    lam, mu = lam_grid or dual_grid(P0)
    f0 = CharacteristicFunction.from_distribution(P0, lam, mu)
    steps = stable_steps(f0, H, t_final, dt)
    f1 = evolve_characteristic(f0, H, "classical", None, t_final / steps if steps else 0.0, steps)
    # the transform is periodic, so weight leaving the box would silently wrap around
    f = np.abs(f1.to_function(P0.x, P0.p))
    edge = max(f[0].max(), f[-1].max(), f[:, 0].max(), f[:, -1].max())
    if edge > EDGE_TOL * f.max():
        raise OutsideGrid(f"evolved density reaches the grid edge ({edge / f.max():.1e} of its peak); widen the box")
    return f1, f1.moments(P0.x, P0.p)


def correspondence_report(P0: PhaseSpaceDistribution, H, hbar_schedule: Sequence[float], t_final: float,
                          dt: float = 0.01, fock_margin: int = 0,
                          lam_grid: tuple[np.ndarray, np.ndarray] | None = None) -> list[CorrespondenceRow]:
    """Moment deviations between quantum and classical evolution of P0 for each hbar.

    Quantum: P-construct rho(0), quantize H, evolve exactly. Classical: evolve
    the characteristic function of P0 with K_C and transform back. Rows carry
    the absolute differences of <x>, <p>, <x^2>, <p^2>; the quantum side uses
    the moments of its P function so that H = 0 gives zero deviation.
    """
    hbar_schedule = [float(h) for h in hbar_schedule]
    if any(h <= 0 for h in hbar_schedule) or any(b >= a for a, b in zip(hbar_schedule, hbar_schedule[1:])):
        raise ValidationError("hbar schedule must be positive and strictly decreasing")
    _, cm = classical_endpoint(P0, H, t_final, dt, lam_grid)
    rows = []
    for h in hbar_schedule:
        cfg = auto_config(h, P0, margin=fock_margin)
        rho0 = p_construct(P0, cfg)
        rho_t = von_neumann_evolve(rho0, hamiltonian_operator(H, cfg), h, t_final, 1)
        qm = quantum_moments(rho_t, h, ordering="normal")
        rows.append(
            CorrespondenceRow(
                h, t_final,
                abs(qm["x"] - cm["x"]), abs(qm["p"] - cm["p"]),
                abs(qm["x2"] - cm["x2"]), abs(qm["p2"] - cm["p2"]),
                qm, cm, cfg.dim,
            )
        )
    return rows
