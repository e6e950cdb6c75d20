"""Broadcasting machines: source x blank target x machine, one joint unitary.

The three registers are ordered (source, target, machine). A unitary
broadcasts a family of source states when both the source and the target
marginal of the output reproduce every input state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .entropy import quantum_relative_entropy
from .errors import BadDimension, BadParamLength, DimensionMismatch, InfiniteEntropy, ValidationError
from .quantum_state import (
    DensityMatrix,
    as_density,
    basis_state,
    partial_trace,
    tensor_all,
)

SOURCE, TARGET, MACHINE = 0, 1, 2


@dataclass(frozen=True)
class BroadcastTask:
    sources: tuple[DensityMatrix, ...]
    target_init: DensityMatrix
    machine_init: DensityMatrix

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(as_density(s) for s in self.sources))
        if not self.sources:
            raise ValidationError("a broadcast task needs at least one source state")
        d_s = self.sources[0].dim
        if any(s.dim != d_s for s in self.sources):
            raise DimensionMismatch("all source states must share one dimension")
        if self.target_init.dim != d_s:
            raise DimensionMismatch(f"target dimension {self.target_init.dim} cannot hold a copy of a {d_s}-level source")

    @classmethod
    def with_defaults(cls, sources: Sequence, machine_dim: int | None = None) -> "BroadcastTask":
        """Ground-state target and machine; machine dimension defaults to d_s**2."""
        sources = tuple(as_density(s) for s in sources)
        d_s = sources[0].dim
        d_m = d_s**2 if machine_dim is None else machine_dim
        return cls(sources, basis_state(0, d_s), basis_state(0, d_m))

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.sources[0].dim, self.target_init.dim, self.machine_init.dim)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    def input_state(self, index: int) -> DensityMatrix:
        return tensor_all([self.sources[index], self.target_init, self.machine_init])


@dataclass(frozen=True)
class UnitaryParams:
    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float).ravel()
        if not np.all(np.isfinite(theta)):
            raise ValidationError("unitary parameters must be finite")
        object.__setattr__(self, "theta", theta)


@dataclass(frozen=True)
class BroadcastCertificate:
    residuals: tuple[float, ...]
    entropy_in: float
    entropy_out: float
    marginal_entropies: tuple[float, float]
    gap: float

    @property
    def residual(self) -> float:
        return max(self.residuals)

    def to_record(self, **extra) -> dict:
        def enc(v):
            return "inf" if math.isinf(v) else v

        rec = {
            "residual": self.residual,
            "entropy_in": enc(self.entropy_in),
            "entropy_out": enc(self.entropy_out),
            "gap": enc(self.gap),
        }
        rec.update(extra)
        return rec


def hermitian_from_params(theta: np.ndarray, dim: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.size != dim * dim:
        raise BadParamLength(f"need {dim * dim} parameters for dimension {dim}, got {theta.size}")
    h = np.diag(theta[:dim]).astype(complex)
    iu = np.triu_indices(dim, k=1)
    rest = theta[dim:]
    h[iu] = rest[0::2] + 1j * rest[1::2]
    h[(iu[1], iu[0])] = rest[0::2] - 1j * rest[1::2]
    return h


def unitary_from_params(p, dim: int) -> np.ndarray:
    """exp(iH) for the Hermitian H spelled out by the parameter vector."""
    theta = p.theta if isinstance(p, UnitaryParams) else p
    w, v = np.linalg.eigh(hermitian_from_params(theta, dim))
    return (v * np.exp(1j * w)) @ v.conj().T


def classical_copier(d: int, machine_dim: int = 1) -> np.ndarray:
    """Controlled shift |i>|j> -> |i>|j + i mod d> on (source, target), identity on the machine."""
    if d < 2 or machine_dim < 1:
        raise BadDimension(f"copier needs d >= 2 and machine dimension >= 1, got {d}, {machine_dim}")
    perm = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            perm[i * d + (j + i) % d, i * d + j] = 1.0
    return np.kron(perm, np.eye(machine_dim))


def swap_source_target(d: int, machine_dim: int = 1) -> np.ndarray:
    perm = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            perm[j * d + i, i * d + j] = 1.0
    return np.kron(perm, np.eye(machine_dim))


def _check_unitary_dim(task: BroadcastTask, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.shape != (task.total_dim, task.total_dim):
        raise DimensionMismatch(f"unitary is {u.shape}, task needs {task.total_dim}x{task.total_dim}")
    return u


def apply_broadcast(task: BroadcastTask, source_index: int, u) -> tuple[DensityMatrix, DensityMatrix, DensityMatrix]:
    """Output state and its source / target marginals."""
    u = _check_unitary_dim(task, u)
    rho_in = task.input_state(source_index)
    out = u @ rho_in.data @ u.conj().T
    rho_out = DensityMatrix(0.5 * (out + out.conj().T), task.dims)
    return rho_out, partial_trace(rho_out, [SOURCE]), partial_trace(rho_out, [TARGET])


class _ResidualEvaluator:
    """Fast broadcast residual for repeated calls inside the optimizer."""

    def __init__(self, task: BroadcastTask):
        self.task = task
        self.dim = task.total_dim
        self.dims = task.dims
        self.inputs = np.stack([task.input_state(i).data for i in range(len(task.sources))])
        self.sources = np.stack([s.data for s in task.sources])

    def marginals(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        out = u @ self.inputs @ u.conj().T
        d_s, d_t, d_m = self.dims
        t = out.reshape(-1, d_s, d_t, d_m, d_s, d_t, d_m)
        ms = np.einsum("zitmjtm->zij", t)
        mt = np.einsum("zsimsjm->zij", t)
        return ms, mt

    def residuals(self, u: np.ndarray) -> np.ndarray:
        ms, mt = self.marginals(u)
        diffs = np.concatenate([ms - self.sources, mt - self.sources])
        diffs = 0.5 * (diffs + np.conj(np.swapaxes(diffs, 1, 2)))
        return 0.5 * np.abs(np.linalg.eigvalsh(diffs)).sum(axis=1)

    def __call__(self, theta: np.ndarray) -> float:
        return float(np.max(self.residuals(unitary_from_params(theta, self.dim))))


def broadcast_residual(task: BroadcastTask, u) -> float:
    """Worst trace distance between an input state and either output marginal."""
    u = _check_unitary_dim(task, u)
    return float(np.max(_ResidualEvaluator(task).residuals(u)))


def marginal_residuals(task: BroadcastTask, u) -> tuple[float, ...]:
    """Per (source, marginal) trace distances, ordered source-marginals then target-marginals."""
    u = _check_unitary_dim(task, u)
    return tuple(float(r) for r in _ResidualEvaluator(task).residuals(u))


@dataclass(frozen=True)
class OptimizerConfig:
    seed: int = 0
    restarts: int = 20
    max_evals: int = 60_000
    polish_fraction: float = 0.25
    initial_step: float = 0.5
    min_step: float = 1e-12
    target: float = 1e-9
    init_scale: float = math.pi


@dataclass
class OptimizeResult:
    best: UnitaryParams
    residual: float
    residual_history: list[float]
    restart_residuals: list[float]
    best_restart: int = 0
    # (restart, residual, theta) at the end of every search stage
    trajectory: list[tuple[int, float, np.ndarray]] = field(repr=False, default_factory=list)


def rotating_pattern_search(f, x0: np.ndarray, step: float, min_step: float, max_evals: int,
                            stop=None, on_stage=None):
    """Derivative-free search along an adaptively rotated set of directions.

    Every direction carries its own step: a successful poll moves the point
    and triples the step, a failed poll halves it and flips its sign. Once
    every direction has seen both a success and a failure, the directions are
    re-orthogonalized so the first one points along the accumulated progress
    (Rosenbrock's rotation). The search ends when all steps fall below
    `min_step`, the evaluation budget is spent, or ``stop(fx)`` is true.
    """
    n = x0.size
    x = np.array(x0, dtype=float)
    fx = f(x)
    evals = 1
    dirs = np.eye(n)
    steps = np.full(n, float(step))

    def active():
        return evals < max_evals and np.max(np.abs(steps)) >= min_step and not (stop and stop(fx))

    while active():
        moved = np.zeros(n)
        succ = np.zeros(n, dtype=bool)
        fail = np.zeros(n, dtype=bool)
        while active() and not np.all(succ & fail):
            for i in range(n):
                trial = x + steps[i] * dirs[:, i]
                ft = f(trial)
                evals += 1
                if ft < fx:
                    x, fx = trial, ft
                    moved[i] += steps[i]
                    steps[i] *= 3.0
                    succ[i] = True
                else:
                    steps[i] *= -0.5
                    fail[i] = True
        if on_stage is not None:
            on_stage(x, fx)
        a = np.cumsum((dirs * moved)[:, ::-1], axis=1)[:, ::-1]
        q, r = np.linalg.qr(a)
        diag = np.abs(np.diag(r))
        if np.all(diag > 1e-14 * max(1.0, diag.max())):
            dirs = q * np.sign(np.diag(r))
    return x, fx, evals


class _SurrogateEvaluator(_ResidualEvaluator):
    """Sum of squared Frobenius deviations of all marginals; smooth, same zero set as the residual."""

    def __call__(self, theta: np.ndarray) -> float:
        ms, mt = self.marginals(unitary_from_params(theta, self.dim))
        return float(np.sum(np.abs(ms - self.sources) ** 2) + np.sum(np.abs(mt - self.sources) ** 2))


def optimize_broadcaster(task: BroadcastTask, cfg: OptimizerConfig = OptimizerConfig()) -> OptimizeResult:
    """Multi-restart derivative-free search for a broadcasting unitary.

    Each restart first descends the smooth surrogate, then spends
    ``polish_fraction`` of its budget directly on the (non-smooth) residual.
    Restart ``k`` seeds from child ``k`` of ``SeedSequence(cfg.seed)``, so
    restarts are independent and the whole run is fixed by the seed. The best
    restart is the one with the lowest residual; ties go to the lower index.
    """
    residual = _ResidualEvaluator(task)
    surrogate = _SurrogateEvaluator(task)
    n = task.total_dim**2
    polish = int(cfg.max_evals * cfg.polish_fraction)
    history: list[float] = []
    trajectory: list[tuple[int, float, np.ndarray]] = []
    finals: list[float] = []
    params: list[np.ndarray] = []
    best_so_far = math.inf

    for k, child in enumerate(np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)):
        rng = np.random.default_rng(child)
        x0 = rng.uniform(-cfg.init_scale, cfg.init_scale, n)
        best = [math.inf, x0]

        def on_stage(x, _fx, k=k, best=best):
            nonlocal best_so_far
            r = residual(x)
            trajectory.append((k, r, x.copy()))
            if r < best[0]:
                best[0], best[1] = r, x.copy()
            best_so_far = min(best_so_far, r)
            history.append(best_so_far)

        def done(_fx, best=best):
            return best[0] <= cfg.target

        rotating_pattern_search(surrogate, x0, cfg.initial_step, cfg.min_step, cfg.max_evals - polish,
                                stop=done, on_stage=on_stage)
        if polish > 0 and best[0] > cfg.target:
            rotating_pattern_search(residual, best[1], cfg.initial_step * 1e-2, cfg.min_step, polish,
                                    stop=lambda fx: fx <= cfg.target, on_stage=on_stage)
        finals.append(best[0])
        params.append(best[1])

    k = int(np.argmin(finals))
    return OptimizeResult(UnitaryParams(params[k]), finals[k], history, finals, k, trajectory)


def entropy_gap_certificate(task: BroadcastTask, u) -> BroadcastCertificate:
    """Compare S(sigma1|sigma2) with the relative entropies of both output marginals.

    Unitary invariance pins the joint output at S(sigma1|sigma2); monotonicity
    caps each marginal by it. A perfect broadcaster would need both marginals
    to reach the cap, which the strict inequality for non-commuting pairs forbids.
    """
    if len(task.sources) != 2:
        raise ValidationError("an entropy certificate compares exactly two sources")
    s1, s2 = task.sources
    entropy_in = quantum_relative_entropy(s1, s2)
    if math.isinf(entropy_in):
        raise InfiniteEntropy("S(sigma1|sigma2) is infinite; reduce with mixture_reduction first")
    u = _check_unitary_dim(task, u)
    _, ms1, mt1 = apply_broadcast(task, 0, u)
    _, ms2, mt2 = apply_broadcast(task, 1, u)
    es = quantum_relative_entropy(ms1, ms2)
    et = quantum_relative_entropy(mt1, mt2)
    entropy_out = max(es, et)
    return BroadcastCertificate(
        residuals=marginal_residuals(task, u),
        entropy_in=entropy_in,
        entropy_out=entropy_out,
        marginal_entropies=(es, et),
        gap=entropy_in - entropy_out,
    )


def output_relative_entropy(task: BroadcastTask, u) -> float:
    """S(rho1_out | rho2_out) of the full three-register outputs."""
    r1, _, _ = apply_broadcast(task, 0, u)
    r2, _, _ = apply_broadcast(task, 1, u)
    return quantum_relative_entropy(r1, r2)


def mixture_reduction(s1, s2, lam: float) -> tuple[DensityMatrix, float]:
    """Mixture lam*s1 + (1-lam)*s2 and the (always finite) S(s1|mix).

    A machine broadcasting s1 and s2 also broadcasts their mixture, which moves
    an infinite-entropy pair into the finite regime.
    """
    if not 0.0 < lam < 1.0:
        raise ValidationError(f"mixing weight must lie strictly inside (0, 1), got {lam}")
    s1 = as_density(s1)
    s2 = as_density(s2)
    mix = DensityMatrix(lam * s1.data + (1.0 - lam) * s2.data, s1.dims)
    return mix, quantum_relative_entropy(s1, mix)


def reduced_task(task: BroadcastTask, lam: float = 0.5) -> BroadcastTask:
    """Replace the second source by its mixture with the first when S(s1|s2) is infinite."""
    s1, s2 = task.sources
    if math.isinf(quantum_relative_entropy(s1, s2)):
        mix, _ = mixture_reduction(s1, s2, lam)
        return BroadcastTask((s1, mix), task.target_init, task.machine_init)
    return task


@dataclass(frozen=True)
class ProbeSummary:
    floor: float
    restart_residuals: tuple[float, ...]
    window: float
    gap_tol: float
    in_window: int
    min_gap_in_window: float
    violations: int

    @property
    def no_broadcast(self) -> bool:
        return self.violations == 0


def probe_no_broadcast(task: BroadcastTask, cfg: OptimizerConfig, lam: float = 0.5, window: float = 0.05,
                       gap_tol: float = 1e-3) -> tuple[OptimizeResult, ProbeSummary]:
    """Optimize, then certify every recorded unitary with residual <= `window`.

    A violation is a unitary that is both nearly broadcasting (residual within
    the window) and nearly entropy-preserving (gap <= gap_tol). Certificates
    are taken on :func:`reduced_task` so infinite-entropy pairs are covered.
    """
    result = optimize_broadcaster(task, cfg)
    cert_task = reduced_task(task, lam)
    dim = task.total_dim
    gaps = []
    for _, r, theta in result.trajectory:
        if r <= window:
            gaps.append(entropy_gap_certificate(cert_task, unitary_from_params(theta, dim)).gap)
    violations = sum(1 for g in gaps if g <= gap_tol)
    summary = ProbeSummary(
        floor=result.residual,
        restart_residuals=tuple(result.restart_residuals),
        window=window,
        gap_tol=gap_tol,
        in_window=len(gaps),
        min_gap_in_window=min(gaps) if gaps else math.inf,
        violations=violations,
    )
    return result, summary
