"""Stochastic maximization of expected information gain.

Two routes are provided.  Robbins-Monro ascends along a fresh unbiased
gradient estimate each iteration with the harmonic gain a_k = beta / k,
projecting every iterate onto the design box.  Sample average
approximation freezes one realization of all sampling noise, maximizes
the resulting deterministic objective with BFGS (backtracking line
search enforcing the Armijo condition only), and replicates the whole
procedure to estimate an optimality gap: the replicate-mean optimum is a
stochastic upper bound for the maximal objective, and an independent
larger-sample re-evaluation at each candidate is a lower bound.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .bounds import Bounds
from .eig import (EIGEstimator, draw_sample_set, eig_gradient, eig_value,
                  eig_value_terms)
from .rng import derived_seed, generator

_TAG_SAA_FROZEN = 11
_TAG_SAA_PRIME = 12
_TAG_SAA_X0 = 13
_TAG_RM_ITER = 21
_TAG_RM_X0 = 22


class Termination(enum.Enum):
    GRADIENT_STALLED = "gradient_stalled"
    STEP_STALLED = "step_stalled"
    POSITION_STALLED = "position_stalled"
    MAX_ITERS = "max_iters"
    LINE_SEARCH_FAILED = "line_search_failed"


@dataclass(frozen=True)
class GainSchedule:
    """Harmonic gain a_k = beta / k (divergent sum, summable squares)."""

    beta: float
    form: str = "harmonic"

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("gain scale beta must be positive")
        if self.form != "harmonic":
            raise ValueError(f"unsupported gain form {self.form!r}")

    def step(self, k: int) -> float:
        if k < 1:
            raise ValueError("iteration index starts at 1")
        return self.beta / k


@dataclass(frozen=True)
class RMOptions:
    bounds: Bounds
    gain: GainSchedule = GainSchedule(beta=1.0)
    max_iters: int = 50
    stall_tol: float = 1e-4
    stall_patience: int = 5

    def __post_init__(self):
        if self.max_iters < 1 or self.stall_patience < 1:
            raise ValueError("max_iters and stall_patience must be at least 1")
        if self.stall_tol <= 0:
            raise ValueError("stall_tol must be positive")


@dataclass(frozen=True)
class BFGSOptions:
    bounds: Bounds
    grad_tol: float = 1e-5
    max_iters: int = 100
    initial_step: float = 1.0
    contraction: float = 0.5
    armijo_c: float = 1e-4
    min_step: float = 1e-12
    position_tol: float = 1e-10

    def __post_init__(self):
        if not (0.0 < self.contraction < 1.0):
            raise ValueError("contraction factor must lie in (0, 1)")
        if not (0.0 < self.armijo_c < 1.0):
            raise ValueError("Armijo constant must lie in (0, 1)")
        if self.grad_tol <= 0 or self.min_step <= 0 or self.max_iters < 1:
            raise ValueError("bad BFGS options")


@dataclass
class OptimizationTrace:
    iterates: np.ndarray          # [n_iterations + 1, n_d]
    step_sizes: np.ndarray        # gain a_k for RM, accepted alpha for BFGS
    termination: Termination
    n_objective_evals: int
    n_gradient_evals: int
    wall_time: float

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def n_iterations(self) -> int:
        return self.iterates.shape[0] - 1


@dataclass(frozen=True)
class GapEstimate:
    """Maximization-oriented optimality gap: upper - lower >= 0 on average."""

    upper: float      # replicate mean of frozen-sample optima
    lower: float      # larger-sample re-evaluation at the candidate
    gap: float
    variance: float

    def __post_init__(self):
        if self.gap != self.upper - self.lower:
            raise ValueError("gap must equal upper - lower exactly")


@dataclass
class RMBatch:
    traces: list
    failures: list = field(default_factory=list)  # (replicate, message)


@dataclass
class SAABatch:
    traces: list
    gaps: list
    optima: np.ndarray            # frozen-sample objective at each final design
    failures: list = field(default_factory=list)


def robbins_monro(grad_fn, x0, opts: RMOptions) -> OptimizationTrace:
    """Projected stochastic ascent x_{k+1} = P(x_k + a_k g_hat(x_k)).

    `grad_fn(x, k)` must return an unbiased gradient estimate built from
    iteration-fresh randomness.  Stops when the iterate moves less than
    `stall_tol` for `stall_patience` consecutive iterations, or at
    `max_iters`.
    """
    t_start = time.perf_counter()
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    if not opts.bounds.contains(x):
        raise ValueError(f"starting point {x} outside bounds")
    iterates = [x]
    steps = []
    stall = 0
    termination = Termination.MAX_ITERS
    n_grad = 0
    for k in range(1, opts.max_iters + 1):
        g = np.asarray(grad_fn(x, k), dtype=float)
        n_grad += 1
        if not np.isfinite(g).all():
            raise ValueError(
                f"non-finite gradient estimate at iteration {k}, x={x}")
        a = opts.gain.step(k)
        x_new = opts.bounds.project(x + a * g)
        steps.append(a)
        iterates.append(x_new)
        stall = stall + 1 if np.linalg.norm(x_new - x) < opts.stall_tol else 0
        x = x_new
        if stall >= opts.stall_patience:
            termination = Termination.POSITION_STALLED
            break
    return OptimizationTrace(np.array(iterates), np.array(steps), termination,
                             n_objective_evals=0, n_gradient_evals=n_grad,
                             wall_time=time.perf_counter() - t_start)


def bfgs_maximize(value_and_grad, x0, opts: BFGSOptions,
                  on_update=None) -> OptimizationTrace:
    """Projected quasi-Newton ascent for a deterministic objective.

    Minimizes the negated objective: inverse-Hessian approximation starts
    at the identity, search directions are -H grad, and a backtracking
    line search accepts the first step satisfying the Armijo condition
    (measured along the actual, projected displacement).  The curvature
    update is skipped whenever s'u fails a relative positivity check, so
    H stays symmetric positive definite.  `on_update(k, x, H)` is called
    after each accepted curvature update.
    """
    t_start = time.perf_counter()
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    if not opts.bounds.contains(x):
        raise ValueError(f"starting point {x} outside bounds")
    n = x.size

    evals = [0, 0]

    def fg(pt):
        v, g = value_and_grad(pt)
        evals[0] += 1
        evals[1] += 1
        v = float(v)
        g = np.asarray(g, dtype=float)
        if not (np.isfinite(v) and np.isfinite(g).all()):
            raise ValueError(f"non-finite objective or gradient at {pt}")
        return -v, -g  # minimize the negated objective

    f, g = fg(x)
    iterates = [x]
    steps = []
    H = np.eye(n)
    termination = Termination.MAX_ITERS
    for k in range(opts.max_iters):
        if np.linalg.norm(g) < opts.grad_tol:
            termination = Termination.GRADIENT_STALLED
            break
        p = -H @ g
        if p @ g >= 0.0:   # lost descent property (can follow a projection)
            H = np.eye(n)
            p = -g
        alpha = opts.initial_step
        accepted = None
        while True:
            x_c = opts.bounds.project(x + alpha * p)
            f_c, g_c = fg(x_c)
            if f_c <= f + opts.armijo_c * (g @ (x_c - x)):
                accepted = (x_c, f_c, g_c)
                break
            alpha *= opts.contraction
            if alpha < opts.min_step:
                break
        if accepted is None:
            termination = Termination.LINE_SEARCH_FAILED
            break
        x_new, f_new, g_new = accepted
        steps.append(alpha)
        iterates.append(x_new)
        s = x_new - x
        u = g_new - g
        x, f, g = x_new, f_new, g_new
        if np.linalg.norm(s) < opts.position_tol:
            termination = (Termination.STEP_STALLED if alpha <= opts.min_step
                           else Termination.POSITION_STALLED)
            break
        su = s @ u
        if su > 1e-12 * np.linalg.norm(s) * np.linalg.norm(u):
            rho = 1.0 / su
            V = np.eye(n) - rho * np.outer(s, u)
            H = V @ H @ V.T + rho * np.outer(s, s)
            if on_update is not None:
                on_update(k, x, H)
    return OptimizationTrace(np.array(iterates), np.array(steps), termination,
                             n_objective_evals=evals[0],
                             n_gradient_evals=evals[1],
                             wall_time=time.perf_counter() - t_start)


# ---------------------------------------------------------------------------
# replicated drivers for the information-gain objective


def _initial_point(x0_rule, rng, bounds: Bounds) -> np.ndarray:
    if x0_rule is None:
        return bounds.sample(rng)
    return np.atleast_1d(np.asarray(x0_rule(rng), dtype=float))


def rm_optimize(estimator: EIGEstimator, T: int, x0_rule, opts: RMOptions,
                seed: int) -> RMBatch:
    """T independent Robbins-Monro runs with per-iteration fresh samples.

    Every iteration of run t draws a new sample set from the stream
    (seed, t, k), so the gradient estimates are independent across
    iterations and runs; starting points default to uniform over the
    bounds.
    """
    if T < 1:
        raise ValueError("need at least one replicate")
    batch = RMBatch(traces=[])
    for t in range(1, T + 1):
        x0 = _initial_point(x0_rule, generator(seed, _TAG_RM_X0, t), opts.bounds)

        def grad(x, k, _t=t):
            samples = draw_sample_set(
                estimator, derived_seed(seed, _TAG_RM_ITER, _t, k))
            return eig_gradient(estimator, x, samples).gradient

        try:
            batch.traces.append(robbins_monro(grad, x0, opts))
        except Exception as exc:  # noqa: BLE001 - record and continue
            batch.failures.append((t, str(exc)))
    return batch


def saa_optimize(estimator: EIGEstimator, T: int, N_prime: int, x0_rule,
                 opts: BFGSOptions, seed: int) -> SAABatch:
    """T replicated frozen-sample maximizations with gap estimates.

    Each replicate freezes its own sample set, maximizes the resulting
    deterministic objective by BFGS, then re-evaluates the final design
    on an independent set with N_prime outer samples (same M).  The mean
    of the replicate optima is the shared stochastic upper bound; each
    re-evaluation is a lower bound; gap variances combine the Monte Carlo
    standard errors of both terms.
    """
    if T < 1:
        raise ValueError("need at least one replicate")
    if N_prime <= estimator.N:
        raise ValueError("N_prime must exceed the optimization sample size N")
    re_estimator = estimator.with_sizes(N=N_prime)
    traces = []
    optima = []
    lowers = []
    lower_vars = []
    failures = []
    for t in range(1, T + 1):
        try:
            frozen = draw_sample_set(
                estimator, derived_seed(seed, _TAG_SAA_FROZEN, t))
            x0 = _initial_point(x0_rule, generator(seed, _TAG_SAA_X0, t),
                                opts.bounds)

            def objective(x, _frozen=frozen):
                out = eig_gradient(estimator, x, _frozen)
                return out.value, out.gradient

            trace = bfgs_maximize(objective, x0, opts)
            x_hat = trace.final
            optima.append(eig_value(estimator, x_hat, frozen))
            prime = draw_sample_set(
                re_estimator, derived_seed(seed, _TAG_SAA_PRIME, t))
            terms = eig_value_terms(re_estimator, x_hat, prime)
            lowers.append(float(terms.mean()))
            lower_vars.append(float(terms.var(ddof=1) / terms.size)
                              if terms.size > 1 else 0.0)
            traces.append(trace)
        except Exception as exc:  # noqa: BLE001 - record and continue
            failures.append((t, str(exc)))
    optima = np.array(optima)
    gaps = []
    if optima.size:
        upper = float(optima.mean())
        var_upper = float(optima.var(ddof=1) / optima.size) if optima.size > 1 else 0.0
        for lo, lo_var in zip(lowers, lower_vars):
            gaps.append(GapEstimate(upper=upper, lower=lo, gap=upper - lo,
                                    variance=var_upper + lo_var))
    return SAABatch(traces=traces, gaps=gaps, optima=optima, failures=failures)
