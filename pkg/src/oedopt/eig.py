"""Nested Monte Carlo estimation of expected information gain with
pathwise (perturbation-analysis) gradients.

The estimator averages, over N outer draws from the prior, the log
likelihood of synthetic data at the generating parameter minus the log
of an M-sample prior average of the likelihood (the evidence estimate):

    U_hat = (1/N) sum_i { ln f(y_i | theta_i, d)
                          - ln (1/M) sum_j f(y_i | theta_ij, d) },

with y_i = G(theta_i, d) + C(theta_i, d) z_i and z_i standard normal, so
that all randomness (theta draws and z) is independent of the design.
Values are reported in nats.  The inner average runs in the log domain
through a shifted log-mean-exp.

The sampling rule reuses the generating draw as the first inner sample,
theta_i1 = theta_i, with the remaining M - 1 drawn fresh from the prior.
The evidence estimate then never falls below f(y_i | theta_i) / M, which
makes U_hat a stochastic lower bound: negatively biased at finite M
(and capped at ln M), with the bias shrinking like 1/M.  Estimates
therefore increase toward the true value as M grows.

Freezing one sample set turns U_hat into a smooth deterministic function
of d whose exact gradient is computed term by term: each per-output
Gaussian factor has noise scale alpha_c + beta_c |G_c|, and its log
derivative with respect to a design component collects the scale term,
the residual term, and the variance term (with sign(G_c) from
differentiating |G_c|, taking sign(0) = 0).  Redrawing the set at every
query instead yields an unbiased stochastic gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bounds import Bounds
from .models import ForwardModel
from .rng import generator

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)
_OUTER_BLOCK = 64  # fixed so that summation order never depends on call mode


@dataclass(frozen=True)
class NoiseModel:
    """Per-output Gaussian noise scale alpha_c + beta_c |G_c|."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if alpha.shape != beta.shape or alpha.ndim != 1:
            raise ValueError("alpha and beta must be 1-D arrays of equal length")
        if (alpha <= 0).any():
            raise ValueError("noise floor alpha must be strictly positive")
        if (beta < 0).any():
            raise ValueError("proportional noise beta must be non-negative")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def scaled(cls, n_y: int, alpha: float, beta: float) -> "NoiseModel":
        return cls(np.full(n_y, float(alpha)), np.full(n_y, float(beta)))

    @property
    def n_y(self) -> int:
        return self.alpha.size

    def sigma(self, G) -> np.ndarray:
        return self.alpha + self.beta * np.abs(G)


class PriorSpec:
    """Independent per-parameter marginals: uniform boxes or Gaussians."""

    def __init__(self, marginals):
        marginals = [tuple(m) for m in marginals]
        for kind, a, b in marginals:
            if kind == "uniform":
                if not (np.isfinite(a) and np.isfinite(b) and a < b):
                    raise ValueError(f"bad uniform bounds ({a}, {b})")
            elif kind == "normal":
                if not (np.isfinite(a) and b > 0):
                    raise ValueError(f"bad normal parameters ({a}, {b})")
            else:
                raise ValueError(f"unknown marginal kind {kind!r}")
        self.marginals = marginals

    @classmethod
    def uniform(cls, pairs) -> "PriorSpec":
        return cls([("uniform", float(lo), float(hi)) for lo, hi in pairs])

    @classmethod
    def standard_normal(cls, n: int) -> "PriorSpec":
        return cls([("normal", 0.0, 1.0)] * n)

    @property
    def n_theta(self) -> int:
        return len(self.marginals)

    def sample(self, rng: np.random.Generator, shape) -> np.ndarray:
        shape = tuple(shape)
        out = np.empty(shape + (self.n_theta,))
        for j, (kind, a, b) in enumerate(self.marginals):
            if kind == "uniform":
                out[..., j] = a + (b - a) * rng.random(shape)
            else:
                out[..., j] = a + b * rng.standard_normal(shape)
        return out

    def support_box(self) -> Bounds:
        pairs = []
        for kind, a, b in self.marginals:
            if kind != "uniform":
                raise ValueError("support box defined only for uniform priors")
            pairs.append((a, b))
        return Bounds.from_pairs(pairs)


@dataclass(frozen=True)
class EIGSampleSet:
    """Frozen realizations parameterizing one deterministic objective."""

    thetas_outer: np.ndarray   # [N, n_theta]
    thetas_inner: np.ndarray   # [N, M, n_theta]
    z: np.ndarray              # [N, n_y]
    seed: int

    def __post_init__(self):
        to = np.asarray(self.thetas_outer, dtype=float)
        ti = np.asarray(self.thetas_inner, dtype=float)
        z = np.asarray(self.z, dtype=float)
        if to.ndim != 2 or ti.ndim != 3 or z.ndim != 2:
            raise ValueError("sample arrays have wrong ranks")
        if ti.shape[0] != to.shape[0] or ti.shape[2] != to.shape[1]:
            raise ValueError("inner samples inconsistent with outer samples")
        if z.shape[0] != to.shape[0]:
            raise ValueError("noise rows must match outer sample count")
        object.__setattr__(self, "thetas_outer", to)
        object.__setattr__(self, "thetas_inner", ti)
        object.__setattr__(self, "z", z)

    @property
    def n_outer(self) -> int:
        return self.thetas_outer.shape[0]

    @property
    def n_inner(self) -> int:
        return self.thetas_inner.shape[1]


@dataclass(frozen=True)
class EIGEstimator:
    """Forward model, noise, prior and sample sizes for one estimator."""

    model: ForwardModel
    noise: NoiseModel
    prior: PriorSpec
    N: int
    M: int
    design_bounds: Bounds

    def __post_init__(self):
        if self.N < 1 or self.M < 1:
            raise ValueError("sample sizes N and M must be at least 1")
        if self.noise.n_y != self.model.n_y:
            raise ValueError("noise dimension must match model outputs")
        if self.prior.n_theta != self.model.n_theta:
            raise ValueError("prior dimension must match model parameters")
        if self.design_bounds.n_dim != self.model.n_d:
            raise ValueError("design bounds dimension must match the model")

    def with_sizes(self, N: int | None = None, M: int | None = None) -> "EIGEstimator":
        return EIGEstimator(self.model, self.noise, self.prior,
                            self.N if N is None else int(N),
                            self.M if M is None else int(M),
                            self.design_bounds)


@dataclass(frozen=True)
class EIGValueAndGrad:
    value: float
    gradient: np.ndarray
    n_model_evals: int


def draw_sample_set(estimator: EIGEstimator, seed: int) -> EIGSampleSet:
    """Outer thetas, inner thetas and outer noise, deterministic in `seed`.

    The first inner sample of row i is the outer draw theta_i itself;
    the other M - 1 come fresh from the prior (see the module docstring
    for the bias behavior this induces).
    """
    rng = generator(seed)
    N, M = estimator.N, estimator.M
    thetas_outer = estimator.prior.sample(rng, (N,))
    thetas_inner = np.empty((N, M, estimator.prior.n_theta))
    thetas_inner[:, 0, :] = thetas_outer
    if M > 1:
        thetas_inner[:, 1:, :] = estimator.prior.sample(rng, (N, M - 1))
    z = rng.standard_normal((N, estimator.model.n_y))
    return EIGSampleSet(thetas_outer, thetas_inner, z, seed=int(seed))


def log_likelihood(y, G, noise: NoiseModel) -> float:
    """Gaussian log density of data y given model output G."""
    y = np.asarray(y, dtype=float)
    G = np.asarray(G, dtype=float)
    if not (np.isfinite(y).all() and np.isfinite(G).all()):
        raise ValueError("log_likelihood needs finite inputs")
    sigma = noise.sigma(G)
    return float(np.sum(-_LOG_SQRT_2PI - np.log(sigma)
                        - (y - G) ** 2 / (2.0 * sigma**2)))


def _check_query(estimator: EIGEstimator, d, samples: EIGSampleSet) -> np.ndarray:
    d = np.atleast_1d(np.asarray(d, dtype=float))
    if d.size != estimator.design_bounds.n_dim:
        raise ValueError("design vector has wrong dimension")
    if not estimator.design_bounds.contains(d):
        raise ValueError(f"design {d} outside the design bounds")
    if samples.n_outer != estimator.N or samples.n_inner != estimator.M:
        raise ValueError("sample set sized for different (N, M)")
    return d


def _finite_or_raise(arr, what: str):
    if not np.isfinite(arr).all():
        raise ValueError(f"non-finite {what} encountered in the estimator")


def _estimate(estimator: EIGEstimator, d: np.ndarray, samples: EIGSampleSet,
              want_grad: bool):
    """Shared kernel for the value and the gradient of U_hat.

    The value path performs identical floating-point work in both modes,
    so eig_gradient(...).value reproduces eig_value(...) bit for bit.
    Returns (per-outer value terms [N], gradient or None, model evals).
    """
    model, noise = estimator.model, estimator.noise
    N, M = estimator.N, estimator.M
    alpha, beta = noise.alpha, noise.beta
    n_y, n_d = model.n_y, d.size

    G_out = model.value_many(samples.thetas_outer, d)
    _finite_or_raise(G_out, "model output")
    sig_out = alpha + beta * np.abs(G_out)                       # [N, n_y]
    y = G_out + sig_out * samples.z                              # [N, n_y]
    ll_out = np.sum(-_LOG_SQRT_2PI - np.log(sig_out)
                    - (y - G_out) ** 2 / (2.0 * sig_out**2), axis=1)

    n_evals = N + N * M
    if want_grad:
        dG_out = model.design_gradient_many(samples.thetas_outer, d)
        _finite_or_raise(dG_out, "model design gradient")
        s_out = np.sign(G_out)
        # d/d_a ln f(y | theta_i) = sum_c -beta_c s_c dG_c / sigma_c
        outer_grad = np.einsum("ic,ica->ia", -beta * s_out / sig_out, dG_out)
        # d y_c / d_a, from y = G + (alpha + beta |G|) z
        dy = dG_out * (1.0 + beta * s_out * samples.z)[:, :, None]
        n_evals += N + N * M
        grad_terms = np.empty((N, n_d))

    value_terms = np.empty(N)
    for start in range(0, N, _OUTER_BLOCK):
        blk = slice(start, min(start + _OUTER_BLOCK, N))
        b = blk.stop - blk.start
        th_in = samples.thetas_inner[blk].reshape(b * M, -1)
        if want_grad:
            G_in, dG_in = model.value_and_design_gradient_many(th_in, d)
            dG_in = dG_in.reshape(b, M, n_y, n_d)
            _finite_or_raise(dG_in, "model design gradient")
        else:
            G_in = model.value_many(th_in, d)
        _finite_or_raise(G_in, "model output")
        G_in = G_in.reshape(b, M, n_y)
        sig_in = alpha + beta * np.abs(G_in)
        r = G_in - y[blk][:, None, :]                            # [b, M, n_y]
        ll_in = np.sum(-_LOG_SQRT_2PI - np.log(sig_in)
                       - r**2 / (2.0 * sig_in**2), axis=2)       # [b, M]
        shift = ll_in.max(axis=1)
        expd = np.exp(ll_in - shift[:, None])
        denom = expd.sum(axis=1)
        value_terms[blk] = ll_out[blk] - (np.log(denom / M) + shift)

        if want_grad:
            s_in = np.sign(G_in)
            # coefficient of dG_in in d/d_a ln f(y | theta_ij): the scale
            # term, the variance term, and the residual term's G_in part
            A = (-beta * s_in / sig_in
                 + r**2 * beta * s_in / sig_in**3
                 - r / sig_in**2)
            dlnf = np.einsum("imc,imca->ima", A, dG_in)
            dlnf += np.einsum("imc,ica->ima", r / sig_in**2, dy[blk])
            w_soft = expd / denom[:, None]
            inner_grad = np.einsum("im,ima->ia", w_soft, dlnf)
            grad_terms[blk] = outer_grad[blk] - inner_grad

    _finite_or_raise(value_terms, "estimator term")
    gradient = grad_terms.mean(axis=0) if want_grad else None
    if want_grad:
        _finite_or_raise(gradient, "estimator gradient")
    return value_terms, gradient, n_evals


def eig_value(estimator: EIGEstimator, d, samples: EIGSampleSet) -> float:
    """U_hat_{N,M}(d) under one frozen sample set."""
    d = _check_query(estimator, d, samples)
    terms, _, _ = _estimate(estimator, d, samples, want_grad=False)
    return float(terms.mean())


def eig_value_terms(estimator: EIGEstimator, d, samples: EIGSampleSet) -> np.ndarray:
    """Per-outer-sample contributions (their mean is eig_value)."""
    d = _check_query(estimator, d, samples)
    terms, _, _ = _estimate(estimator, d, samples, want_grad=False)
    return terms


def eig_gradient(estimator: EIGEstimator, d, samples: EIGSampleSet) -> EIGValueAndGrad:
    """Value and exact design gradient of U_hat under one sample set."""
    d = _check_query(estimator, d, samples)
    if not estimator.model.has_design_gradient:
        raise ValueError("forward model does not expose a design gradient")
    terms, grad, n_evals = _estimate(estimator, d, samples, want_grad=True)
    return EIGValueAndGrad(value=float(terms.mean()), gradient=grad,
                           n_model_evals=n_evals)


def eig_value_fresh(estimator: EIGEstimator, d, seed: int) -> float:
    """Draw a sample set from `seed` and evaluate U_hat at `d`."""
    return eig_value(estimator, d, draw_sample_set(estimator, seed))
