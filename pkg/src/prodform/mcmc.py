"""Baseline and pseudo-marginal samplers.

Covers random-walk Metropolis, the conjugate Gibbs sampler for the
one-parameter hierarchical Gaussian model, and grouped independence
Metropolis-Hastings (GIMH), whose intractable target density is replaced at
every step by an unbiased estimate built from fresh kernel draws -- either
the plain average of joint weights or its product-form counterpart over all
permuted draws. Accepted estimates are recycled until the next acceptance.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .distributions import InverseGamma, Normal
from .errors import CapExceeded, DegeneracyError, EvaluationError
from .importance import LogWeightModel, log_sum_exp
from .rng import Rng

DENSITY_ESTIMATE_TUPLE_CAP = 10**6


@dataclass(frozen=True)
class HierarchicalModel:
    """Gaussian observations of Gaussian latents with unknown shared variance.

    y_k ~ Normal(x_k, 1), x_k ~ Normal(0, theta), with an inverse-gamma prior
    InverseGamma(alpha/2, alpha*beta/2) on theta.
    """

    y: np.ndarray
    alpha: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "y", np.atleast_1d(np.asarray(self.y, dtype=float)))
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be positive")
        self.y.flags.writeable = False

    @property
    def n_observations(self) -> int:
        return self.y.shape[0]

    @property
    def prior(self) -> InverseGamma:
        return InverseGamma(self.alpha / 2.0, self.alpha * self.beta / 2.0)

    @classmethod
    def simulate(cls, n_observations, theta, rng, alpha=1.0, beta=1.0):
        latents = np.sqrt(theta) * rng.standard_normal(n_observations)
        y = latents + rng.standard_normal(n_observations)
        return cls(y=y, alpha=alpha, beta=beta)

    def log_joint_density(self, theta, x) -> float:
        """Unnormalized log posterior density of (theta, x)."""
        if theta <= 0:
            return -np.inf
        x = np.asarray(x, dtype=float)
        obs = Normal(0.0, 1.0).logpdf(self.y - x)
        lat = -0.5 * (np.log(2.0 * np.pi * theta) + x * x / theta)
        return float(self.prior.logpdf(theta) + np.sum(obs) + np.sum(lat))

    def log_theta_marginal(self, theta):
        """Unnormalized log density of the theta marginal (available here
        because the latents integrate out in closed form)."""
        theta = np.asarray(theta, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = -0.5 * (
                np.log(2.0 * np.pi * (theta[..., None] + 1.0))
                + self.y**2 / (theta[..., None] + 1.0)
            )
            out = self.prior.logpdf(theta) + terms.sum(axis=-1)
        return np.where(theta > 0, out, -np.inf)

    def gimh_weight(self) -> LogWeightModel:
        """Weight of the posterior against the latent kernel Normal(0, theta):
        the prior density times per-dimension observation likelihoods."""

        def block_term(k):
            y_k = float(self.y[k])
            return lambda theta, x: -0.5 * (np.log(2.0 * np.pi) + (y_k - x) ** 2)

        return LogWeightModel.factorized(
            [block_term(k) for k in range(self.n_observations)],
            theta_term=lambda theta: float(self.prior.logpdf(theta)),
        )

    def is_weight(self) -> LogWeightModel:
        """Weight of the posterior against the fully factorized proposal
        prior(theta) x Normal(0,1)^K; the prior cancels."""

        def block_term(k):
            y_k = float(self.y[k])

            def term(theta, x):
                obs = -0.5 * (np.log(2.0 * np.pi) + (y_k - x) ** 2)
                lat = -0.5 * (np.log(2.0 * np.pi * theta) + x * x / theta)
                ref = -0.5 * (np.log(2.0 * np.pi) + x * x)
                return obs + lat - ref

            return term

        return LogWeightModel.factorized(
            [block_term(k) for k in range(self.n_observations)]
        )

    def is2_weight(self) -> LogWeightModel:
        """Weight of the posterior against the conditionally matched proposal
        prior(theta) x Normal(0, theta)^K; depends on x only."""

        def block_term(k):
            y_k = float(self.y[k])
            return lambda theta, x: -0.5 * (np.log(2.0 * np.pi) + (y_k - x) ** 2)

        return LogWeightModel.factorized(
            [block_term(k) for k in range(self.n_observations)]
        )

    def latent_kernel_sampler(self):
        """Sampler for the product kernel Normal(0, theta)^K."""

        def sample(theta, rng, n):
            return np.sqrt(theta) * rng.standard_normal((n, self.n_observations))

        return sample

    def latent_conditional(self, theta: float):
        """Mean vector and shared variance of the latents given (y, theta)."""
        shrink = 1.0 / (1.0 / theta + 1.0)
        return self.y * shrink, shrink

    def variance_conditional(self, x) -> InverseGamma:
        """Full conditional of the variance parameter given the latents."""
        x = np.asarray(x, dtype=float)
        return InverseGamma(
            (self.alpha + self.n_observations) / 2.0,
            (self.alpha * self.beta + float(np.sum(x * x))) / 2.0,
        )

    def default_init_theta(self) -> float:
        prior = self.prior
        return float(prior.mean) if np.isfinite(prior.mean) else float(prior.median)


@dataclass
class ChainTrace:
    """States visited by a chain plus bookkeeping for diagnostics."""

    states: np.ndarray
    accepted: np.ndarray
    burn_in: int
    proposal_scale_history: np.ndarray | None = None
    log_density_estimates: np.ndarray | None = None

    @property
    def n_steps(self) -> int:
        return self.states.shape[0]

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted))

    def post_burn_in(self) -> np.ndarray:
        return self.states[self.burn_in :]


class AdaptiveScale:
    """Stochastic-approximation tuning of a proposal scale toward a target
    acceptance rate; frozen once burn-in ends."""

    def __init__(self, initial_scale: float, target_accept: float):
        self.log_scale = float(np.log(initial_scale))
        self.target = float(target_accept)
        self.step = 0

    @property
    def scale(self) -> float:
        return float(np.exp(self.log_scale))

    def update(self, accept_prob: float):
        self.step += 1
        gain = 1.0 / self.step**0.6
        self.log_scale += gain * (accept_prob - self.target)


def rwm_chain(
    log_target_density,
    init,
    steps: int,
    target_accept: float = 0.25,
    seed: int = 0,
    burn_in_fraction: float = 0.2,
    initial_scale: float = 1.0,
) -> ChainTrace:
    """Gaussian random-walk Metropolis with the proposal scale adapted during
    burn-in toward the target acceptance rate, then frozen."""
    state = np.atleast_1d(np.asarray(init, dtype=float)).copy()
    dim = state.shape[0]
    current = float(log_target_density(state if dim > 1 else float(state[0])))
    if not np.isfinite(current):
        raise ValueError("log target density is not finite at the initial state")
    rng = Rng(seed).split("rwm")
    gen = rng.generator
    burn_in = int(burn_in_fraction * steps)
    adapt = AdaptiveScale(initial_scale, target_accept)

    states = np.empty((steps, dim))
    accepted = np.zeros(steps, dtype=bool)
    scales = np.empty(steps)
    for t in range(steps):
        scale = adapt.scale
        proposal = state + scale * gen.standard_normal(dim)
        proposed = float(log_target_density(proposal if dim > 1 else float(proposal[0])))
        log_alpha = proposed - current
        alpha = min(1.0, np.exp(min(log_alpha, 0.0)))
        if gen.random() < alpha:
            state = proposal
            current = proposed
            accepted[t] = True
        states[t] = state
        scales[t] = scale
        if t < burn_in:
            adapt.update(alpha)
    return ChainTrace(
        states=states if dim > 1 else states[:, 0],
        accepted=accepted,
        burn_in=burn_in,
        proposal_scale_history=scales,
    )


def gibbs_hierarchical(
    model: HierarchicalModel,
    steps: int,
    seed: int = 0,
    init_theta: float | None = None,
    burn_in_fraction: float = 0.2,
) -> ChainTrace:
    """Conjugate Gibbs sampler alternating the latent and variance updates.

    Latents given (y, theta) are Normal(y_k/(1/theta + 1), 1/(1/theta + 1));
    theta given the latents is InverseGamma((alpha+K)/2, (alpha beta + sum
    x_k^2)/2). States stack theta in column 0 and the latents after it.
    """
    k_total = model.n_observations
    rng = Rng(seed).split("gibbs")
    theta = model.default_init_theta() if init_theta is None else float(init_theta)
    if theta <= 0:
        raise ValueError("init_theta must be positive")
    states = np.empty((steps, 1 + k_total))
    for t in range(steps):
        mean, shrink = model.latent_conditional(theta)
        x = mean + np.sqrt(shrink) * rng.standard_normal(k_total)
        theta = float(model.variance_conditional(x).sample(rng, 1)[0])
        states[t, 0] = theta
        states[t, 1:] = x
    return ChainTrace(
        states=states,
        accepted=np.ones(steps, dtype=bool),
        burn_in=int(burn_in_fraction * steps),
    )


def density_estimate(theta, inner_samples, w: LogWeightModel, mode: str = "standard") -> float:
    """Log of the unbiased target-density estimate at ``theta``.

    Standard mode averages the N joint weights; product-form mode averages
    over all N^K permuted draws, which for a factorized weight collapses to a
    product of per-block averages (linear cost). Returns -inf when every
    weight underflows.
    """
    inner = np.asarray(inner_samples, dtype=float)
    if inner.ndim != 2:
        raise ValueError("inner samples must form an (N, K) array")
    n, k_total = inner.shape
    if mode == "standard":
        lw = w.log_weights_batch(theta, inner)
        _check_estimates(lw)
        return log_sum_exp(lw) - np.log(n)
    if mode == "product_form":
        if w.is_factorized:
            total = w.theta_log_term(theta)
            for k in range(k_total):
                g = w.block_log_term(k, theta, inner[:, k])
                _check_estimates(g)
                total += log_sum_exp(g) - np.log(n)
            return float(total)
        if n**k_total > DENSITY_ESTIMATE_TUPLE_CAP:
            raise CapExceeded(
                f"product-form estimate over {n**k_total} tuples needs a factorized weight"
            )
        logs = np.empty(n**k_total)
        for flat, combo in enumerate(itertools.product(range(n), repeat=k_total)):
            point = inner[list(combo), np.arange(k_total)]
            logs[flat] = w.log_weight(theta, point)
        _check_estimates(logs)
        return log_sum_exp(logs) - k_total * np.log(n)
    raise ValueError(f"unknown mode {mode!r}")


def _check_estimates(values):
    values = np.atleast_1d(np.asarray(values, dtype=float))
    if np.any(np.isnan(values)) or np.any(values == np.inf):
        raise EvaluationError("weight produced NaN or +inf log value")


@dataclass(frozen=True)
class GimhConfig:
    n_inner: int
    estimator: str = "standard"  # "standard" | "product_form"
    proposal_scale: float = 1.0
    steps: int = 1000
    burn_in_fraction: float = 0.2
    seed: int = 0
    target_accept: float = 0.25
    adapt_scale: bool = True
    max_init_retries: int = 100

    def __post_init__(self):
        if self.n_inner < 1:
            raise ValueError("n_inner must be >= 1")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise ValueError("burn_in_fraction must lie in [0, 1)")
        if self.estimator not in ("standard", "product_form"):
            raise ValueError(f"unknown estimator {self.estimator!r}")


class LogRandomWalkProposal:
    """Gaussian random walk on log(theta) for positive parameters; the
    Hastings correction is the log of the proposed-to-current ratio."""

    def __init__(self, scale: float = 1.0, adaptive: bool = True, target_accept: float = 0.25):
        self._adapt = AdaptiveScale(scale, target_accept)
        self.adaptive = adaptive

    @property
    def scale(self) -> float:
        return self._adapt.scale

    def propose(self, gen, theta: float) -> float:
        return float(theta * np.exp(self.scale * gen.standard_normal()))

    def log_ratio(self, theta: float, proposed: float) -> float:
        return float(np.log(proposed) - np.log(theta))

    def adapt(self, accept_prob: float):
        if self.adaptive:
            self._adapt.update(accept_prob)


class DiscreteUniformProposal:
    """Symmetric uniform proposal over a finite parameter set."""

    def __init__(self, points):
        self.points = np.asarray(points, dtype=float)
        self.scale = float("nan")

    def propose(self, gen, theta: float) -> float:
        return float(self.points[gen.integers(0, len(self.points))])

    def log_ratio(self, theta: float, proposed: float) -> float:
        return 0.0

    def adapt(self, accept_prob: float):
        pass


def gimh_chain(
    kernel_sampler,
    w: LogWeightModel,
    proposal,
    cfg: GimhConfig,
    init: float,
) -> ChainTrace:
    """Grouped independence Metropolis-Hastings on the parameter axis.

    Each step proposes a parameter, draws fresh inner samples from the
    kernel, forms the density estimate in the configured mode, and accepts
    with the pseudo-marginal ratio. On acceptance the proposed estimate is
    retained; on rejection the current one is kept unchanged (sample
    recycling). A vanished estimate at initialization is retried with fresh
    draws a bounded number of times.
    """
    rng = Rng(cfg.seed).split("gimh")
    gen = rng.generator
    theta = float(init)
    current = -np.inf
    for _ in range(cfg.max_init_retries):
        x = kernel_sampler(theta, rng, cfg.n_inner)
        current = density_estimate(theta, x, w, cfg.estimator)
        if np.isfinite(current):
            break
    else:
        raise DegeneracyError(
            "density estimate at the initial state vanished in every retry"
        )

    steps = cfg.steps
    burn_in = int(cfg.burn_in_fraction * steps)
    states = np.empty(steps)
    accepted = np.zeros(steps, dtype=bool)
    estimates = np.empty(steps)
    scales = np.empty(steps)
    for t in range(steps):
        proposed_theta = proposal.propose(gen, theta)
        x_new = kernel_sampler(proposed_theta, rng, cfg.n_inner)
        proposed = density_estimate(proposed_theta, x_new, w, cfg.estimator)
        log_alpha = proposed - current + proposal.log_ratio(theta, proposed_theta)
        alpha = 0.0 if np.isnan(log_alpha) else min(1.0, np.exp(min(log_alpha, 0.0)))
        if gen.random() < alpha:
            theta = proposed_theta
            current = proposed
            accepted[t] = True
        states[t] = theta
        estimates[t] = current
        scales[t] = getattr(proposal, "scale", float("nan"))
        if t < burn_in and cfg.adapt_scale:
            proposal.adapt(alpha)
    return ChainTrace(
        states=states,
        accepted=accepted,
        burn_in=burn_in,
        proposal_scale_history=scales,
        log_density_estimates=estimates,
    )
