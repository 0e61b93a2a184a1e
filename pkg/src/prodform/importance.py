"""Product-form importance sampling and its two-level extension.

Weights live in the log domain throughout: products of per-dimension weight
factors across a hundred blocks underflow doubles long before they stop
carrying information, so sums of weights are always reduced with
log-sum-exp. A weight may declare its factorization (a parameter-only part
plus per-dimension parts); the factorized form is what makes permutation
sums collapse to per-block sums.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneracyError, EvaluationError
from .estimators import (
    DiscreteProductTarget,
    exact_variance,
    product_form_estimate,
)
from .functions import (
    BlackBox,
    FactorGraphFunction,
    SopFunction,
    as_black_box,
    constant_function,
)
from .samples import Estimate, MarginalSamples


def log_sum_exp(values) -> float:
    """Stable log of a sum of exponentials; -inf when every term vanishes.

    Local implementation: the scipy wrapper's dispatch overhead dominates
    tight per-step MCMC loops.
    """
    values = np.asarray(values, dtype=float)
    peak = np.max(values) if values.size else -np.inf
    if not np.isfinite(peak):
        return float(peak)
    return float(peak + np.log(np.sum(np.exp(values - peak))))


class LogWeightModel:
    """Log-domain Radon-Nikodym weight with optional declared factorization.

    Joint mode wraps ``log w(theta, x)`` directly. Factorized mode declares
    ``log w = g0(theta) + sum_k g_k(theta, x_k)`` with g0 optional; each g_k
    must broadcast over numpy arrays of block-k values. ``theta`` may be
    ``None`` for weights over a plain product space.
    """

    def __init__(self, *, joint=None, block_terms=None, theta_term=None):
        if (joint is None) == (block_terms is None):
            raise ValueError("provide exactly one of joint= or block_terms=")
        self._joint = joint
        self._block_terms = list(block_terms) if block_terms is not None else None
        self._theta_term = theta_term

    @classmethod
    def from_joint(cls, fn) -> "LogWeightModel":
        return cls(joint=fn)

    @classmethod
    def factorized(cls, block_terms, theta_term=None) -> "LogWeightModel":
        return cls(block_terms=block_terms, theta_term=theta_term)

    @property
    def is_factorized(self) -> bool:
        return self._block_terms is not None

    @property
    def n_blocks(self):
        return len(self._block_terms) if self.is_factorized else None

    def theta_log_term(self, theta) -> float:
        if self._theta_term is None:
            return 0.0
        return float(self._theta_term(theta))

    def block_log_term(self, k: int, theta, x_k) -> np.ndarray:
        return np.asarray(self._block_terms[k](theta, x_k), dtype=float)

    def log_weight(self, theta, x) -> float:
        """Joint log weight of one point (x indexable per block)."""
        if self._joint is not None:
            return float(np.asarray(self._joint(theta, x)).item())
        total = self.theta_log_term(theta)
        for k, term in enumerate(self._block_terms):
            total += float(np.asarray(term(theta, x[k])).item())
        return total

    def log_weights_batch(self, theta, xs: np.ndarray) -> np.ndarray:
        """Joint log weights for an (n, K) array of points."""
        xs = np.asarray(xs, dtype=float)
        if self._joint is not None:
            return np.array([self._joint(theta, row) for row in xs], dtype=float)
        out = np.full(xs.shape[0], self.theta_log_term(theta))
        for k, term in enumerate(self._block_terms):
            out += np.asarray(term(theta, xs[:, k]), dtype=float)
        return out


def _check_log_weights_finite(values):
    values = np.atleast_1d(np.asarray(values, dtype=float))
    if np.any(np.isnan(values)) or np.any(values == np.inf):
        raise EvaluationError("non-finite log-weight encountered")


def _combined_weight_function(
    marginals, w, phi, strategy, theta, block_shifts=None, include_theta_term=True
):
    """Representation of w * phi matched to the requested strategy, returned
    as (function, strategy, outer scale).

    ``block_shifts`` subtracts a constant from each block's log term (used by
    the self-normalized path to keep products in range); the theta-only term
    can be excluded when it is known to cancel.
    """
    k_total = marginals.n_blocks
    shifts = np.zeros(k_total) if block_shifts is None else block_shifts

    if strategy == "brute_force" or not w.is_factorized:
        phi_bb = as_black_box(phi)
        theta_part = w.theta_log_term(theta) if (w.is_factorized and not include_theta_term) else 0.0

        def weighted(point):
            lw = w.log_weight(theta, point)
            _check_log_weights_finite(lw)
            return np.exp(lw - shifts.sum() - theta_part) * float(phi_bb(point))

        return BlackBox(weighted), "brute_force", 1.0

    theta_scale = np.exp(w.theta_log_term(theta)) if include_theta_term else 1.0

    if strategy == "sop":
        if not isinstance(phi, SopFunction):
            raise ValueError("strategy 'sop' requires a SopFunction")

        def weighted_factor(k, factor):
            term = w._block_terms[k]
            shift = shifts[k]

            def fn(x):
                g = np.asarray(term(theta, x), dtype=float)
                _check_log_weights_finite(g)
                return np.exp(g - shift) * np.asarray(factor(x), dtype=float)

            return fn

        rows = [
            [weighted_factor(k, phi.factors[j][k]) for k in range(k_total)]
            for j in range(phi.n_terms)
        ]
        return SopFunction(rows, phi.term_coeffs), "sop", theta_scale

    if strategy == "eliminate":
        if not isinstance(phi, FactorGraphFunction):
            raise ValueError("strategy 'eliminate' requires a FactorGraphFunction")
        factors = list(phi.factors)
        for k in range(k_total):
            term = w._block_terms[k]
            shift = shifts[k]

            def fn(x, term=term, shift=shift):
                g = np.asarray(term(theta, x), dtype=float)
                _check_log_weights_finite(g)
                return np.exp(g - shift)

            factors.append(((k,), fn))
        graph = FactorGraphFunction(k_total, factors)
        return graph, "eliminate", theta_scale

    raise ValueError(f"unknown strategy {strategy!r}")


def pf_is_estimate(
    marginals: MarginalSamples,
    w: LogWeightModel,
    phi,
    strategy: str = "brute_force",
    theta=None,
) -> Estimate:
    """Unbiased product-form importance-sampling estimate of the unnormalized
    target integral: the permutation average of w * phi under the proposal
    samples."""
    fn, mode, scale = _combined_weight_function(marginals, w, phi, strategy, theta)
    est = product_form_estimate(marginals, fn, strategy=mode)
    if scale != 1.0:
        est = Estimate(est.value * scale, est.n_phi_evals, est.n_samples_used, est.strategy)
    return est


def _block_log_means(marginals, w, theta):
    """Per-block log of the mean weight factor, used to rescale weights."""
    shifts = np.empty(marginals.n_blocks)
    for k in range(marginals.n_blocks):
        g = w.block_log_term(k, theta, marginals.block(k))
        _check_log_weights_finite(g)
        shifts[k] = log_sum_exp(g) - np.log(marginals.n_per_block[k])
    return shifts


def pf_snis_estimate(
    marginals: MarginalSamples,
    w: LogWeightModel,
    phi,
    strategy: str = "brute_force",
    theta=None,
) -> Estimate:
    """Self-normalized product-form estimate: the ratio of the permutation
    averages of w * phi and of w.

    The denominator is handled in the log domain: factorized weights are
    rescaled so every block's mean weight factor is one (making the
    denominator unity by construction), joint weights are shifted by their
    maximum over all permuted tuples.
    """
    if w.is_factorized:
        shifts = _block_log_means(marginals, w, theta)
        if not np.all(np.isfinite(shifts)):
            raise DegeneracyError("a block's importance weights all vanished")
        num = _estimate_with_shifts(marginals, w, phi, strategy, theta, shifts)
        den = _estimate_with_shifts(marginals, w, _ones_like(phi), strategy, theta, shifts)
    else:
        log_all = _all_tuple_log_weights(marginals, w, theta)
        shift = np.max(log_all)
        if not np.isfinite(shift):
            raise DegeneracyError("all importance weights vanished")
        phi_bb = as_black_box(phi)
        scaled = np.exp(log_all - shift)
        values = _all_tuple_values(marginals, phi_bb)
        num = Estimate(
            float(np.sum(scaled * values) / scaled.size),
            scaled.size, marginals.n_per_block, "brute_force",
        )
        den = Estimate(
            float(np.sum(scaled) / scaled.size),
            scaled.size, marginals.n_per_block, "brute_force",
        )
    if not np.isfinite(den.value) or den.value <= 0.0:
        raise DegeneracyError("self-normalization denominator vanished or underflowed")
    return Estimate(
        value=num.value / den.value,
        n_phi_evals=num.n_phi_evals + den.n_phi_evals,
        n_samples_used=marginals.n_per_block,
        strategy=num.strategy,
    )


def _ones_like(phi):
    if isinstance(phi, SopFunction):
        one = lambda x: np.ones_like(np.asarray(x, dtype=float))
        return SopFunction([[one] * phi.n_blocks])
    if isinstance(phi, FactorGraphFunction):
        return FactorGraphFunction(
            phi.n_blocks, [((0,), lambda x: np.ones_like(np.asarray(x, dtype=float)))]
        )
    return constant_function(1.0)


def _estimate_with_shifts(marginals, w, phi, strategy, theta, shifts):
    # theta-only term excluded: it cancels exactly in the ratio.
    fn, mode, _ = _combined_weight_function(
        marginals, w, phi, strategy, theta, shifts, include_theta_term=False
    )
    return product_form_estimate(marginals, fn, strategy=mode)


def _all_tuple_log_weights(marginals, w, theta):
    import itertools

    out = np.empty(marginals.tuple_count())
    shape = marginals.n_per_block
    for flat, combo in enumerate(itertools.product(*(range(n) for n in shape))):
        point = tuple(marginals.point(k, n) for k, n in enumerate(combo))
        out[flat] = w.log_weight(theta, point)
    _check_log_weights_finite(out)
    return out


def _all_tuple_values(marginals, phi_bb):
    import itertools

    out = np.empty(marginals.tuple_count())
    shape = marginals.n_per_block
    for flat, combo in enumerate(itertools.product(*(range(n) for n in shape))):
        point = tuple(marginals.point(k, n) for k, n in enumerate(combo))
        out[flat] = phi_bb(point)
    return out


class ConditionalSamples:
    """Outer parameter draws plus conditionally independent inner draws.

    ``thetas`` holds M parameter values; ``x[m, n, k]`` is the n-th draw of
    the k-th block from the kernel at ``thetas[m]``. Duplicate parameter
    values are rejected: with continuous parameter laws they almost surely
    never occur, and the permutation machinery assumes they do not.
    """

    def __init__(self, thetas, x):
        self.thetas = np.array(thetas, dtype=float)
        self.x = np.array(x, dtype=float)
        if self.thetas.ndim != 1:
            raise ValueError("thetas must be a 1-d array")
        if self.x.ndim != 3 or self.x.shape[0] != self.thetas.shape[0]:
            raise ValueError("x must have shape (M, N, K) aligned with thetas")
        if np.unique(self.thetas).size != self.thetas.size:
            raise ValueError("duplicate parameter values in conditional samples")
        self.thetas.flags.writeable = False
        self.x.flags.writeable = False

    @property
    def n_outer(self) -> int:
        return self.thetas.shape[0]

    @property
    def n_inner(self) -> int:
        return self.x.shape[1]

    @property
    def n_blocks(self) -> int:
        return self.x.shape[2]


def ppf_estimate(
    cs: ConditionalSamples,
    phi=None,
    *,
    phi_for_theta=None,
    strategy: str = "brute_force",
) -> Estimate:
    """Partially product-form estimator: the outer average over parameter
    draws of inner permutation averages of ``phi(theta, x)``.

    Supply ``phi(theta, x_point)`` for the brute-force path, or
    ``phi_for_theta(theta) -> TestFunction`` to run a structured strategy on
    each inner sum.
    """
    if (phi is None) == (phi_for_theta is None):
        raise ValueError("provide exactly one of phi or phi_for_theta")
    values = np.empty(cs.n_outer)
    n_evals = 0
    mode = None
    for m in range(cs.n_outer):
        theta = float(cs.thetas[m])
        marginals = MarginalSamples(
            [cs.x[m, :, k] for k in range(cs.n_blocks)]
        )
        if phi_for_theta is not None:
            inner_phi = phi_for_theta(theta)
        else:
            inner_phi = BlackBox(
                lambda point, theta=theta: phi(theta, point),
                batch_fn=None,
            )
        est = product_form_estimate(marginals, inner_phi, strategy=strategy)
        values[m] = est.value
        n_evals += est.n_phi_evals
        mode = est.strategy
    return Estimate(
        value=float(np.mean(values)),
        n_phi_evals=n_evals,
        n_samples_used=(cs.n_outer, cs.n_inner),
        strategy=f"ppf:{mode}",
    )


def _kernel_mean_and_inner_variance(kernel: DiscreteProductTarget, phi_theta, n_inner):
    from .estimators import _partial_mean_tensors

    report = exact_variance(kernel, phi_theta, n_inner)
    mean = float(_partial_mean_tensors(kernel, phi_theta)[frozenset()])
    return mean, report.finite_sample


def ppf_exact_variance(theta_points, theta_probs, kernels, phi, n_outer, n_inner) -> float:
    """Exact variance of the partially product-form estimator on a discrete
    instance: outer variance of the kernel mean plus the outer expectation of
    the inner product-form variance, all divided by the outer sample count.

    ``kernels[i]`` is the :class:`DiscreteProductTarget` of the kernel at
    ``theta_points[i]``; ``phi(theta, x_point)`` is evaluated exactly.
    """
    theta_points = np.asarray(theta_points, dtype=float)
    theta_probs = np.asarray(theta_probs, dtype=float)
    if abs(theta_probs.sum() - 1.0) > 1e-12:
        raise ValueError("theta probabilities must sum to 1")
    means = np.empty(theta_points.size)
    inner_vars = np.empty(theta_points.size)
    for i, theta in enumerate(theta_points):
        phi_theta = BlackBox(lambda point, theta=float(theta): phi(theta, point))
        means[i], inner_vars[i] = _kernel_mean_and_inner_variance(
            kernels[i], phi_theta, n_inner
        )
    overall = float(theta_probs @ means)
    outer_var = float(theta_probs @ (means - overall) ** 2)
    return (outer_var + float(theta_probs @ inner_vars)) / n_outer


def mn_average_exact_variance(theta_points, theta_probs, kernels, phi, n_outer, n_inner) -> float:
    """Exact variance of the plain two-level average (no permutations) on the
    same discrete instance; the comparison point for the ordering results."""
    theta_points = np.asarray(theta_points, dtype=float)
    theta_probs = np.asarray(theta_probs, dtype=float)
    means = np.empty(theta_points.size)
    inner_vars = np.empty(theta_points.size)
    for i, theta in enumerate(theta_points):
        phi_theta = BlackBox(lambda point, theta=float(theta): phi(theta, point))
        from .estimators import _partial_mean_tensors, _subset_second_moments

        tensors = _partial_mean_tensors(kernels[i], phi_theta)
        mean, moments = _subset_second_moments(kernels[i], tensors)
        means[i] = mean
        inner_vars[i] = moments[frozenset(range(kernels[i].n_blocks))]
    overall = float(theta_probs @ means)
    outer_var = float(theta_probs @ (means - overall) ** 2)
    return (outer_var + float(theta_probs @ inner_vars) / n_inner) / n_outer


@dataclass(frozen=True)
class WeightedParticles:
    """Weighted atoms over the parameter axis, weights kept in log space."""

    locations: np.ndarray
    log_weights: np.ndarray
    log_normalizer: float = field(init=False)

    def __post_init__(self):
        locations = np.asarray(self.locations, dtype=float)
        log_weights = np.asarray(self.log_weights, dtype=float)
        if locations.shape[0] != log_weights.shape[0]:
            raise ValueError("locations and log_weights must align")
        if np.any(np.isnan(log_weights)) or np.any(log_weights == np.inf):
            raise ValueError("log-weights must not be NaN or +inf")
        if not np.any(log_weights > -np.inf):
            raise DegeneracyError("all particle weights underflowed to zero")
        object.__setattr__(self, "locations", locations)
        object.__setattr__(self, "log_weights", log_weights)
        object.__setattr__(self, "log_normalizer", log_sum_exp(log_weights))

    def normalized_weights(self) -> np.ndarray:
        return np.exp(self.log_weights - self.log_normalizer)

    def effective_sample_size(self) -> float:
        return float(np.exp(2.0 * self.log_normalizer - log_sum_exp(2.0 * self.log_weights)))

    def mean(self) -> float:
        return float(self.normalized_weights() @ self.locations)

    def std(self) -> float:
        w = self.normalized_weights()
        mu = float(w @ self.locations)
        return float(np.sqrt(w @ (self.locations - mu) ** 2))


def theta_marginal(
    method: str,
    w: LogWeightModel,
    *,
    thetas=None,
    xs=None,
    cs: ConditionalSamples | None = None,
) -> WeightedParticles:
    """Weighted particle approximation of the parameter marginal.

    ``"is"``/``"pfis"`` take joint-proposal draws: ``thetas`` (M,) with
    ``xs`` (M, K) rows drawn independently of theta. ``"is2"``/``"pfis2"``
    take :class:`ConditionalSamples`. The product-form variants need a
    factorized weight and aggregate each atom's permutation sum as a product
    of per-block sums, computed with log-sum-exp.
    """
    method = method.lower()
    if method in ("is", "pfis"):
        if thetas is None or xs is None:
            raise ValueError(f"method {method!r} needs thetas and xs")
        thetas = np.asarray(thetas, dtype=float)
        xs = np.asarray(xs, dtype=float)
        if xs.shape[0] != thetas.shape[0]:
            raise ValueError("thetas and xs must align")
        if method == "is":
            lw = np.array(
                [w.log_weight(float(t), xs[m]) for m, t in enumerate(thetas)]
            )
            _check_log_weights_finite(lw)
            return WeightedParticles(thetas, lw)
        if not w.is_factorized:
            raise ValueError("pfis requires a factorized weight")
        if np.unique(thetas).size != thetas.size:
            raise ValueError("duplicate parameter values in pfis atoms")
        n, k_total = xs.shape
        lw = np.empty(n)
        for m, theta in enumerate(thetas):
            total = w.theta_log_term(float(theta))
            for k in range(k_total):
                g = w.block_log_term(k, float(theta), xs[:, k])
                _check_log_weights_finite(g)
                total += log_sum_exp(g)
            lw[m] = total
        return WeightedParticles(thetas, lw)

    if method in ("is2", "pfis2"):
        if cs is None:
            raise ValueError(f"method {method!r} needs conditional samples")
        if method == "is2":
            lw = np.array(
                [
                    log_sum_exp(w.log_weights_batch(float(cs.thetas[m]), cs.x[m]))
                    for m in range(cs.n_outer)
                ]
            )
            return WeightedParticles(cs.thetas, lw)
        if not w.is_factorized:
            raise ValueError("pfis2 requires a factorized weight")
        lw = np.empty(cs.n_outer)
        for m in range(cs.n_outer):
            theta = float(cs.thetas[m])
            total = w.theta_log_term(theta)
            for k in range(cs.n_blocks):
                g = w.block_log_term(k, theta, cs.x[m, :, k])
                _check_log_weights_finite(g)
                total += log_sum_exp(g)
            lw[m] = total
        return WeightedParticles(cs.thetas, lw)

    raise ValueError(f"unknown method {method!r}")
