"""Empirical-distribution metrics, degeneracy measures, exact enumeration
oracles, the quadrature reference posterior, and closed-form efficiency
ratios.

The brute-force oracle is the independent verifier used throughout the test
suite: it enumerates every realization of the per-block sample draws of a
finite instance, applies an estimator to each, and returns the estimator's
exact mean and variance.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import CapExceeded, DegeneracyError, RegimeError
from .estimators import DiscreteProductTarget
from .functions import as_black_box
from .samples import MarginalSamples


class Ecdf:
    """Right-continuous empirical CDF over weighted atoms."""

    def __init__(self, values, weights=None):
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("need a non-empty 1-d array of values")
        if weights is None:
            weights = np.full(values.size, 1.0 / values.size)
        else:
            weights = np.asarray(weights, dtype=float)
            if weights.shape != values.shape:
                raise ValueError("weights must align with values")
            if np.any(weights < 0):
                raise ValueError("weights must be non-negative")
            total = weights.sum()
            if not np.isfinite(total) or total <= 0:
                raise DegeneracyError("ECDF weights do not sum to a positive value")
            weights = weights / total
        order = np.argsort(values, kind="stable")
        atoms, inverse = np.unique(values[order], return_inverse=True)
        mass = np.zeros(atoms.size)
        np.add.at(mass, inverse, weights[order])
        self.atoms = atoms
        self.cum = np.cumsum(mass)
        # guard against rounding drift at the top
        self.cum[-1] = 1.0
        self.atoms.flags.writeable = False
        self.cum.flags.writeable = False

    @classmethod
    def from_particles(cls, particles) -> "Ecdf":
        return cls(particles.locations, particles.normalized_weights())

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.atoms, x, side="right")
        cum = np.concatenate([[0.0], self.cum])
        return cum[idx]

    def mean(self) -> float:
        mass = np.diff(np.concatenate([[0.0], self.cum]))
        return float(mass @ self.atoms)

    def std(self) -> float:
        mass = np.diff(np.concatenate([[0.0], self.cum]))
        mu = float(mass @ self.atoms)
        return float(np.sqrt(max(mass @ (self.atoms - mu) ** 2, 0.0)))


def _reference_grid(f: Ecdf, g, n_grid: int):
    """Evaluation grid: the ECDF atoms united with a quantile grid of the
    reference, extended until the reference's tails are negligible."""
    lo = float(f.atoms[0])
    hi = float(f.atoms[-1])
    if hasattr(g, "quantile"):
        qs = np.linspace(0.0, 1.0, n_grid + 2)[1:-1]
        ref_points = np.asarray(g.quantile(qs), dtype=float)
        lo = min(lo, float(ref_points[0]))
        hi = max(hi, float(ref_points[-1]))
    else:
        ref_points = np.array([])
        span = max(hi - lo, 1.0)
        g_call = g.evaluate if isinstance(g, Ecdf) else g
        while float(np.asarray(g_call(lo))) > 1e-9:
            lo -= span
            span *= 2
        span = max(hi - lo, 1.0)
        while float(np.asarray(g_call(hi))) < 1.0 - 1e-9:
            hi += span
            span *= 2
    base = np.union1d(f.atoms, ref_points)
    base = np.union1d(base, np.linspace(lo, hi, n_grid))
    return base


def w1_distance(f: Ecdf, g, n_grid: int = 4096, tol: float = 1e-6, max_refine: int = 12) -> float:
    """Integral of |F - G| over the line.

    When both arguments are ECDFs the integral is piecewise constant and
    computed exactly. Against a smooth reference CDF the integral is taken
    on a grid of the ECDF atoms plus reference quantiles, with midpoint
    refinement until the value changes by less than ``tol``.
    """
    if isinstance(g, Ecdf):
        grid = np.union1d(f.atoms, g.atoms)
        diffs = np.abs(f.evaluate(grid[:-1]) - g.evaluate(grid[:-1]))
        return float(np.sum(diffs * np.diff(grid)))
    g_fn = g.cdf if hasattr(g, "cdf") else g
    grid = _reference_grid(f, g, n_grid)
    previous = None
    for _ in range(max_refine):
        mids = 0.5 * (grid[:-1] + grid[1:])
        widths = np.diff(grid)
        diffs = np.abs(f.evaluate(mids) - np.asarray(g_fn(mids), dtype=float))
        value = float(np.sum(diffs * widths))
        if previous is not None and abs(value - previous) <= tol * max(1.0, value):
            return value
        previous = value
        grid = np.sort(np.concatenate([grid, mids]))
    return previous


def ks_statistic(f: Ecdf, g) -> float:
    """Supremum distance between an ECDF and a reference CDF.

    For a step function against a monotone reference the supremum is
    attained at an atom, approached from the left or the right.
    """
    if isinstance(g, Ecdf):
        grid = np.union1d(f.atoms, g.atoms)
        return float(np.max(np.abs(f.evaluate(grid) - g.evaluate(grid))))
    g_fn = g.cdf if hasattr(g, "cdf") else g
    g_vals = np.asarray(g_fn(f.atoms), dtype=float)
    right = np.abs(f.cum - g_vals)
    left = np.abs(np.concatenate([[0.0], f.cum[:-1]]) - g_vals)
    return float(max(right.max(), left.max()))


def top_mass(particles, count: int) -> float:
    """Total normalized weight carried by the ``count`` heaviest atoms."""
    weights = np.sort(particles.normalized_weights())[::-1]
    return float(np.sum(weights[: max(int(count), 0)]))


@dataclass(frozen=True)
class OracleReport:
    """Exact mean and variance of an estimator over every realization of the
    sample draws of a discrete instance."""

    exact_mean: float
    exact_variance: float
    n_realizations: int


ORACLE_REALIZATION_CAP = 10**7


def _slot_layout(target: DiscreteProductTarget, n_per_block):
    slots = []
    for k, n_k in enumerate(n_per_block):
        slots.extend([k] * n_k)
    sizes = [target.atoms(block).shape[0] for block in slots]
    count = 1
    for s in sizes:
        count *= s
    return slots, sizes, count


def brute_force_oracle(
    target: DiscreteProductTarget,
    n_per_block,
    estimator,
    cap: int = ORACLE_REALIZATION_CAP,
) -> OracleReport:
    """Exact estimator law by full enumeration.

    ``estimator`` receives a :class:`MarginalSamples` for each realization of
    the draws (block k contributes n_per_block[k] slots, each ranging over
    the block's support) and must return a scalar. Results are exact up to
    double rounding and invariant to enumeration order.
    """
    n_per_block = tuple(int(n) for n in n_per_block)
    slots, sizes, count = _slot_layout(target, n_per_block)
    if count > cap:
        raise CapExceeded(f"{count} realizations exceed the oracle cap {cap}")
    mean_terms = _ChunkedExactSum()
    second_terms = _ChunkedExactSum()
    for combo in itertools.product(*(range(s) for s in sizes)):
        prob = 1.0
        per_block = [[] for _ in n_per_block]
        for slot, atom_idx in zip(range(len(slots)), combo):
            block = slots[slot]
            prob *= target.probs(block)[atom_idx]
            per_block[block].append(target.atoms(block)[atom_idx])
        value = float(estimator(MarginalSamples(per_block)))
        mean_terms.add(prob * value)
        second_terms.add(prob * value * value)
    mean = mean_terms.total()
    variance = max(second_terms.total() - mean**2, 0.0)
    return OracleReport(mean, variance, count)


class _ChunkedExactSum:
    """Exactly rounded accumulation (math.fsum) with bounded memory."""

    def __init__(self, flush_at: int = 1 << 16):
        self._parts = []
        self._flush_at = flush_at

    def add(self, value: float):
        self._parts.append(value)
        if len(self._parts) >= self._flush_at:
            import math

            self._parts = [math.fsum(self._parts)]

    def total(self) -> float:
        import math

        return math.fsum(self._parts)


def _enumerate_slot_indices(sizes, count, batch=1 << 16):
    for start in range(0, count, batch):
        flat = np.arange(start, min(start + batch, count))
        yield np.unravel_index(flat, sizes)


def oracle_fast(
    target: DiscreteProductTarget,
    n_per_block,
    kind: str,
    phi,
    cap: int = ORACLE_REALIZATION_CAP,
) -> OracleReport:
    """Vectorized oracle for the two named estimators.

    Equivalent to :func:`brute_force_oracle` applied to the real estimator
    (asserted by tests) but evaluated with array gathers so that large
    instance sweeps stay fast. ``kind`` is ``"product_form"`` or
    ``"standard"``; the standard estimator requires equal per-block counts.
    """
    n_per_block = tuple(int(n) for n in n_per_block)
    slots, sizes, count = _slot_layout(target, n_per_block)
    if count > cap:
        raise CapExceeded(f"{count} realizations exceed the oracle cap {cap}")
    values_tensor = target.value_tensor(phi)
    k_total = target.n_blocks
    block_slots = []
    offset = 0
    for k, n_k in enumerate(n_per_block):
        block_slots.append(list(range(offset, offset + n_k)))
        offset += n_k
    slot_probs = [target.probs(slots[s]) for s in range(len(slots))]

    if kind == "product_form":
        combos = list(itertools.product(*(range(n) for n in n_per_block)))
    elif kind == "standard":
        n = n_per_block[0]
        if any(m != n for m in n_per_block):
            raise ValueError("standard estimator needs equal per-block counts")
        combos = [(i,) * k_total for i in range(n)]
    else:
        raise ValueError(f"unknown oracle estimator kind {kind!r}")

    mean_acc = 0.0
    second_acc = 0.0
    for idx in _enumerate_slot_indices(sizes, count):
        probs = np.ones(idx[0].shape[0])
        for s, ix in enumerate(idx):
            probs *= slot_probs[s][ix]
        acc = np.zeros(idx[0].shape[0])
        for combo in combos:
            gather = tuple(idx[block_slots[k][combo[k]]] for k in range(k_total))
            acc += values_tensor[gather]
        acc /= len(combos)
        mean_acc += float(probs @ acc)
        second_acc += float(probs @ (acc * acc))
    variance = max(second_acc - mean_acc**2, 0.0)
    return OracleReport(mean_acc, variance, count)


def conditional_oracle(
    theta_points,
    theta_probs,
    kernels,
    estimator,
    n_outer: int,
    n_inner: int,
    cap: int = ORACLE_REALIZATION_CAP,
) -> OracleReport:
    """Exact law of a two-level estimator over all realizations of the outer
    parameter draws and the conditional inner draws.

    ``estimator(thetas, x)`` receives the outer values (M,) and inner array
    (M, N, K) of one realization.
    """
    theta_points = np.asarray(theta_points, dtype=float)
    theta_probs = np.asarray(theta_probs, dtype=float)
    k_total = kernels[0].n_blocks
    per_theta: list[list[tuple[float, np.ndarray]]] = []
    for kernel in kernels:
        sizes = [kernel.atoms(k).shape[0] for k in range(k_total)] * n_inner
        outcomes = []
        for combo in itertools.product(*(range(s) for s in sizes)):
            prob = 1.0
            x = np.empty((n_inner, k_total))
            for slot, atom_idx in enumerate(combo):
                n, k = divmod(slot, k_total)
                prob *= kernel.probs(k)[atom_idx]
                x[n, k] = kernel.atoms(k)[atom_idx]
            outcomes.append((prob, x))
        per_theta.append(outcomes)

    mean_acc = 0.0
    second_acc = 0.0
    n_real = 0
    outer_space = itertools.product(range(theta_points.size), repeat=n_outer)
    for outer in outer_space:
        outer_prob = float(np.prod(theta_probs[list(outer)]))
        thetas = theta_points[list(outer)]
        for inner in itertools.product(*(per_theta[i] for i in outer)):
            prob = outer_prob
            x = np.empty((n_outer, n_inner, k_total))
            for m, (p, xm) in enumerate(inner):
                prob *= p
                x[m] = xm
            value = float(estimator(thetas, x))
            mean_acc += prob * value
            second_acc += prob * value * value
            n_real += 1
            if n_real > cap:
                raise CapExceeded(f"conditional oracle exceeded cap {cap}")
    variance = max(second_acc - mean_acc**2, 0.0)
    return OracleReport(mean_acc, variance, n_real)


class ReferenceCdf:
    """CDF tabulated on a grid with monotone interpolation."""

    def __init__(self, grid, cum, mean, std):
        self.grid = grid
        self.cum = cum
        self.mean = mean
        self.std = std

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.interp(x, self.grid, self.cum, left=0.0, right=1.0)

    def __call__(self, x):
        return self.cdf(x)

    def quantile(self, q):
        q = np.asarray(q, dtype=float)
        return np.interp(q, self.cum, self.grid)


def reference_theta_posterior(model, n_grid: int = 2049, refine_tol: float = 1e-8, log_tail_drop: float = 45.0) -> ReferenceCdf:
    """High-accuracy CDF of the hierarchical model's parameter marginal by
    quadrature of the closed-form unnormalized density on a log grid.

    The grid window expands until the log density falls ``log_tail_drop``
    below its peak on both sides; the trapezoid CDF is then refined by grid
    doubling until the sup-change drops below ``refine_tol``.
    """
    log_density = model.log_theta_marginal

    # Locate the peak on a coarse scan, then expand the window.
    t = np.linspace(-30.0, 30.0, 2001)
    logf = _log_density_on_log_grid(log_density, t)
    center = t[int(np.argmax(logf))]
    peak = float(np.max(logf))
    lo, hi = center - 1.0, center + 1.0
    step = 1.0
    while _log_density_on_log_grid(log_density, np.array([lo]))[0] > peak - log_tail_drop:
        lo -= step
        step *= 2
    step = 1.0
    while _log_density_on_log_grid(log_density, np.array([hi]))[0] > peak - log_tail_drop:
        hi += step
        step *= 2

    previous = None
    n = n_grid
    for _ in range(8):
        t = np.linspace(lo, hi, n)
        logf = _log_density_on_log_grid(log_density, t)
        f = np.exp(logf - np.max(logf))
        widths = np.diff(t)
        trapz = 0.5 * (f[:-1] + f[1:]) * widths
        cum = np.concatenate([[0.0], np.cumsum(trapz)])
        total = cum[-1]
        if total <= 0:
            raise DegeneracyError("reference density integrated to zero")
        cum /= total
        grid = np.exp(t)
        if previous is not None:
            change = float(np.max(np.abs(np.interp(previous[0], grid, cum) - previous[1])))
            if change < refine_tol:
                break
        previous = (grid, cum)
        n = 2 * (n - 1) + 1
    else:
        raise DegeneracyError("reference CDF did not converge under refinement")

    weights = np.diff(cum)
    mids = 0.5 * (grid[:-1] + grid[1:])
    mean = float(weights @ mids)
    std = float(np.sqrt(weights @ (mids - mean) ** 2))
    return ReferenceCdf(grid, cum, mean, std)


def _log_density_on_log_grid(log_density, t):
    # density of log(theta): f(theta(t)) * theta(t)
    return np.asarray(log_density(np.exp(t)), dtype=float) + t


def efficiency_frontier(sigma_sq, sigma_sq_pf, n_blocks, target_sigma_sq, relative_cost) -> bool:
    """Whether the permutation average is at least as computationally
    efficient as the plain average at the desired output variance, given the
    relative cost of a test-function evaluation to a fresh sample."""
    if min(sigma_sq, sigma_sq_pf, target_sigma_sq) <= 0 or relative_cost < 0:
        raise ValueError("variances must be positive and the cost non-negative")
    if sigma_sq_pf <= target_sigma_sq:
        raise RegimeError(
            "desired variance is reachable with a single permutation average; "
            "the cost comparison does not apply"
        )
    lhs = sigma_sq / sigma_sq_pf
    rhs = ((sigma_sq_pf / target_sigma_sq) ** (n_blocks - 1) * relative_cost + 1.0) / (
        relative_cost + 1.0
    )
    return bool(lhs >= rhs)


def efficiency_frontier_large_k(sigma_sq, sigma_sq_pf, n_blocks, target_sigma_sq) -> bool:
    """High-dimension reduction of the frontier at comparable sampling and
    evaluation costs."""
    if min(sigma_sq, sigma_sq_pf, target_sigma_sq) <= 0:
        raise ValueError("variances must be positive")
    if sigma_sq_pf <= target_sigma_sq:
        raise RegimeError("single-sample regime; the reduction does not apply")
    lhs = sigma_sq / sigma_sq_pf
    rhs = 0.5 * (sigma_sq_pf / target_sigma_sq) ** (n_blocks - 1)
    return bool(lhs >= rhs)


def theory_ratios(kind: str, *, cv: float | None = None, n_blocks: int | None = None, alpha: float | None = None) -> float:
    """Closed-form standard-to-product-form asymptotic variance ratios.

    ``"iid_product"``: identical blocks with a product test function, ratio
    ((1+cv^2)^K - 1) / (cv^2 K). ``"tail_indicator"``: the two-block joint
    tail indicator, ratio (2 - Phi(alpha)) / (2 (1 - Phi(alpha))).
    """
    from scipy.special import ndtr

    if kind == "iid_product":
        if cv is None or n_blocks is None:
            raise ValueError("iid_product needs cv and n_blocks")
        if cv <= 0:
            raise ValueError("cv must be positive")
        return float(((1.0 + cv**2) ** n_blocks - 1.0) / (cv**2 * n_blocks))
    if kind == "tail_indicator":
        if alpha is None:
            raise ValueError("tail_indicator needs alpha")
        phi = float(ndtr(alpha))
        return float((2.0 - phi) / (2.0 * (1.0 - phi)))
    raise ValueError(f"unknown ratio kind {kind!r}")


def batch_means_variance(values, n_batches: int = 20) -> tuple[float, float]:
    """Batch-means estimate of a chain's asymptotic variance with a rough
    standard error (chi-squared spread of the batch variance)."""
    values = np.asarray(values, dtype=float)
    if n_batches < 2:
        raise ValueError("need at least two batches")
    batch_len = values.size // n_batches
    if batch_len < 1:
        raise ValueError("chain too short for the requested batch count")
    trimmed = values[: batch_len * n_batches].reshape(n_batches, batch_len)
    means = trimmed.mean(axis=1)
    estimate = float(batch_len * np.var(means, ddof=1))
    se = estimate * np.sqrt(2.0 / (n_batches - 1))
    return estimate, float(se)
