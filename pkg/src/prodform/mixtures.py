"""Stratified estimators for mixtures of product-form distributions.

Each mixture component owns a partition of the coordinate axes and is
product-form over its partition blocks (partial factorizations allowed).
Stratification draws a fixed allocation of samples per component; the
product-form variant additionally permutes within each component's blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ProdformError
from .estimators import DiscreteProductTarget, exact_variance, product_form_estimate
from .functions import BlackBox, as_black_box
from .samples import Estimate, MarginalSamples


@dataclass(frozen=True)
class MixtureComponent:
    """One product-form mixture component.

    ``partition`` lists disjoint tuples of coordinate indices covering the
    full space. ``block_samplers[b]`` draws (n, len(partition[b])) arrays for
    partition block b. ``oracle``, when present, is the component's discrete
    product target over the same partition blocks (atoms are tuples of the
    block's coordinates) and enables exact-moment computations.
    """

    partition: tuple[tuple[int, ...], ...]
    block_samplers: tuple
    oracle: DiscreteProductTarget | None = None


class MixtureOfProducts:
    def __init__(self, weights, components):
        self.weights = np.asarray(weights, dtype=float)
        self.components = list(components)
        if self.weights.ndim != 1 or len(self.components) != self.weights.shape[0]:
            raise ValueError("one weight per component required")
        if np.any(self.weights <= 0):
            raise ValueError("component weights must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("component weights must sum to 1 within 1e-12")
        covers = [sorted(k for block in c.partition for k in block) for c in self.components]
        dims = {tuple(c) for c in covers}
        if len(dims) != 1:
            raise ValueError("components disagree on the coordinate space")
        cover = covers[0]
        if cover != list(range(len(cover))):
            raise ValueError("each partition must cover the coordinate axes exactly")
        self.n_coords = len(cover)

    @property
    def n_components(self) -> int:
        return len(self.components)


def _assemble(partition, block_points, n_coords):
    """Scatter per-block coordinate values back into full coordinate order."""
    point = [None] * n_coords
    for block, values in zip(partition, block_points):
        values = np.atleast_1d(np.asarray(values, dtype=float))
        for pos, coord in enumerate(block):
            point[coord] = float(values[pos])
    return tuple(point)


def _component_phi(phi_bb, partition, n_coords) -> BlackBox:
    def fn(block_points):
        return phi_bb(_assemble(partition, block_points, n_coords))

    return BlackBox(fn)


def proportional_allocation(weights, n_total: int) -> np.ndarray:
    """Largest-remainder rounding of w_i * N with a one-sample floor."""
    return _largest_remainder(np.asarray(weights, dtype=float), n_total)


def _largest_remainder(shares, n_total):
    shares = shares / shares.sum()
    n_comp = shares.shape[0]
    if n_total < n_comp:
        raise ValueError(f"cannot allocate {n_total} samples across {n_comp} components")
    quota = shares * n_total
    alloc = np.floor(quota).astype(int)
    remainder = quota - alloc
    leftover = n_total - int(alloc.sum())
    order = np.argsort(-remainder, kind="stable")
    for i in range(leftover):
        alloc[order[i % n_comp]] += 1
    # One-sample floor, funded by the largest allocations.
    while np.any(alloc < 1):
        alloc[int(np.argmax(alloc))] -= 1
        alloc[int(np.argmin(alloc))] += 1
    return alloc


def optimal_allocation(weights, sigmas, n_total: int) -> np.ndarray:
    """Allocations proportional to weight times per-component asymptotic
    standard deviation, the minimizer of the stratified variance; components
    with zero spread keep the one-sample floor."""
    weights = np.asarray(weights, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    if np.any(sigmas < 0):
        raise ValueError("sigmas must be non-negative")
    if not np.any(sigmas > 0):
        raise ValueError("at least one sigma must be positive")
    return _largest_remainder(weights * sigmas, n_total)


def _draw_component(component, rng, n):
    blocks = []
    for b, sampler in enumerate(component.block_samplers):
        arr = np.asarray(sampler(rng, n), dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.shape != (n, len(component.partition[b])):
            raise ValueError(
                f"sampler for block {b} returned shape {arr.shape}, "
                f"expected ({n}, {len(component.partition[b])})"
            )
        blocks.append(arr)
    return blocks


def _resolve_allocation(mix, n_total, allocation):
    if allocation is None:
        return proportional_allocation(mix.weights, n_total)
    alloc = np.asarray(allocation, dtype=int)
    if alloc.shape != (mix.n_components,):
        raise ValueError("allocation must give one count per component")
    if np.any((alloc < 1) & (mix.weights > 0)):
        raise ValueError("zero allocation for a positive-weight component")
    return alloc


def stratified_estimate(mix: MixtureOfProducts, phi, n_total: int, allocation=None, rng=None) -> Estimate:
    """Weighted sum of per-component plain averages over independent
    per-component streams."""
    alloc = _resolve_allocation(mix, n_total, allocation)
    phi_bb = as_black_box(phi)
    total = 0.0
    n_evals = 0
    for i, component in enumerate(mix.components):
        stream = rng.split("component", i)
        blocks = _draw_component(component, stream, int(alloc[i]))
        values = np.array(
            [
                phi_bb(
                    _assemble(
                        component.partition,
                        [blocks[b][n] for b in range(len(blocks))],
                        mix.n_coords,
                    )
                )
                for n in range(int(alloc[i]))
            ]
        )
        total += mix.weights[i] * float(np.mean(values))
        n_evals += int(alloc[i])
    return Estimate(
        value=total,
        n_phi_evals=n_evals,
        n_samples_used=tuple(int(a) for a in alloc),
        strategy="stratified",
    )


def stratified_pf_estimate(
    mix: MixtureOfProducts,
    phi,
    n_total: int,
    allocation=None,
    rng=None,
    strategy: str = "brute_force",
) -> Estimate:
    """Weighted sum of per-component product-form estimates, each permuting
    over that component's own partition blocks."""
    alloc = _resolve_allocation(mix, n_total, allocation)
    phi_bb = as_black_box(phi)
    total = 0.0
    n_evals = 0
    for i, component in enumerate(mix.components):
        stream = rng.split("component", i)
        blocks = _draw_component(component, stream, int(alloc[i]))
        marginals = MarginalSamples(blocks)
        est = product_form_estimate(
            marginals,
            _component_phi(phi_bb, component.partition, mix.n_coords),
            strategy=strategy,
        )
        total += mix.weights[i] * est.value
        n_evals += est.n_phi_evals
    return Estimate(
        value=total,
        n_phi_evals=n_evals,
        n_samples_used=tuple(int(a) for a in alloc),
        strategy="stratified_pf",
    )


def _require_oracles(mix):
    for i, c in enumerate(mix.components):
        if c.oracle is None:
            raise ProdformError(f"component {i} has no discrete oracle")


def mixture_exact_moments(mix: MixtureOfProducts, phi):
    """Per-component exact means and variances of phi, plus the mixture mean
    and variance, from the discrete component oracles."""
    _require_oracles(mix)
    phi_bb = as_black_box(phi)
    means = np.empty(mix.n_components)
    variances = np.empty(mix.n_components)
    second = np.empty(mix.n_components)
    for i, c in enumerate(mix.components):
        comp_phi = _component_phi(phi_bb, c.partition, mix.n_coords)
        from .estimators import _partial_mean_tensors, _subset_second_moments

        tensors = _partial_mean_tensors(c.oracle, comp_phi)
        mean, moments = _subset_second_moments(c.oracle, tensors)
        means[i] = mean
        variances[i] = moments[frozenset(range(c.oracle.n_blocks))]
        second[i] = variances[i] + mean**2
    mix_mean = float(mix.weights @ means)
    mix_var = float(mix.weights @ second - mix_mean**2)
    return means, variances, mix_mean, mix_var


def stratified_exact_variance(mix: MixtureOfProducts, phi, allocation) -> float:
    """Exact variance of the stratified estimator: sum of squared weights
    times per-component variances over allocations."""
    _, variances, _, _ = mixture_exact_moments(mix, phi)
    alloc = np.asarray(allocation, dtype=float)
    return float(np.sum(mix.weights**2 * variances / alloc))


def stratified_pf_exact_variance(mix: MixtureOfProducts, phi, allocation) -> float:
    """Exact variance of the product-form stratified estimator via the exact
    per-component permutation-average variance."""
    _require_oracles(mix)
    phi_bb = as_black_box(phi)
    alloc = np.asarray(allocation, dtype=int)
    total = 0.0
    for i, c in enumerate(mix.components):
        comp_phi = _component_phi(phi_bb, c.partition, mix.n_coords)
        report = exact_variance(
            c.oracle, comp_phi, (int(alloc[i]),) * c.oracle.n_blocks
        )
        total += mix.weights[i] ** 2 * report.finite_sample
    return float(total)


def plain_exact_variance(mix: MixtureOfProducts, phi, n_total: int) -> float:
    """Exact variance of the unstratified estimator drawing n samples from
    the mixture itself."""
    _, _, _, mix_var = mixture_exact_moments(mix, phi)
    return mix_var / n_total


def allocation_asymptotic_variance(weights, sigmas, allocation) -> float:
    """Asymptotic variance of the stratified product-form estimator under an
    allocation: sum of (w_i sigma_i)^2 / fraction_i."""
    weights = np.asarray(weights, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    alloc = np.asarray(allocation, dtype=float)
    fractions = alloc / alloc.sum()
    return float(np.sum((weights * sigmas) ** 2 / fractions))
