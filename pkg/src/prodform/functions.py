"""Test-function representations.

A test function over a K-block product space can be given three ways:

* :class:`BlackBox` -- an arbitrary evaluator of joint points;
* :class:`SopFunction` -- a sum of J fully-factorized terms, each a product
  of univariate factors, which unlocks the linear-cost evaluation path;
* :class:`FactorGraphFunction` -- a product of factors over subsets of
  blocks, which unlocks variable elimination.

The structured forms must evaluate identically to their induced black-box
form; that equivalence is enforced by tests, not by construction.
"""

from __future__ import annotations

import math

import numpy as np


class BlackBox:
    """Joint-point evaluator, optionally with a vectorized batch path.

    ``fn`` maps one joint point (a tuple holding one value per block) to a
    real. ``batch_fn``, when provided, maps an (n, K) array of scalar-block
    points to an (n,) array and is used by hot loops.
    """

    def __init__(self, fn, batch_fn=None):
        self.fn = fn
        self.batch_fn = batch_fn

    def __call__(self, point):
        return self.fn(point)

    def evaluate_batch(self, points: np.ndarray) -> np.ndarray:
        if self.batch_fn is not None:
            return np.asarray(self.batch_fn(points), dtype=float)
        return np.array([self.fn(tuple(row)) for row in points], dtype=float)


class SopFunction:
    """Sum over terms of products of univariate factors.

    ``factors[j][k]`` is a callable mapping block-k values (vectorized over
    numpy arrays) to reals; the induced joint value is
    ``sum_j coeff_j * prod_k factors[j][k](x_k)``.
    """

    def __init__(self, factors, term_coeffs=None):
        self.factors = [list(row) for row in factors]
        self.n_terms = len(self.factors)
        if self.n_terms == 0:
            raise ValueError("SopFunction needs at least one term")
        widths = {len(row) for row in self.factors}
        if len(widths) != 1:
            raise ValueError("SopFunction factor grid must be rectangular")
        self.n_blocks = widths.pop()
        if term_coeffs is None:
            self.term_coeffs = np.ones(self.n_terms)
        else:
            self.term_coeffs = np.asarray(term_coeffs, dtype=float)
            if self.term_coeffs.shape != (self.n_terms,):
                raise ValueError("term_coeffs must have one entry per term")

    def as_black_box(self) -> BlackBox:
        def joint(point):
            total = 0.0
            for coeff, row in zip(self.term_coeffs, self.factors):
                prod = coeff
                for k, factor in enumerate(row):
                    prod *= float(factor(point[k]))
                total += prod
            return total

        def joint_batch(points):
            total = np.zeros(points.shape[0])
            for coeff, row in zip(self.term_coeffs, self.factors):
                prod = np.full(points.shape[0], coeff)
                for k, factor in enumerate(row):
                    prod *= np.asarray(factor(points[:, k]), dtype=float)
                total += prod
            return total

        return BlackBox(joint, batch_fn=joint_batch)


class FactorGraphFunction:
    """Product of factors, each scoped to a subset of blocks.

    ``factors`` is a list of ``(scope, fn)`` pairs where ``scope`` indexes
    blocks (0-based) and ``fn`` accepts one positional argument per scoped
    block, broadcasting over numpy arrays. Blocks outside every scope are
    ignored dimensions.
    """

    def __init__(self, n_blocks: int, factors):
        self.n_blocks = int(n_blocks)
        self.factors = []
        for scope, fn in factors:
            scope = tuple(sorted(int(k) for k in scope))
            if len(scope) == 0:
                raise ValueError("factor scopes must be non-empty")
            if len(set(scope)) != len(scope):
                raise ValueError(f"duplicate block in scope {scope}")
            if scope[0] < 0 or scope[-1] >= self.n_blocks:
                raise ValueError(f"scope {scope} outside of [0, {self.n_blocks})")
            self.factors.append((scope, fn))

    def scopes(self):
        return [scope for scope, _ in self.factors]

    def as_black_box(self) -> BlackBox:
        def joint(point):
            prod = 1.0
            for scope, fn in self.factors:
                prod *= float(fn(*(point[k] for k in scope)))
            return prod

        def joint_batch(points):
            prod = np.ones(points.shape[0])
            for scope, fn in self.factors:
                prod *= np.asarray(fn(*(points[:, k] for k in scope)), dtype=float)
            return prod

        return BlackBox(joint, batch_fn=joint_batch)


def as_black_box(phi) -> BlackBox:
    """Coerce any accepted test-function form to a BlackBox."""
    if isinstance(phi, BlackBox):
        return phi
    if isinstance(phi, (SopFunction, FactorGraphFunction)):
        return phi.as_black_box()
    if callable(phi):
        return BlackBox(phi)
    raise TypeError(f"cannot interpret {type(phi)!r} as a test function")


def product_of_coordinates(n_blocks: int) -> SopFunction:
    """The test function x_1 * x_2 * ... * x_K as a single-term SOP."""
    identity = lambda x: np.asarray(x, dtype=float)
    return SopFunction([[identity] * n_blocks])


def power_factor(exponent: int):
    if exponent == 0:
        return lambda x: np.ones_like(np.asarray(x, dtype=float))
    return lambda x: np.asarray(x, dtype=float) ** exponent


def constant_function(value: float) -> BlackBox:
    return BlackBox(
        lambda point: value,
        batch_fn=lambda pts: np.full(pts.shape[0], float(value)),
    )


def factorial_inverse(j: int) -> float:
    return 1.0 / math.factorial(j)
