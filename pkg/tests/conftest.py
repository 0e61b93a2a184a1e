"""Shared helpers: random discrete instances and polynomial test functions.

Instances keep support values in {0, 1, 2} and coefficients of modest size so
that all moments stay exactly representable in doubles, which is what makes
the 1e-12 oracle-equality tolerances meaningful.
"""

import numpy as np
import pytest

from prodform import BlackBox, DiscreteProductTarget


def polynomial_phi(n_blocks, rng):
    """Random multilinear-plus-product polynomial over scalar blocks."""
    linear = rng.uniform(-0.5, 0.5, n_blocks)
    const = rng.uniform(-0.5, 0.5)
    pair = rng.uniform(-0.5, 0.5, (n_blocks, n_blocks))
    prod_coeff = rng.uniform(-0.5, 0.5)

    def fn(point):
        x = np.asarray(point, dtype=float)
        value = const + linear @ x + prod_coeff * np.prod(x)
        for i in range(n_blocks):
            for j in range(i + 1, n_blocks):
                value += pair[i, j] * x[i] * x[j]
        return float(value)

    def batch(points):
        x = np.asarray(points, dtype=float)
        value = const + x @ linear + prod_coeff * np.prod(x, axis=1)
        for i in range(n_blocks):
            for j in range(i + 1, n_blocks):
                value += pair[i, j] * x[:, i] * x[:, j]
        return value

    return BlackBox(fn, batch_fn=batch)


def random_instance(rng, max_blocks=3, max_support=3, max_samples=3):
    """(target, phi, n_per_block) with small support on {0, 1, 2}."""
    n_blocks = int(rng.integers(1, max_blocks + 1))
    blocks = []
    for _ in range(n_blocks):
        size = int(rng.integers(1, max_support + 1))
        atoms = rng.choice([0.0, 1.0, 2.0], size=size, replace=False)
        weights = rng.integers(1, 9, size=size).astype(float)
        blocks.append((atoms, weights / weights.sum()))
    target = DiscreteProductTarget(blocks)
    phi = polynomial_phi(n_blocks, rng)
    n_per_block = tuple(int(rng.integers(1, max_samples + 1)) for _ in range(n_blocks))
    return target, phi, n_per_block


@pytest.fixture
def nprng():
    return np.random.default_rng(20240817)
