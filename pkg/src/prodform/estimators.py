"""Standard and product-form Monte Carlo estimators with exact variance
machinery.

The product-form estimator averages a test function over every component-wise
permutation of per-block samples instead of only the aligned tuples. Given a
finite-support product target, the variance of either estimator can be
computed exactly by support enumeration; those exact formulas are the oracle
side of most tests in this package.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import CapExceeded, EvaluationError
from .functions import BlackBox, FactorGraphFunction, SopFunction, as_black_box
from .rng import Rng
from .samples import Estimate, MarginalSamples

BRUTE_FORCE_TUPLE_CAP = 10**8
ENUMERATION_BATCH = 1 << 18
SUBSET_BLOCK_CAP = 12
SUPPORT_CELL_CAP = 200_000


def standard_estimate(joints, phi) -> Estimate:
    """Plain Monte Carlo average of ``phi`` over aligned joint tuples.

    ``joints`` is an (N, K) array for scalar blocks, or a sequence of joint
    tuples when blocks are vector-valued.
    """
    phi_bb = as_black_box(phi)
    if isinstance(joints, np.ndarray) and joints.ndim == 2:
        values = phi_bb.evaluate_batch(np.asarray(joints, dtype=float))
        n = joints.shape[0]
        k = joints.shape[1]
    else:
        rows = list(joints)
        values = np.array([phi_bb(tuple(row)) for row in rows], dtype=float)
        n = len(rows)
        k = len(rows[0]) if n else 0
    if n < 1:
        raise ValueError("standard_estimate needs at least one sample")
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise EvaluationError(f"phi returned a non-finite value at sample index {bad[0]}")
    return Estimate(
        value=float(np.sum(values) / n),
        n_phi_evals=n,
        n_samples_used=(n,) * k,
        strategy="standard",
    )


def _brute_force_product_form(
    marginals: MarginalSamples, phi_bb: BlackBox, cap: int
) -> float:
    shape = marginals.n_per_block
    total = marginals.tuple_count()
    if total > cap:
        raise CapExceeded(
            f"brute force over {total} permuted tuples exceeds cap {cap}"
        )
    if marginals.all_scalar():
        blocks = [marginals.block(k) for k in range(marginals.n_blocks)]
        chunk_sums = []
        for start in range(0, total, ENUMERATION_BATCH):
            stop = min(start + ENUMERATION_BATCH, total)
            idx = np.unravel_index(np.arange(start, stop), shape)
            points = np.column_stack([blocks[k][idx[k]] for k in range(len(blocks))])
            values = phi_bb.evaluate_batch(points)
            bad = np.flatnonzero(~np.isfinite(values))
            if bad.size:
                where = tuple(int(ix[bad[0]]) for ix in idx)
                raise EvaluationError(f"phi non-finite at permuted index {where}")
            chunk_sums.append(np.sum(values))
        return float(np.sum(chunk_sums) / total)
    # Vector blocks: fall back to a direct loop over index tuples.
    acc = 0.0
    comp = 0.0  # Kahan compensation; mixed-sign terms magnify rounding
    for combo in itertools.product(*(range(n) for n in shape)):
        point = tuple(marginals.point(k, n) for k, n in enumerate(combo))
        v = float(phi_bb(point))
        if not np.isfinite(v):
            raise EvaluationError(f"phi non-finite at permuted index {combo}")
        y = v - comp
        t = acc + y
        comp = (t - acc) - y
        acc = t
    return acc / total


def product_form_estimate(
    marginals: MarginalSamples,
    phi,
    strategy: str = "brute_force",
    *,
    plan=None,
    cap: int = BRUTE_FORCE_TUPLE_CAP,
) -> Estimate:
    """Average ``phi`` over all permuted sample tuples.

    Strategies: ``"brute_force"`` works for any representation (subject to
    the tuple cap), ``"sop"`` requires a :class:`SopFunction`, and
    ``"eliminate"`` requires a :class:`FactorGraphFunction` (``plan`` is
    computed greedily when not supplied). All strategies return the same
    value up to floating-point reassociation.
    """
    if strategy == "brute_force":
        phi_bb = as_black_box(phi)
        value = _brute_force_product_form(marginals, phi_bb, cap)
        return Estimate(
            value=value,
            n_phi_evals=marginals.tuple_count(),
            n_samples_used=marginals.n_per_block,
            strategy="brute_force",
        )
    if strategy == "sop":
        if not isinstance(phi, SopFunction):
            raise ValueError("strategy 'sop' requires a SopFunction")
        from .factorized import eval_sop

        return eval_sop(marginals, phi)
    if strategy == "eliminate":
        if not isinstance(phi, FactorGraphFunction):
            raise ValueError("strategy 'eliminate' requires a FactorGraphFunction")
        from .factorized import eval_eliminated, plan_elimination

        if plan is None:
            plan = plan_elimination(phi, n_per_block=marginals.n_per_block)
        return eval_eliminated(marginals, phi, plan)
    raise ValueError(f"unknown strategy {strategy!r}")


class DiscreteProductTarget:
    """Finite-support product distribution used as an exact-moment oracle.

    Block k is a list of support atoms (scalars or equal-width vectors) with
    strictly positive probabilities summing to one.
    """

    def __init__(self, blocks):
        self._atoms = []
        self._probs = []
        for k, (atoms, probs) in enumerate(blocks):
            atoms = np.array(atoms, dtype=float)
            probs = np.array(probs, dtype=float)
            if atoms.ndim not in (1, 2) or atoms.shape[0] != probs.shape[0]:
                raise ValueError(f"block {k}: atoms and probs are inconsistent")
            if np.any(probs <= 0):
                raise ValueError(f"block {k}: zero-probability support rows rejected")
            if abs(probs.sum() - 1.0) > 1e-12:
                raise ValueError(f"block {k}: probabilities must sum to 1 within 1e-12")
            atoms.flags.writeable = False
            probs.flags.writeable = False
            self._atoms.append(atoms)
            self._probs.append(probs)
        if not self._atoms:
            raise ValueError("need at least one block")

    @property
    def n_blocks(self) -> int:
        return len(self._atoms)

    def atoms(self, k: int) -> np.ndarray:
        return self._atoms[k]

    def probs(self, k: int) -> np.ndarray:
        return self._probs[k]

    def support_sizes(self) -> tuple[int, ...]:
        return tuple(a.shape[0] for a in self._atoms)

    def atom_point(self, k: int, i: int):
        value = self._atoms[k][i]
        if np.ndim(value) == 0:
            return float(value)
        return tuple(value)

    def cell_count(self) -> int:
        count = 1
        for s in self.support_sizes():
            count *= s
        return count

    def value_tensor(self, phi, cap: int = SUPPORT_CELL_CAP) -> np.ndarray:
        """Evaluate ``phi`` on the full support grid."""
        if self.cell_count() > cap:
            raise CapExceeded(
                f"support grid has {self.cell_count()} cells, cap is {cap}"
            )
        phi_bb = as_black_box(phi)
        shape = self.support_sizes()
        values = np.empty(shape, dtype=float)
        for idx in np.ndindex(*shape):
            point = tuple(self.atom_point(k, i) for k, i in enumerate(idx))
            values[idx] = phi_bb(point)
        return values


@dataclass(frozen=True)
class VarianceReport:
    """Exact finite-sample and asymptotic variances of the product-form
    estimator, with the per-subset second-moment terms used to build them."""

    finite_sample: float
    asymptotic_pf: float
    asymptotic_std: float
    terms: dict = field(repr=False)


def _partial_mean_tensors(target: DiscreteProductTarget, phi, cap=SUPPORT_CELL_CAP):
    """For every subset B of blocks, the function obtained by integrating
    out all blocks outside B, tabulated on B's support grid (axes in sorted
    block order)."""
    k_total = target.n_blocks
    if k_total > SUBSET_BLOCK_CAP:
        raise CapExceeded(f"subset machinery is capped at {SUBSET_BLOCK_CAP} blocks")
    values = target.value_tensor(phi, cap=cap)
    full = frozenset(range(k_total))
    tensors = {full: values}
    for size in range(k_total - 1, -1, -1):
        for subset in itertools.combinations(range(k_total), size):
            subset = frozenset(subset)
            extend = min(set(range(k_total)) - subset)
            parent = subset | {extend}
            axis = sorted(parent).index(extend)
            tensors[subset] = np.tensordot(
                tensors[parent], target.probs(extend), axes=([axis], [0])
            )
    return tensors


def _subset_second_moments(target: DiscreteProductTarget, tensors):
    """sigma^2_B = E_B[(partial mean over B's complement - full mean)^2]."""
    k_total = target.n_blocks
    mean = float(tensors[frozenset()])
    moments = {frozenset(): 0.0}
    for size in range(1, k_total + 1):
        for subset in itertools.combinations(range(k_total), size):
            key = frozenset(subset)
            dev = tensors[key] - mean
            weighted = dev * dev
            for axis, k in enumerate(sorted(subset)):
                shape = [1] * len(subset)
                shape[axis] = -1
                weighted = weighted * target.probs(k).reshape(shape)
            moments[key] = float(np.sum(weighted))
    return mean, moments


def exact_variance(
    target: DiscreteProductTarget, phi, n_per_block
) -> VarianceReport:
    """Exact variance of the product-form estimator at the given per-block
    sample counts, computed by support enumeration of all moments.

    The finite-sample variance sums, over non-empty block subsets A, the
    inclusion-exclusion combination of subset second moments scaled by the
    inverse product of sample counts over A. Unequal counts are supported.
    """
    k_total = target.n_blocks
    n_per_block = tuple(int(n) for n in np.atleast_1d(n_per_block).tolist())
    if len(n_per_block) == 1:
        n_per_block = n_per_block * k_total
    if len(n_per_block) != k_total:
        raise ValueError("n_per_block must give one count per block")
    if any(n < 1 for n in n_per_block):
        raise ValueError("sample counts must be positive")

    tensors = _partial_mean_tensors(target, phi)
    _, moments = _subset_second_moments(target, tensors)

    finite = 0.0
    terms = {}
    blocks = list(range(k_total))
    for size in range(1, k_total + 1):
        for subset_a in itertools.combinations(blocks, size):
            scale = 1.0
            for k in subset_a:
                scale *= n_per_block[k]
            inner = 0.0
            for sub_size in range(size + 1):
                for subset_b in itertools.combinations(subset_a, sub_size):
                    sign = (-1.0) ** (size - sub_size)
                    value = moments[frozenset(subset_b)]
                    inner += sign * value
                    terms[(subset_a, subset_b)] = value
            finite += inner / scale

    asymptotic_pf = sum(moments[frozenset((k,))] for k in blocks)
    asymptotic_std = moments[frozenset(blocks)]
    return VarianceReport(
        finite_sample=finite,
        asymptotic_pf=asymptotic_pf,
        asymptotic_std=asymptotic_std,
        terms=terms,
    )


def asymptotic_variances(target: DiscreteProductTarget, phi) -> tuple[float, float]:
    """(product-form, standard) asymptotic variances; the first never
    exceeds the second."""
    tensors = _partial_mean_tensors(target, phi)
    _, moments = _subset_second_moments(target, tensors)
    blocks = range(target.n_blocks)
    sigma_sq_pf = sum(moments[frozenset((k,))] for k in blocks)
    sigma_sq_std = moments[frozenset(blocks)]
    return float(sigma_sq_pf), float(sigma_sq_std)


def hoeffding_projection(target: DiscreteProductTarget, phi, subset):
    """The canonical-decomposition projection onto a non-empty block subset.

    Returns an evaluator psi over points of the subset's blocks satisfying
    the defining alternating sum over sub-subsets; integrating psi against
    any non-empty group of its own blocks gives zero.
    """
    subset = tuple(sorted(set(int(k) for k in subset)))
    if not subset:
        raise ValueError("subset must be non-empty")
    if any(k < 0 or k >= target.n_blocks for k in subset):
        raise ValueError(f"subset {subset} outside of target blocks")
    phi_bb = as_black_box(phi)
    k_total = target.n_blocks

    def integrate_out(fixed: dict) -> float:
        """Mean of phi with the given coordinates held fixed."""
        free = [k for k in range(k_total) if k not in fixed]
        total = 0.0
        for combo in itertools.product(*(range(len(target.atoms(k))) for k in free)):
            prob = 1.0
            point = [None] * k_total
            for k, i in zip(free, combo):
                prob *= target.probs(k)[i]
                point[k] = target.atom_point(k, i)
            for k, val in fixed.items():
                point[k] = val
            total += prob * float(phi_bb(tuple(point)))
        return total

    def psi(x_subset):
        if np.ndim(x_subset) == 0:
            x_subset = (x_subset,)
        if len(x_subset) != len(subset):
            raise ValueError(
                f"expected {len(subset)} coordinates, got {len(x_subset)}"
            )
        coords = dict(zip(subset, x_subset))
        total = 0.0
        for size in range(len(subset) + 1):
            sign = (-1.0) ** (len(subset) - size)
            for sub in itertools.combinations(subset, size):
                total += sign * integrate_out({k: coords[k] for k in sub})
        return total

    return psi


@dataclass(frozen=True)
class ReplicateSummary:
    mean: float
    variance: float
    standard_error: float
    values: np.ndarray = field(repr=False)


def replicate_variance(estimator_runner, n_replicates: int, seed: int) -> ReplicateSummary:
    """Sample mean/variance of an estimator across independent replicates.

    Replicate r runs on the child stream ``Rng(seed).split("replicate", r)``,
    so results are reproducible and independent of execution order.
    """
    if n_replicates < 2:
        raise ValueError("need at least two replicates")
    master = Rng(seed)
    values = np.empty(n_replicates)
    for r in range(n_replicates):
        try:
            values[r] = float(estimator_runner(master.split("replicate", r)))
        except Exception as exc:
            raise RuntimeError(f"replicate {r} failed: {exc}") from exc
    mean = float(np.mean(values))
    variance = float(np.var(values, ddof=1))
    return ReplicateSummary(
        mean=mean,
        variance=variance,
        standard_error=float(np.sqrt(variance / n_replicates)),
        values=values,
    )
