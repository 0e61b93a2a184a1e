"""Fast evaluation paths for structured test functions.

Sum-of-products functions evaluate in O(sum_k N_k) factor evaluations by
averaging each univariate factor separately; partially factorized functions
evaluate by variable elimination over sample-indexed tables. The module also
carries the power-series machinery for the exp-of-product benchmark: its
truncated SOP expansion, the generalized hypergeometric reference values for
the exact mean and variance, the truncation-bias tail series, and the double
series giving the truncated estimator's asymptotic variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import CapExceeded, EvaluationError
from .functions import FactorGraphFunction, SopFunction, power_factor
from .samples import Estimate, MarginalSamples

TABLE_CELL_CAP = 10**8


def eval_sop(marginals: MarginalSamples, f: SopFunction) -> Estimate:
    """Evaluate the product-form estimator of an SOP function via per-block
    factor averages: sum_j c_j prod_k mean_n f_jk(X^n_k)."""
    if f.n_blocks != marginals.n_blocks:
        raise ValueError(
            f"SOP is over {f.n_blocks} blocks but samples have {marginals.n_blocks}"
        )
    n_per_block = marginals.n_per_block
    means = np.empty((f.n_terms, f.n_blocks))
    for k in range(f.n_blocks):
        block = marginals.block(k)
        for j in range(f.n_terms):
            vals = np.asarray(f.factors[j][k](block), dtype=float)
            bad = np.flatnonzero(~np.isfinite(np.atleast_1d(vals)))
            if bad.size:
                raise EvaluationError(
                    f"factor (term {j}, block {k}) non-finite at sample {bad[0]}"
                )
            means[j, k] = np.sum(vals) / n_per_block[k]
    value = float(np.sum(f.term_coeffs * np.prod(means, axis=1)))
    return Estimate(
        value=value,
        n_phi_evals=f.n_terms * sum(n_per_block),
        n_samples_used=n_per_block,
        strategy="sop",
    )


@dataclass(frozen=True)
class EliminationPlan:
    """Order in which blocks are summed out, with the resulting width (the
    largest intermediate table scope, eliminated block included) and, when
    sample counts were supplied, the total predicted table size."""

    order: tuple[int, ...]
    width: int
    predicted_cost: int | None = None


def _interaction_graph(scopes, nodes):
    adjacency = {v: set() for v in nodes}
    for scope in scopes:
        inside = [k for k in scope if k in adjacency]
        for a in inside:
            for b in inside:
                if a != b:
                    adjacency[a].add(b)
    return adjacency


def plan_elimination(
    f: FactorGraphFunction,
    heuristic: str = "min_degree",
    keep=(),
    n_per_block=None,
) -> EliminationPlan:
    """Greedy elimination order over the factor interaction graph.

    ``keep`` lists blocks treated as outer/conditioned and never eliminated.
    Ties break toward the lowest block index so plans are deterministic.
    """
    if heuristic not in ("min_degree", "min_fill"):
        raise ValueError(f"unknown heuristic {heuristic!r}")
    keep = set(int(k) for k in keep)
    in_scope = sorted({k for scope in f.scopes() for k in scope})
    nodes = [k for k in in_scope if k not in keep]
    adjacency = _interaction_graph(f.scopes(), set(nodes) | (keep & set(in_scope)))

    counts = None
    if n_per_block is not None:
        counts = tuple(int(n) for n in n_per_block)

    order = []
    width = max((len(s) for s in f.scopes()), default=0)
    cost = 0
    remaining = set(nodes)
    while remaining:
        if heuristic == "min_degree":
            score = {v: len(adjacency[v] & (remaining | keep)) for v in remaining}
        else:
            score = {}
            for v in remaining:
                neigh = sorted(adjacency[v] & (remaining | keep))
                fill = sum(
                    1
                    for i, a in enumerate(neigh)
                    for b in neigh[i + 1 :]
                    if b not in adjacency[a]
                )
                score[v] = fill
        chosen = min(remaining, key=lambda v: (score[v], v))
        cluster = (adjacency[chosen] & (remaining | keep)) | {chosen}
        width = max(width, len(cluster))
        if counts is not None:
            size = 1
            for k in cluster:
                size *= counts[k]
            cost += size
        neigh = cluster - {chosen}
        for a in neigh:
            adjacency[a] |= neigh - {a}
            adjacency[a].discard(chosen)
        remaining.discard(chosen)
        order.append(chosen)
    return EliminationPlan(
        order=tuple(order),
        width=width,
        predicted_cost=cost if counts is not None else None,
    )


def _factor_table(marginals, scope, fn):
    """Tabulate a factor on the mesh of sample values over its scope."""
    grids = np.meshgrid(
        *[marginals.block(k) for k in scope], indexing="ij", copy=False
    )
    return np.asarray(fn(*grids), dtype=float)


def _align(table, axes, target_axes):
    """Broadcast a table over ``axes`` into the space of ``target_axes``."""
    expanded = table
    for pos, axis in enumerate(target_axes):
        if axis not in axes:
            expanded = np.expand_dims(expanded, pos)
    return expanded


def eval_eliminated(
    marginals: MarginalSamples,
    f: FactorGraphFunction,
    plan: EliminationPlan | None = None,
    cell_cap: int = TABLE_CELL_CAP,
) -> Estimate:
    """Product-form estimate of a factor-graph function by contracting
    sample-indexed tables in plan order.

    Summing a block's axis with weight 1/N_k is an average, so fully
    eliminating every block in scope yields the permutation average exactly.
    Memory is bounded by the widest intermediate table.
    """
    if f.n_blocks != marginals.n_blocks:
        raise ValueError("factor graph and samples disagree on block count")
    if any(marginals.block(k).ndim != 1 for k in range(marginals.n_blocks)):
        raise ValueError("variable elimination requires scalar blocks")
    if plan is None:
        plan = plan_elimination(f, n_per_block=marginals.n_per_block)
    in_scope = {k for scope in f.scopes() for k in scope}
    if set(plan.order) != in_scope:
        raise ValueError("plan does not cover every block appearing in a scope")
    counts = marginals.n_per_block

    n_evals = 0
    tables = []
    for scope, fn in f.factors:
        table = _factor_table(marginals, scope, fn)
        n_evals += table.size
        tables.append((tuple(scope), table))

    scalar = 1.0
    for k in plan.order:
        touching = [t for t in tables if k in t[0]]
        tables = [t for t in tables if k not in t[0]]
        union = tuple(sorted(set().union(*(set(axes) for axes, _ in touching))))
        cells = 1
        for axis in union:
            cells *= counts[axis]
        if cells > cell_cap:
            raise CapExceeded(
                f"eliminating block {k} needs a table of {cells} cells (cap {cell_cap})"
            )
        merged = np.ones([counts[axis] for axis in union])
        for axes, table in touching:
            merged = merged * _align(table, axes, union)
        pos = union.index(k)
        reduced = merged.mean(axis=pos)
        new_axes = tuple(a for a in union if a != k)
        if new_axes:
            tables.append((new_axes, reduced))
        else:
            scalar *= float(reduced)
    for axes, table in tables:
        if axes:
            raise ValueError(f"plan left axes {axes} uneliminated")
        scalar *= float(table)
    return Estimate(
        value=scalar,
        n_phi_evals=n_evals,
        n_samples_used=counts,
        strategy="eliminate",
    )


def taylor_sop_exp(cutoff: int, n_blocks: int) -> SopFunction:
    """Truncated power-series SOP for exp(x_1 * ... * x_K).

    Term j carries the factor x -> x^j in every block with coefficient 1/j!;
    term 0 is the constant 1.
    """
    if cutoff < 0:
        raise ValueError("cutoff must be >= 0")
    factors = [[power_factor(j)] * n_blocks for j in range(cutoff + 1)]
    coeffs = [1.0 / math.factorial(j) for j in range(cutoff + 1)]
    return SopFunction(factors, coeffs)


def _series_log_sum(log_term, start: int, tol: float, max_terms: int = 200_000) -> float:
    """Log of sum_{j>=start} exp(log_term(j)) with a relative stopping rule:
    stop once terms decay (ratio < 1) and the current term is below
    tol * partial sum."""
    log_sum = -np.inf
    prev = -np.inf
    for j in range(start, start + max_terms):
        lt = log_term(j)
        log_sum = np.logaddexp(log_sum, lt)
        if lt < prev and lt < log_sum + np.log(tol):
            return log_sum
        prev = lt
    raise CapExceeded(f"series did not meet tolerance {tol} within {max_terms} terms")


def _pfq_ones_twos_log(z: float, n_blocks: int, tol: float, start: int = 0) -> float:
    """log sum_{j>=start} z^j / (j! (j+1)^K), accumulated in log domain."""
    if z <= 0:
        raise ValueError("series argument must be positive")
    log_z = np.log(z)

    def log_term(j):
        return j * log_z - gammaln(j + 1) - n_blocks * np.log(j + 1.0)

    return _series_log_sum(log_term, start, tol)


def pfq_mean(a: float, n_blocks: int, tol: float = 1e-12) -> float:
    """Exact mean of exp(x_1*...*x_K) under independent Uniform[0, a] blocks,
    i.e. the generalized hypergeometric series with unit numerator and
    all-twos denominator parameters evaluated at a^K."""
    if a <= 0:
        raise ValueError("interval length must be positive")
    if tol <= 0:
        raise ValueError("tol must be positive")
    with np.errstate(over="ignore"):  # inf is the honest answer at huge a^K
        return float(np.exp(_pfq_ones_twos_log(a**n_blocks, n_blocks, tol)))


def taylor_std_asymptotic_variance(a: float, n_blocks: int, tol: float = 1e-12) -> float:
    """Asymptotic variance of the standard estimator for exp(x_1*...*x_K):
    the doubled-argument series minus the squared mean."""
    z = a**n_blocks
    log_second = _pfq_ones_twos_log(2.0 * z, n_blocks, tol)
    log_mean = _pfq_ones_twos_log(z, n_blocks, tol)
    return float(np.exp(log_second) - np.exp(2.0 * log_mean))


def taylor_bias(a: float, n_blocks: int, cutoff: int, tol: float = 1e-12) -> float:
    """Truncation bias of the cutoff-J SOP estimator: the positive tail
    series from j = J+1 on. Decreasing in the cutoff."""
    if cutoff < 0:
        raise ValueError("cutoff must be >= 0")
    return float(np.exp(_pfq_ones_twos_log(a**n_blocks, n_blocks, tol, start=cutoff + 1)))


def taylor_pf_asymptotic_variance(a: float, n_blocks: int, cutoff: int) -> float:
    """Asymptotic variance of the product-form estimator of the truncated
    series: K times a double power series over term pairs, evaluated in log
    domain to survive the huge dynamic range."""
    if cutoff < 0:
        raise ValueError("cutoff must be >= 0")
    if cutoff == 0:
        return 0.0
    idx = np.arange(cutoff + 1, dtype=float)
    i_grid, j_grid = np.meshgrid(idx, idx, indexing="ij")
    with np.errstate(divide="ignore"):
        log_terms = (
            -gammaln(i_grid + 1)
            - gammaln(j_grid + 1)
            + np.log(i_grid * j_grid / (i_grid + j_grid + 1.0))
            + n_blocks
            * ((i_grid + j_grid) * np.log(a) - np.log((i_grid + 1.0) * (j_grid + 1.0)))
        )
    log_terms[(i_grid == 0) | (j_grid == 0)] = -np.inf
    peak = log_terms.max()
    return float(n_blocks * np.exp(peak) * np.exp(log_terms - peak).sum())
