import itertools
import math

import numpy as np
import pytest

from prodform import (
    BlackBox,
    ConditionalSamples,
    DegeneracyError,
    DiscreteProductTarget,
    LogWeightModel,
    MarginalSamples,
    Rng,
    SopFunction,
    WeightedParticles,
    brute_force_oracle,
    conditional_oracle,
    mn_average_exact_variance,
    pf_is_estimate,
    pf_snis_estimate,
    ppf_estimate,
    ppf_exact_variance,
    product_form_estimate,
    product_of_coordinates,
    standard_estimate,
    theta_marginal,
)

PROD_2 = product_of_coordinates(2)


def unit_weight(n_blocks):
    zero = lambda t, x: np.zeros_like(np.asarray(x, dtype=float))
    return LogWeightModel.factorized([zero] * n_blocks)


def table_weight_2(values):
    """Factorized positive weight on two scalar blocks from per-block maps."""
    maps = [dict(v) for v in values]

    def term(k):
        def fn(theta, x):
            x = np.atleast_1d(np.asarray(x, dtype=float))
            return np.log([maps[k][float(v)] for v in x])

        return fn

    return LogWeightModel.factorized([term(0), term(1)])


def test_pf_is_unit_weight_reduces():
    ms = MarginalSamples([[0.0, 1.0], [0.0, 2.0]])
    for strategy in ("brute_force", "sop"):
        est = pf_is_estimate(ms, unit_weight(2), PROD_2, strategy=strategy)
        assert est.value == pytest.approx(0.5, rel=1e-14)


def test_pf_is_constant_phi_hand_grid():
    # K=2, N=2 grid: value must equal exp(g0) * prod_k mean_n exp(g_k)
    g0 = 0.3

    def g(theta, x):
        return 0.25 * np.asarray(x, dtype=float) - 0.1

    w = LogWeightModel.factorized([g, g], theta_term=lambda t: g0)
    blocks = [[0.2, 1.4], [-0.6, 0.9]]
    ms = MarginalSamples(blocks)
    one = SopFunction([[lambda x: np.ones_like(np.asarray(x, dtype=float))] * 2])
    est = pf_is_estimate(ms, w, one, strategy="sop")
    expected = math.exp(g0)
    for k in range(2):
        expected *= np.mean([math.exp(0.25 * v - 0.1) for v in blocks[k]])
    assert est.value == pytest.approx(expected, rel=1e-12)
    brute = pf_is_estimate(ms, w, BlackBox(lambda p: 1.0), strategy="brute_force")
    assert brute.value == pytest.approx(expected, rel=1e-12)


def test_pf_is_unbiased_via_oracle():
    target = DiscreteProductTarget([([0.0, 1.0], [0.4, 0.6]), ([0.0, 2.0], [0.7, 0.3])])
    w = table_weight_2([{0.0: 0.5, 1.0: 2.0}, {0.0: 1.5, 2.0: 0.25}])
    phi = PROD_2
    oracle = brute_force_oracle(
        target, (2, 2), lambda s: pf_is_estimate(s, w, phi).value
    )
    # gamma(phi) = sum_x p(x) w(x) phi(x)
    expected = 0.0
    for (i, x1), (j, x2) in itertools.product(
        enumerate([0.0, 1.0]), enumerate([0.0, 2.0])
    ):
        p = target.probs(0)[i] * target.probs(1)[j]
        weight = {0.0: 0.5, 1.0: 2.0}[x1] * {0.0: 1.5, 2.0: 0.25}[x2]
        expected += p * weight * x1 * x2
    assert oracle.exact_mean == pytest.approx(expected, abs=1e-12)


def test_pf_is_variance_never_exceeds_standard_is():
    target = DiscreteProductTarget([([0.0, 1.0], [0.4, 0.6]), ([0.0, 2.0], [0.7, 0.3])])
    w = table_weight_2([{0.0: 0.5, 1.0: 2.0}, {0.0: 1.5, 2.0: 0.25}])
    joint = w  # same weight evaluated jointly

    def standard_is(samples):
        joints = np.column_stack([samples.block(0), samples.block(1)])
        weighted = [
            math.exp(joint.log_weight(None, row)) * row[0] * row[1] for row in joints
        ]
        return float(np.mean(weighted))

    pf = brute_force_oracle(target, (2, 2), lambda s: pf_is_estimate(s, w, PROD_2).value)
    std = brute_force_oracle(target, (2, 2), standard_is)
    assert pf.exact_mean == pytest.approx(std.exact_mean, abs=1e-12)
    assert pf.exact_variance <= std.exact_variance + 1e-13


def test_snis_unit_weight_and_constant_phi(nprng):
    ms = MarginalSamples([nprng.normal(size=3), nprng.normal(size=4)])
    est = pf_snis_estimate(ms, unit_weight(2), PROD_2)
    plain = product_form_estimate(ms, PROD_2)
    assert est.value == pytest.approx(plain.value, rel=1e-12)
    w = table_weight_2([{0.0: 0.5, 1.0: 2.0}, {0.0: 1.5, 2.0: 0.25}])
    ms2 = MarginalSamples([[0.0, 1.0], [0.0, 2.0]])
    const = pf_snis_estimate(ms2, w, BlackBox(lambda p: 7.0))
    assert const.value == pytest.approx(7.0, rel=1e-12)


def test_snis_scale_invariance(nprng):
    base = lambda t, x: 0.3 * np.asarray(x, dtype=float)
    shifted = lambda t, x: 0.3 * np.asarray(x, dtype=float) + 123.4
    ms = MarginalSamples([nprng.normal(size=3), nprng.normal(size=3)])
    w1 = LogWeightModel.factorized([base, base])
    w2 = LogWeightModel.factorized([shifted, shifted])
    a = pf_snis_estimate(ms, w1, PROD_2).value
    b = pf_snis_estimate(ms, w2, PROD_2).value
    assert a == pytest.approx(b, rel=1e-10)


def test_snis_matches_enumerated_ratio(nprng):
    w = table_weight_2([{0.0: 0.5, 1.0: 2.0}, {0.0: 1.5, 2.0: 0.25}])
    ms = MarginalSamples([[0.0, 1.0, 1.0], [2.0, 0.0]])
    est = pf_snis_estimate(ms, w, PROD_2)
    num = den = 0.0
    for i, j in itertools.product(range(3), range(2)):
        x = (ms.block(0)[i], ms.block(1)[j])
        weight = math.exp(w.log_weight(None, x))
        num += weight * x[0] * x[1]
        den += weight
    assert est.value == pytest.approx(num / den, rel=1e-12)


def test_snis_joint_weight_path(nprng):
    w_joint = LogWeightModel.from_joint(
        lambda t, x: 0.2 * float(x[0]) - 0.1 * float(x[1])
    )
    ms = MarginalSamples([nprng.normal(size=3), nprng.normal(size=3)])
    est = pf_snis_estimate(ms, w_joint, PROD_2)
    num = den = 0.0
    for i, j in itertools.product(range(3), range(3)):
        x = (ms.block(0)[i], ms.block(1)[j])
        weight = math.exp(0.2 * x[0] - 0.1 * x[1])
        num += weight * x[0] * x[1]
        den += weight
    assert est.value == pytest.approx(num / den, rel=1e-12)


def test_snis_degeneracy_error():
    w = LogWeightModel.factorized(
        [lambda t, x: np.full(np.shape(np.atleast_1d(x)), -np.inf)] * 2
    )
    ms = MarginalSamples([[0.0, 1.0], [0.0, 1.0]])
    with pytest.raises(DegeneracyError):
        pf_snis_estimate(ms, w, PROD_2)


# ---------------------------------------------------------------------------
# partially product-form estimator


def test_ppf_single_outer_matches_product_form():
    cs = ConditionalSamples([0.3], np.array([[[0.0, 0.0], [1.0, 2.0]]]))
    est = ppf_estimate(cs, lambda t, x: x[0] * x[1])
    assert est.value == 0.5


def test_ppf_single_block_is_plain_average(nprng):
    thetas = nprng.normal(size=3)
    x = nprng.normal(size=(3, 4, 1))
    est = ppf_estimate(cs := ConditionalSamples(thetas, x), lambda t, p: t + p[0])
    expected = np.mean([np.mean(thetas[m] + x[m, :, 0]) for m in range(3)])
    assert est.value == pytest.approx(expected, rel=1e-12)


def test_ppf_hand_grid():
    thetas = [2.0, -1.0]
    x = np.array(
        [[[1.0, 2.0], [3.0, 4.0]], [[0.5, 1.0], [1.5, 2.0]]]
    )  # (M=2, N=2, K=2)
    est = ppf_estimate(ConditionalSamples(thetas, x), lambda t, p: t * p[0] * p[1])
    # enumerate the 2 * 2^2 permuted tuples per outer draw
    expected = 0.0
    for m, theta in enumerate(thetas):
        inner = 0.0
        for i, j in itertools.product(range(2), range(2)):
            inner += theta * x[m, i, 0] * x[m, j, 1]
        expected += inner / 4.0
    expected /= 2.0
    assert est.value == pytest.approx(expected, rel=1e-13)


def test_ppf_duplicate_parameters_rejected():
    with pytest.raises(ValueError, match="duplicate"):
        ConditionalSamples([1.0, 1.0], np.zeros((2, 2, 2)))


THETA_POINTS = [0.5, 2.0]
THETA_PROBS = [0.4, 0.6]
KERNELS = [
    DiscreteProductTarget([([0.0, 1.0], [0.5, 0.5]), ([0.0, 2.0], [0.25, 0.75])]),
    DiscreteProductTarget([([1.0, 2.0], [0.6, 0.4]), ([0.0, 1.0], [0.3, 0.7])]),
]


def phi_theta_xy(theta, point):
    return theta * point[0] * point[1] + point[0]


def test_ppf_variance_theta_only_phi():
    phi = lambda theta, point: theta * theta
    m_outer = 3
    value = ppf_exact_variance(THETA_POINTS, THETA_PROBS, KERNELS, phi, m_outer, 2)
    means = np.array([t * t for t in THETA_POINTS])
    mu = means @ THETA_PROBS
    expected = float(np.array(THETA_PROBS) @ (means - mu) ** 2) / m_outer
    assert value == pytest.approx(expected, abs=1e-13)


def test_ppf_variance_single_block_matches_two_level_formula():
    kernels_1d = [
        DiscreteProductTarget([([0.0, 1.0], [0.5, 0.5])]),
        DiscreteProductTarget([([1.0, 3.0], [0.2, 0.8])]),
    ]
    phi = lambda theta, point: theta + point[0] ** 2
    n_inner = 3
    value = ppf_exact_variance(THETA_POINTS, THETA_PROBS, kernels_1d, phi, 1, n_inner)
    # mu_0([M phi - mu]^2) + mu_0(M[phi - M phi]^2)/N, all by direct moments
    kernel_means, kernel_vars = [], []
    for theta, kernel in zip(THETA_POINTS, kernels_1d):
        vals = np.array([phi(theta, (a,)) for a in kernel.atoms(0)])
        mean = float(kernel.probs(0) @ vals)
        kernel_means.append(mean)
        kernel_vars.append(float(kernel.probs(0) @ (vals - mean) ** 2))
    kernel_means = np.array(kernel_means)
    probs = np.array(THETA_PROBS)
    mu = probs @ kernel_means
    expected = float(probs @ (kernel_means - mu) ** 2) + float(
        probs @ kernel_vars
    ) / n_inner
    assert value == pytest.approx(expected, abs=1e-13)


def test_ppf_variance_matches_conditional_oracle():
    m_outer, n_inner = 2, 2

    def estimator(thetas, x):
        total = 0.0
        for m, theta in enumerate(thetas):
            inner = 0.0
            for i, j in itertools.product(range(n_inner), range(n_inner)):
                inner += phi_theta_xy(theta, (x[m, i, 0], x[m, j, 1]))
            total += inner / n_inner**2
        return total / m_outer

    oracle = conditional_oracle(
        THETA_POINTS, THETA_PROBS, KERNELS, estimator, m_outer, n_inner
    )
    formula = ppf_exact_variance(
        THETA_POINTS, THETA_PROBS, KERNELS, phi_theta_xy, m_outer, n_inner
    )
    assert formula == pytest.approx(oracle.exact_variance, abs=1e-12)
    # unbiasedness of the two-level estimator
    means = []
    for theta, kernel in zip(THETA_POINTS, KERNELS):
        vals = kernel.value_tensor(BlackBox(lambda p, t=theta: phi_theta_xy(t, p)))
        w = np.outer(kernel.probs(0), kernel.probs(1))
        means.append(float(np.sum(w * vals)))
    assert oracle.exact_mean == pytest.approx(
        float(np.array(THETA_PROBS) @ means), abs=1e-12
    )


def test_ppf_variance_ordering_against_plain_average():
    pf = ppf_exact_variance(THETA_POINTS, THETA_PROBS, KERNELS, phi_theta_xy, 2, 2)
    plain = mn_average_exact_variance(
        THETA_POINTS, THETA_PROBS, KERNELS, phi_theta_xy, 2, 2
    )
    assert pf <= plain + 1e-13


# ---------------------------------------------------------------------------
# parameter-marginal particle approximations


def hier_block_term(y_k):
    return lambda theta, x: -0.5 * (np.asarray(x, dtype=float) - y_k) ** 2


def test_theta_marginal_unit_weight_uniform():
    w = unit_weight(3)
    thetas = np.array([0.1, 0.7, 1.3, 2.0])
    xs = np.zeros((4, 3))
    x_cond = np.zeros((4, 2, 3))
    for method, kwargs in [
        ("is", dict(thetas=thetas, xs=xs)),
        ("pfis", dict(thetas=thetas, xs=xs)),
        ("is2", dict(cs=ConditionalSamples(thetas, x_cond))),
        ("pfis2", dict(cs=ConditionalSamples(thetas, x_cond))),
    ]:
        particles = theta_marginal(method, w, **kwargs)
        assert np.allclose(particles.normalized_weights(), 0.25, atol=1e-12)


def test_pfis_matches_brute_force_permutation_sum(nprng):
    for k_blocks, n in [(2, 3), (3, 4)]:
        w = LogWeightModel.factorized(
            [hier_block_term(float(nprng.normal())) for _ in range(k_blocks)],
            theta_term=lambda t: -0.1 * t,
        )
        thetas = nprng.normal(size=n)
        xs = nprng.normal(size=(n, k_blocks))
        particles = theta_marginal("pfis", w, thetas=thetas, xs=xs)
        for m, theta in enumerate(thetas):
            brute = 0.0
            for combo in itertools.product(range(n), repeat=k_blocks):
                point = [xs[combo[k], k] for k in range(k_blocks)]
                brute += math.exp(w.log_weight(theta, point))
            assert particles.log_weights[m] == pytest.approx(
                math.log(brute), rel=1e-10
            )


def test_pfis_single_block_is_pooled_is(nprng):
    # with one block the permutation set is just the pooled x-samples, so
    # the PFIS atom weight is the plain IS aggregate over all (theta, x) pairs
    w = LogWeightModel.factorized([hier_block_term(0.4)])
    thetas = nprng.normal(size=5)
    xs = nprng.normal(size=(5, 1))
    b = theta_marginal("pfis", w, thetas=thetas, xs=xs)
    for m, theta in enumerate(thetas):
        pooled = sum(math.exp(w.log_weight(theta, (x,))) for x in xs[:, 0])
        assert b.log_weights[m] == pytest.approx(math.log(pooled), rel=1e-12)


def test_pfis2_matches_brute_force_inner_sum(nprng):
    k_blocks, m_outer, n = 2, 3, 3
    w = LogWeightModel.factorized(
        [hier_block_term(0.2), hier_block_term(-0.7)]
    )
    thetas = nprng.normal(size=m_outer)
    x = nprng.normal(size=(m_outer, n, k_blocks))
    cs = ConditionalSamples(thetas, x)
    particles = theta_marginal("pfis2", w, cs=cs)
    for m in range(m_outer):
        brute = 0.0
        for combo in itertools.product(range(n), repeat=k_blocks):
            point = [x[m, combo[k], k] for k in range(k_blocks)]
            brute += math.exp(w.log_weight(thetas[m], point))
        assert particles.log_weights[m] == pytest.approx(math.log(brute), rel=1e-10)


def test_theta_marginal_requires_factorized_weight_for_pf():
    w = LogWeightModel.from_joint(lambda t, x: 0.0)
    with pytest.raises(ValueError, match="factorized"):
        theta_marginal("pfis", w, thetas=np.arange(3.0), xs=np.zeros((3, 2)))


def test_weighted_particles_degeneracy_and_validation():
    with pytest.raises(DegeneracyError):
        WeightedParticles(np.arange(3.0), np.full(3, -np.inf))
    with pytest.raises(ValueError):
        WeightedParticles(np.arange(2.0), np.array([0.0, np.nan]))
    particles = WeightedParticles(np.arange(3.0), np.log([0.2, 0.3, 0.5]))
    assert particles.normalized_weights().sum() == pytest.approx(1.0, abs=1e-12)
    assert particles.effective_sample_size() == pytest.approx(
        1.0 / (0.04 + 0.09 + 0.25), rel=1e-12
    )
