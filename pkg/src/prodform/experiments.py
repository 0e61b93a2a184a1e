"""Desk-scale experiment implementations behind the CLI.

Every experiment takes a frozen config dataclass, runs deterministically
given its seed (replicate streams are pre-derived, so execution order cannot
change results), and returns its result rows; ``run_and_write`` additionally
emits CSV/NDJSON artifacts plus a manifest sufficient to reproduce the run
bit-for-bit.
"""

from __future__ import annotations

import dataclasses
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import (
    Ecdf,
    ks_statistic,
    reference_theta_posterior,
    theory_ratios,
    top_mass,
    w1_distance,
)
from .errors import RegimeError
from .factorized import (
    eval_sop,
    pfq_mean,
    taylor_bias,
    taylor_pf_asymptotic_variance,
    taylor_sop_exp,
    taylor_std_asymptotic_variance,
)
from .importance import ConditionalSamples, theta_marginal
from .mcmc import (
    GimhConfig,
    HierarchicalModel,
    LogRandomWalkProposal,
    gibbs_hierarchical,
    gimh_chain,
    rwm_chain,
)
from .mixtures import (
    MixtureComponent,
    MixtureOfProducts,
    allocation_asymptotic_variance,
    mixture_exact_moments,
    optimal_allocation,
    plain_exact_variance,
    proportional_allocation,
    stratified_estimate,
    stratified_exact_variance,
    stratified_pf_estimate,
    stratified_pf_exact_variance,
)
from .rng import Rng
from .samples import MarginalSamples
from .estimators import DiscreteProductTarget


class ConfigError(ValueError):
    """Invalid or unknown experiment configuration."""


def config_from_dict(cls, data: dict):
    """Build a config dataclass, rejecting unknown keys."""
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown config keys for {cls.__name__}: {unknown}")
    try:
        cfg = cls(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


# ---------------------------------------------------------------------------
# artifact writers


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(path: Path, columns, rows):
    """CSV with one leading comment line per column documenting its meaning."""
    lines = [f"# {name}: {desc}" for name, desc in columns]
    lines.append(",".join(name for name, _ in columns))
    for row in rows:
        lines.append(",".join(_fmt(row[name]) for name, _ in columns))
    path.write_text("\n".join(lines) + "\n")


def write_ndjson(path: Path, records):
    with path.open("w") as fp:
        for record in records:
            fp.write(json.dumps(record, sort_keys=True) + "\n")


def write_ecdf(path: Path, ecdf: Ecdf):
    with path.open("w") as fp:
        fp.write("# x F(x)\n")
        for x, c in zip(ecdf.atoms, ecdf.cum):
            fp.write(f"{x!r} {c!r}\n")


def write_manifest(outdir: Path, experiment: str, config):
    manifest = {
        "experiment": experiment,
        "config": dataclasses.asdict(config),
        "versions": {
            "prodform": __version__,
            "numpy": np.__version__,
            "scipy": __import__("scipy").__version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
        },
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# toy Gaussian


@dataclass(frozen=True)
class ToyGaussianConfig:
    n_blocks: int = 10
    n_samples: int = 1000
    n_replicates: int = 500
    seed: int = 0
    determinism: bool = True


def run_toy_gaussian(cfg: ToyGaussianConfig):
    """Standard vs product-form estimation of the mean of a coordinate
    product under unit-mean unit-variance Gaussian blocks."""
    k, n = cfg.n_blocks, cfg.n_samples
    master = Rng(cfg.seed)
    records = []
    for r in range(cfg.n_replicates):
        draws = 1.0 + master.split("replicate", r).standard_normal((n, k))
        standard = float(np.mean(np.prod(draws, axis=1)))
        product_form = float(np.prod(np.mean(draws, axis=0)))
        records.append(
            {"replicate": r, "standard": standard, "product_form": product_form}
        )
    std_values = np.array([rec["standard"] for rec in records])
    pf_values = np.array([rec["product_form"] for rec in records])
    summary = {
        "n_blocks": k,
        "n_samples": n,
        "n_replicates": cfg.n_replicates,
        "mean_standard": float(std_values.mean()),
        "mean_product_form": float(pf_values.mean()),
        "var_standard": float(std_values.var(ddof=1)),
        "var_product_form": float(pf_values.var(ddof=1)),
        "theory_var_standard": (2.0**k - 1.0) / n,
        "theory_var_product_form": k / n,
        "variance_ratio": float(std_values.var(ddof=1) / pf_values.var(ddof=1)),
        "theory_ratio": (2.0**k - 1.0) / k,
    }
    return {"records": records, "summary": summary}


def write_toy_gaussian(outdir: Path, cfg, result):
    write_ndjson(outdir / "replicates.ndjson", result["records"])
    columns = [
        ("n_blocks", "number of independent blocks K"),
        ("n_samples", "samples per block N"),
        ("n_replicates", "independent replicates R"),
        ("mean_standard", "mean of the standard estimator across replicates"),
        ("mean_product_form", "mean of the product-form estimator across replicates"),
        ("var_standard", "replicate variance of the standard estimator"),
        ("var_product_form", "replicate variance of the product-form estimator"),
        ("theory_var_standard", "(2^K - 1)/N"),
        ("theory_var_product_form", "K/N"),
        ("variance_ratio", "var_standard / var_product_form"),
        ("theory_ratio", "(2^K - 1)/K"),
    ]
    write_csv(outdir / "summary.csv", columns, [result["summary"]])


# ---------------------------------------------------------------------------
# tail indicator


@dataclass(frozen=True)
class TailConfig:
    alphas: tuple = (0.0, 1.0, 2.0)
    n_samples: int = 200
    n_replicates: int = 2000
    seed: int = 0
    determinism: bool = True


def run_tail(cfg: TailConfig):
    """Two-block joint tail indicator: empirical variance ratio of the
    standard to the product-form estimator against the closed form."""
    rows = []
    records = []
    for alpha in cfg.alphas:
        master = Rng(cfg.seed).split("alpha", f"{float(alpha)!r}")
        std_vals = np.empty(cfg.n_replicates)
        pf_vals = np.empty(cfg.n_replicates)
        for r in range(cfg.n_replicates):
            draws = master.split("replicate", r).standard_normal((cfg.n_samples, 2))
            hits = draws >= alpha
            std_vals[r] = float(np.mean(hits[:, 0] & hits[:, 1]))
            pf_vals[r] = float(np.mean(hits[:, 0]) * np.mean(hits[:, 1]))
            records.append(
                {
                    "alpha": float(alpha),
                    "replicate": r,
                    "standard": std_vals[r],
                    "product_form": pf_vals[r],
                }
            )
        ratio = float(std_vals.var(ddof=1) / pf_vals.var(ddof=1))
        rows.append(
            {
                "alpha": float(alpha),
                "var_standard": float(std_vals.var(ddof=1)),
                "var_product_form": float(pf_vals.var(ddof=1)),
                "empirical_ratio": ratio,
                "theory_ratio": theory_ratios("tail_indicator", alpha=float(alpha)),
            }
        )
    return {"records": records, "rows": rows}


def write_tail(outdir: Path, cfg, result):
    write_ndjson(outdir / "replicates.ndjson", result["records"])
    columns = [
        ("alpha", "tail threshold"),
        ("var_standard", "replicate variance of the standard estimator"),
        ("var_product_form", "replicate variance of the product-form estimator"),
        ("empirical_ratio", "var_standard / var_product_form"),
        ("theory_ratio", "(2 - Phi(alpha)) / (2 (1 - Phi(alpha)))"),
    ]
    write_csv(outdir / "summary.csv", columns, result["rows"])


# ---------------------------------------------------------------------------
# scaling curves and cost frontier


@dataclass(frozen=True)
class ScalingConfig:
    cvs: tuple = (0.5, 1.0, 2.0)
    max_blocks: int = 20
    epsilon: float = 0.01
    relative_cost: float = 1.0
    seed: int = 0
    determinism: bool = True


def run_scaling(cfg: ScalingConfig):
    """Closed-form variance-ratio growth with dimension for identical blocks
    and a product test function, plus the computational-efficiency frontier
    at a prescribed relative accuracy."""
    from .diagnostics import efficiency_frontier, efficiency_frontier_large_k

    rows = []
    for cv in cfg.cvs:
        for k in range(1, cfg.max_blocks + 1):
            sigma_sq = (1.0 + cv**2) ** k - 1.0
            sigma_sq_pf = cv**2 * k
            target = cfg.epsilon**2  # unit mean normalization
            try:
                frontier = efficiency_frontier(
                    sigma_sq, sigma_sq_pf, k, target, cfg.relative_cost
                )
                frontier_large_k = efficiency_frontier_large_k(
                    sigma_sq, sigma_sq_pf, k, target
                )
                regime = "permutation"
            except RegimeError:
                frontier = True  # a single draw already meets the accuracy
                frontier_large_k = True
                regime = "single_sample"
            rows.append(
                {
                    "cv": float(cv),
                    "n_blocks": k,
                    "theory_ratio": theory_ratios("iid_product", cv=cv, n_blocks=k),
                    "samples_needed_product_form": sigma_sq_pf / target,
                    "samples_needed_standard": sigma_sq / target,
                    "frontier_holds": frontier,
                    "frontier_holds_large_k": frontier_large_k,
                    "regime": regime,
                }
            )
    return {"rows": rows}


def write_scaling(outdir: Path, cfg, result):
    columns = [
        ("cv", "coefficient of variation of the per-block factor"),
        ("n_blocks", "dimension K"),
        ("theory_ratio", "((1+cv^2)^K - 1)/(cv^2 K)"),
        ("samples_needed_product_form", "cv^2 K / epsilon^2"),
        ("samples_needed_standard", "((1+cv^2)^K - 1) / epsilon^2"),
        ("frontier_holds", "product-form at least as cost-efficient (exact frontier)"),
        ("frontier_holds_large_k", "large-K frontier reduction"),
        ("regime", "permutation averaging vs single-sample regime"),
    ]
    write_csv(outdir / "summary.csv", columns, result["rows"])


# ---------------------------------------------------------------------------
# exp-of-product benchmark


@dataclass(frozen=True)
class TaylorConfig:
    interval_length: float = 1.5
    n_blocks: int = 10
    cutoff: int = -1  # -1 -> ceil(1.2 a^K) + 2
    n_samples: int = 1_000_000
    n_repeats: int = 20
    series_max_blocks: int = 10
    seed: int = 0
    determinism: bool = True

    def resolved_cutoff(self) -> int:
        if self.cutoff >= 0:
            return self.cutoff
        return math.ceil(1.2 * self.interval_length**self.n_blocks) + 2


def run_taylor(cfg: TaylorConfig):
    """Truncated-series product-form estimation of the mean of
    exp(x_1*...*x_K) under Uniform[0,a] blocks, against the exact
    hypergeometric value, with the standard estimator's collapse alongside."""
    a, k = cfg.interval_length, cfg.n_blocks
    cutoff = cfg.resolved_cutoff()
    exact_mean = pfq_mean(a, k)
    sop = taylor_sop_exp(cutoff, k)
    master = Rng(cfg.seed)
    records = []
    for r in range(cfg.n_repeats):
        stream = master.split("repeat", r)
        draws = a * stream.uniform((cfg.n_samples, k))
        marginals = MarginalSamples([draws[:, j] for j in range(k)])
        pf_value = eval_sop(marginals, sop).value
        log_products = np.sum(np.log(np.maximum(draws, 1e-300)), axis=1)
        std_value = float(np.mean(np.exp(np.exp(log_products))))
        records.append(
            {
                "repeat": r,
                "product_form": pf_value,
                "standard": std_value,
                "rel_err_product_form": abs(pf_value - exact_mean) / exact_mean,
                "rel_err_standard": abs(std_value - exact_mean) / exact_mean,
            }
        )
    pf_errs = np.array([rec["rel_err_product_form"] for rec in records])
    std_errs = np.array([rec["rel_err_standard"] for rec in records])
    summary = {
        "interval_length": a,
        "n_blocks": k,
        "cutoff": cutoff,
        "n_samples": cfg.n_samples,
        "n_repeats": cfg.n_repeats,
        "exact_mean": exact_mean,
        "mean_abs_rel_err_product_form": float(pf_errs.mean()),
        "mean_abs_rel_err_standard": float(std_errs.mean()),
        "relative_bias": taylor_bias(a, k, cutoff) / exact_mean,
        "sigma_sq_standard": taylor_std_asymptotic_variance(a, k),
        "sigma_sq_product_form": taylor_pf_asymptotic_variance(a, k, cutoff),
    }
    summary["variance_ratio"] = (
        summary["sigma_sq_standard"] / summary["sigma_sq_product_form"]
    )
    series_rows = []
    for kk in range(1, cfg.series_max_blocks + 1):
        j_low = math.ceil(0.8 * a**kk) + 2
        j_high = math.ceil(1.2 * a**kk) + 2
        mean_k = pfq_mean(a, kk)
        series_rows.append(
            {
                "n_blocks": kk,
                "exact_mean": mean_k,
                "cutoff_low": j_low,
                "cutoff_high": j_high,
                "rel_bias_low": taylor_bias(a, kk, j_low) / mean_k,
                "rel_bias_high": taylor_bias(a, kk, j_high) / mean_k,
                "sigma_sq_standard": taylor_std_asymptotic_variance(a, kk),
                "sigma_sq_product_form": taylor_pf_asymptotic_variance(a, kk, j_high),
                "ratio": taylor_std_asymptotic_variance(a, kk)
                / max(taylor_pf_asymptotic_variance(a, kk, j_high), 1e-300),
            }
        )
    return {"records": records, "summary": summary, "series_rows": series_rows}


def write_taylor(outdir: Path, cfg, result):
    write_ndjson(outdir / "repeats.ndjson", result["records"])
    columns = [
        ("interval_length", "uniform block upper end a"),
        ("n_blocks", "dimension K"),
        ("cutoff", "series truncation J"),
        ("n_samples", "samples per block N"),
        ("n_repeats", "independent repeats"),
        ("exact_mean", "exact integral via the hypergeometric series"),
        ("mean_abs_rel_err_product_form", "mean |estimate-exact|/exact, product-form"),
        ("mean_abs_rel_err_standard", "mean |estimate-exact|/exact, standard"),
        ("relative_bias", "series truncation bias over the exact mean"),
        ("sigma_sq_standard", "asymptotic variance of the standard estimator"),
        ("sigma_sq_product_form", "asymptotic variance of the truncated product-form estimator"),
        ("variance_ratio", "sigma_sq_standard / sigma_sq_product_form"),
    ]
    write_csv(outdir / "summary.csv", columns, [result["summary"]])
    series_columns = [
        ("n_blocks", "dimension K"),
        ("exact_mean", "exact integral"),
        ("cutoff_low", "ceil(0.8 a^K) + 2"),
        ("cutoff_high", "ceil(1.2 a^K) + 2"),
        ("rel_bias_low", "relative truncation bias at the low cutoff"),
        ("rel_bias_high", "relative truncation bias at the high cutoff"),
        ("sigma_sq_standard", "asymptotic variance, standard estimator"),
        ("sigma_sq_product_form", "asymptotic variance, truncated product-form"),
        ("ratio", "variance ratio"),
    ]
    write_csv(outdir / "series.csv", series_columns, result["series_rows"])


# ---------------------------------------------------------------------------
# hierarchical benchmark


HIERARCHICAL_METHODS = (
    "gibbs",
    "rwm",
    "is",
    "pfis",
    "is2",
    "pfis2",
    "gimh",
    "pfgimh",
)


@dataclass(frozen=True)
class HierarchicalConfig:
    n_observations: int = 100
    alpha: float = 1.0
    beta: float = 1.0
    n_inner: int = 100
    n_replicates: int = 10
    seed: int = 14
    data_theta: float = 1.0
    data_csv: str = ""
    methods: tuple = HIERARCHICAL_METHODS
    proposal_scale: float = 1.0
    determinism: bool = True


def _run_hierarchical_method(model, method, n_inner, stream, proposal_scale):
    """One method, one replicate; returns (Ecdf, extras dict)."""
    n = n_inner
    k = model.n_observations
    prior = model.prior
    if method == "gibbs":
        trace = gibbs_hierarchical(
            model, steps=n * n, seed=_stream_seed(stream), init_theta=None
        )
        thetas = trace.post_burn_in()[:, 0]
        return Ecdf(thetas), {"acceptance": 1.0}
    if method == "rwm":
        # Uninformed start: latents drawn from the kernel at the prior median.
        theta0 = model.default_init_theta()
        x0 = np.sqrt(theta0) * stream.split("init").standard_normal(k)
        init = np.concatenate([[theta0], x0])

        def log_density(state):
            return model.log_joint_density(state[0], state[1:])

        trace = rwm_chain(
            log_density,
            init,
            steps=n * n,
            seed=_stream_seed(stream),
            initial_scale=0.1,
        )
        thetas = trace.post_burn_in()[:, 0]
        return Ecdf(thetas), {"acceptance": trace.acceptance_rate}
    if method in ("is", "pfis"):
        weight = model.is_weight()
        if method == "is":
            m = n * n
            thetas = prior.sample(stream.split("thetas"), m)
            xs = stream.split("xs").standard_normal((m, k))
            particles = theta_marginal("is", weight, thetas=thetas, xs=xs)
        else:
            thetas = prior.sample(stream.split("thetas"), n)
            xs = stream.split("xs").standard_normal((n, k))
            particles = theta_marginal("pfis", weight, thetas=thetas, xs=xs)
        return (
            Ecdf.from_particles(particles),
            {
                "top1": top_mass(particles, 1),
                "top3": top_mass(particles, 3),
                "ess": particles.effective_sample_size(),
            },
        )
    if method in ("is2", "pfis2"):
        weight = model.is2_weight()
        thetas = prior.sample(stream.split("thetas"), n)
        noise = stream.split("xs").standard_normal((n, n, k))
        cs = ConditionalSamples(thetas, np.sqrt(thetas)[:, None, None] * noise)
        particles = theta_marginal("is2" if method == "is2" else "pfis2", weight, cs=cs)
        return (
            Ecdf.from_particles(particles),
            {
                "top1": top_mass(particles, 1),
                "top3": top_mass(particles, 3),
                "ess": particles.effective_sample_size(),
            },
        )
    if method in ("gimh", "pfgimh"):
        cfg = GimhConfig(
            n_inner=n,
            estimator="standard" if method == "gimh" else "product_form",
            steps=n,
            seed=_stream_seed(stream),
            proposal_scale=proposal_scale,
        )
        trace = gimh_chain(
            model.latent_kernel_sampler(),
            model.gimh_weight(),
            LogRandomWalkProposal(proposal_scale),
            cfg,
            init=model.default_init_theta(),
        )
        return Ecdf(trace.post_burn_in()), {"acceptance": trace.acceptance_rate}
    raise ConfigError(f"unknown method {method!r}")


def _stream_seed(stream: Rng) -> int:
    """Fold a stream's identity into a single integer seed for chain APIs."""
    return int(
        np.random.SeedSequence(
            entropy=stream.seed, spawn_key=stream.path
        ).generate_state(1, np.uint64)[0]
        % (2**63)
    )


def run_hierarchical(cfg: HierarchicalConfig):
    """The eight-method comparison on the one-parameter hierarchical model.

    Observations are generated once from the model at the configured latent
    variance (or loaded from CSV); replicates rerun every method with
    independent derived streams and score each approximation of the
    parameter marginal against the quadrature reference.
    """
    master = Rng(cfg.seed)
    if cfg.data_csv:
        y = np.loadtxt(cfg.data_csv, delimiter=",", ndmin=1)
        model = HierarchicalModel(y=y, alpha=cfg.alpha, beta=cfg.beta)
    else:
        model = HierarchicalModel.simulate(
            cfg.n_observations,
            cfg.data_theta,
            master.split("data"),
            alpha=cfg.alpha,
            beta=cfg.beta,
        )
    reference = reference_theta_posterior(model)
    rows = []
    ecdfs = {}
    for r in range(cfg.n_replicates):
        for method in cfg.methods:
            stream = master.split("replicate", r).split(method)
            ecdf, extras = _run_hierarchical_method(
                model, method, cfg.n_inner, stream, cfg.proposal_scale
            )
            w1 = w1_distance(ecdf, reference)
            row = {
                "replicate": r,
                "method": method,
                "w1": w1,
                "w1_over_ref_std": w1 / reference.std,
                "ks": ks_statistic(ecdf, reference),
                "mean_error": abs(ecdf.mean() - reference.mean) / abs(reference.mean),
                "std_error": abs(ecdf.std() - reference.std) / reference.std,
                "top1": extras.get("top1", float("nan")),
                "top3": extras.get("top3", float("nan")),
                "ess": extras.get("ess", float("nan")),
                "acceptance": extras.get("acceptance", float("nan")),
            }
            rows.append(row)
            ecdfs[(method, r)] = ecdf
    summary = []
    for method in cfg.methods:
        sub = [row for row in rows if row["method"] == method]
        summary.append(
            {
                "method": method,
                "mean_w1": float(np.mean([s["w1"] for s in sub])),
                "mean_w1_over_ref_std": float(np.mean([s["w1_over_ref_std"] for s in sub])),
                "mean_ks": float(np.mean([s["ks"] for s in sub])),
                "mean_mean_error": float(np.mean([s["mean_error"] for s in sub])),
                "mean_std_error": float(np.mean([s["std_error"] for s in sub])),
            }
        )
    return {
        "rows": rows,
        "summary": summary,
        "ecdfs": ecdfs,
        "reference": reference,
        "model": model,
    }


def write_hierarchical(outdir: Path, cfg, result):
    columns = [
        ("replicate", "replicate index"),
        ("method", "approximation method"),
        ("w1", "Wasserstein-1 distance to the quadrature reference"),
        ("w1_over_ref_std", "w1 normalized by the reference standard deviation"),
        ("ks", "Kolmogorov-Smirnov statistic against the reference"),
        ("mean_error", "relative error of the posterior-mean estimate"),
        ("std_error", "relative error of the posterior-std estimate"),
        ("top1", "largest normalized particle weight (particle methods)"),
        ("top3", "total mass of the three heaviest particles"),
        ("ess", "effective sample size of the particle weights"),
        ("acceptance", "acceptance rate (chain methods)"),
    ]
    write_csv(outdir / "results.csv", columns, result["rows"])
    summary_columns = [
        ("method", "approximation method"),
        ("mean_w1", "average W1 across replicates"),
        ("mean_w1_over_ref_std", "average normalized W1"),
        ("mean_ks", "average KS statistic"),
        ("mean_mean_error", "average relative posterior-mean error"),
        ("mean_std_error", "average relative posterior-std error"),
    ]
    write_csv(outdir / "summary.csv", summary_columns, result["summary"])
    write_ndjson(outdir / "results.ndjson", result["rows"])
    np.savetxt(outdir / "observations.csv", result["model"].y, delimiter=",")
    ref = result["reference"]
    with (outdir / "reference_cdf.txt").open("w") as fp:
        fp.write("# theta F(theta)\n")
        for x, c in zip(ref.grid, ref.cum):
            fp.write(f"{x!r} {c!r}\n")
    for (method, r), ecdf in result["ecdfs"].items():
        write_ecdf(outdir / f"ecdf_{method}_rep{r}.txt", ecdf)


# ---------------------------------------------------------------------------
# mixture demo


@dataclass(frozen=True)
class MixtureConfig:
    weights: tuple = (0.3, 0.7)
    n_total: int = 120
    n_replicates: int = 200
    seed: int = 0
    determinism: bool = True


def demo_mixture(weights) -> MixtureOfProducts:
    """Two-coordinate demo mixture: one fully factorized component and one
    correlated single-block component, both with discrete oracles."""
    weights = tuple(weights)
    comp_a = MixtureComponent(
        partition=((0,), (1,)),
        block_samplers=(
            lambda rng, n: FiniteDiscreteSampler([0.0, 1.0], [0.5, 0.5])(rng, n),
            lambda rng, n: FiniteDiscreteSampler([0.0, 2.0], [0.25, 0.75])(rng, n),
        ),
        oracle=DiscreteProductTarget(
            [([0.0, 1.0], [0.5, 0.5]), ([0.0, 2.0], [0.25, 0.75])]
        ),
    )
    joint_atoms = [(0.0, 0.0), (1.0, 2.0), (2.0, 1.0)]
    joint_probs = [0.2, 0.5, 0.3]
    comp_b = MixtureComponent(
        partition=((0, 1),),
        block_samplers=(JointAtomSampler(joint_atoms, joint_probs),),
        oracle=DiscreteProductTarget([(joint_atoms, joint_probs)]),
    )
    components = [comp_a, comp_b]
    if len(weights) != 2:
        raise ConfigError("the mixture demo uses exactly two components")
    return MixtureOfProducts(weights, components)


class FiniteDiscreteSampler:
    def __init__(self, points, probs):
        from .distributions import FiniteDiscrete

        self.dist = FiniteDiscrete(points, probs)

    def __call__(self, rng, n):
        return self.dist.sample(rng, n)[:, None]


class JointAtomSampler:
    def __init__(self, atoms, probs):
        self.atoms = np.asarray(atoms, dtype=float)
        self.cum = np.cumsum(np.asarray(probs, dtype=float))

    def __call__(self, rng, n):
        u = rng.uniform(n)
        idx = np.minimum(np.searchsorted(self.cum, u, side="right"), len(self.atoms) - 1)
        return self.atoms[idx]


def run_mixture(cfg: MixtureConfig):
    """Stratified vs product-form-stratified estimation on the demo mixture,
    with exact variances and the allocation comparison."""
    mix = demo_mixture(cfg.weights)
    phi = lambda point: point[0] * point[1] + point[0]
    _, _, mix_mean, _ = mixture_exact_moments(mix, phi)
    proportional = proportional_allocation(mix.weights, cfg.n_total)
    sigmas = np.sqrt([_component_pf_sigma(mix, phi, i) for i in range(mix.n_components)])
    optimal = optimal_allocation(mix.weights, sigmas, cfg.n_total)

    master = Rng(cfg.seed)
    records = []
    for r in range(cfg.n_replicates):
        stream = master.split("replicate", r)
        plain = stratified_estimate(mix, phi, cfg.n_total, proportional, stream.split("s"))
        pf = stratified_pf_estimate(mix, phi, cfg.n_total, proportional, stream.split("p"))
        records.append(
            {"replicate": r, "stratified": plain.value, "stratified_pf": pf.value}
        )
    strat_values = np.array([rec["stratified"] for rec in records])
    pf_values = np.array([rec["stratified_pf"] for rec in records])
    summary = {
        "exact_mean": mix_mean,
        "mean_stratified": float(strat_values.mean()),
        "mean_stratified_pf": float(pf_values.mean()),
        "replicate_var_stratified": float(strat_values.var(ddof=1)),
        "replicate_var_stratified_pf": float(pf_values.var(ddof=1)),
        "exact_var_stratified": stratified_exact_variance(mix, phi, proportional),
        "exact_var_stratified_pf": stratified_pf_exact_variance(mix, phi, proportional),
        "exact_var_plain": plain_exact_variance(mix, phi, cfg.n_total),
        "allocation_proportional": ",".join(str(int(v)) for v in proportional),
        "allocation_optimal": ",".join(str(int(v)) for v in optimal),
        "asym_var_proportional": allocation_asymptotic_variance(
            mix.weights, sigmas, proportional
        ),
        "asym_var_optimal": allocation_asymptotic_variance(mix.weights, sigmas, optimal),
    }
    return {"records": records, "summary": summary}


def _component_pf_sigma(mix, phi, i) -> float:
    """Per-component product-form asymptotic variance from the oracle."""
    from .estimators import asymptotic_variances
    from .functions import as_black_box
    from .mixtures import _component_phi

    component = mix.components[i]
    comp_phi = _component_phi(as_black_box(phi), component.partition, mix.n_coords)
    sigma_sq_pf, _ = asymptotic_variances(component.oracle, comp_phi)
    return sigma_sq_pf


def write_mixture(outdir: Path, cfg, result):
    write_ndjson(outdir / "replicates.ndjson", result["records"])
    summary = result["summary"]
    columns = [(name, name.replace("_", " ")) for name in summary]
    write_csv(outdir / "summary.csv", columns, [summary])


# ---------------------------------------------------------------------------
# registry


EXPERIMENTS = {
    "toy-gaussian": (ToyGaussianConfig, run_toy_gaussian, write_toy_gaussian),
    "tail": (TailConfig, run_tail, write_tail),
    "scaling": (ScalingConfig, run_scaling, write_scaling),
    "taylor": (TaylorConfig, run_taylor, write_taylor),
    "hierarchical": (HierarchicalConfig, run_hierarchical, write_hierarchical),
    "mixture": (MixtureConfig, run_mixture, write_mixture),
}


def run_and_write(experiment: str, config, outdir: Path, force: bool = False):
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    outdir = Path(outdir)
    if outdir.exists() and any(outdir.iterdir()) and not force:
        raise ConfigError(
            f"output directory {outdir} is not empty; pass --force to overwrite"
        )
    outdir.mkdir(parents=True, exist_ok=True)
    _, runner, writer = EXPERIMENTS[experiment]
    result = runner(config)
    write_manifest(outdir, experiment, config)
    writer(outdir, config, result)
    return result
