"""Monte Carlo scoring of decisions against benchmark oracles.

Seeds fan out as follows for an episode seed ``s`` and context index ``c``:

* dataset:   ``derive_seed(s, DATASET)``
* context:   ``derive_seed(s, CONTEXT, c)``
* scoring:   ``derive_seed(s, SCORING, c)``, shared by every method so that
  methods are compared on common random numbers.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from . import rng
from .benchmarks import BenchmarkOracle, get_benchmark
from .estimator import EstimatorConfig, fit, fit_conditional
from .optimizer import OptimizerConfig, optimize
from .region import PolytopeRegion, SmoothedDesirability, std_normal_cdf, std_normal_pdf

log = logging.getLogger(__name__)

METHODS = ("none", "nested", "conditional")
TABLE_BENCHMARKS = ("lin_syn1", "non_syn1", "non_syn2", "bank_exp")

# Per-benchmark hyperparameters: median-heuristic bandwidths times these scales,
# tuned on seeds 100-102 (disjoint from the reporting seeds 0-4).
DEFAULT_ESTIMATOR_CONFIGS: dict[str, EstimatorConfig] = {
    "lin_syn1": EstimatorConfig(bandwidth_scale={"a": 0.2, "x": 3.0, "u": 2.0}),
    "non_syn1": EstimatorConfig(bandwidth_scale={"x": 0.2}),
    "non_syn2": EstimatorConfig(bandwidth_scale={"a": 0.3, "x": 0.15}),
    "bank_exp": EstimatorConfig(lambda_h=0.02, bandwidth_scale={"a": 0.5, "x": 2.0, "u": 2.0}),
}


def default_estimator_config(bench_id: str) -> EstimatorConfig:
    return DEFAULT_ESTIMATOR_CONFIGS.get(bench_id, EstimatorConfig())


def auf_probability(outcomes, region: PolytopeRegion) -> float:
    outcomes = np.asarray(outcomes, dtype=float)
    if outcomes.shape[0] < 1:
        raise ValueError("need at least one outcome draw")
    return float(np.mean(region.contains(outcomes)))


@dataclass(frozen=True)
class EpisodeResult:
    benchmark: str
    method: str
    seed: int
    context_index: int
    context: tuple
    action: Optional[tuple]
    successes: int
    mc_trials: int
    j_star: Optional[float] = None

    @property
    def auf_probability(self) -> float:
        return self.successes / self.mc_trials

    def to_dict(self) -> dict:
        return {
            "benchmark": self.benchmark,
            "method": self.method,
            "seed": self.seed,
            "context_index": self.context_index,
            "context": list(self.context),
            "action": None if self.action is None else list(self.action),
            "auf_probability": self.auf_probability,
            "successes": self.successes,
            "mc_trials": self.mc_trials,
            "j_star": self.j_star,
        }


def run_episode(oracle: BenchmarkOracle, method: str,
                est_config: Optional[EstimatorConfig] = None,
                opt_config: Optional[OptimizerConfig] = None,
                seed: int = 0, contexts_per_seed: int = 10, mc_trials: int = 100,
                n: int = 1000) -> list[EpisodeResult]:
    """Fit once on a fresh observational sample, then decide and score per context."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    est_config = est_config or default_estimator_config(oracle.id)
    opt_config = opt_config or OptimizerConfig()

    est = None
    if method != "none":
        data = oracle.generate_observational(n, rng.derive_seed(seed, rng.DATASET))
        fitter = fit if method == "nested" else fit_conditional
        est = fitter(data, oracle.region, est_config)

    results = []
    for c in range(contexts_per_seed):
        x = oracle.sample_context(rng.derive_seed(seed, rng.CONTEXT, c))
        score_seed = rng.derive_seed(seed, rng.SCORING, c)
        if est is None:
            Y = oracle.sample_baseline(x, mc_trials, score_seed)
            action, j_star = None, None
        else:
            w = est.context_weights(x)
            decision = optimize(est, w, oracle.box, opt_config)
            Y = oracle.sample_alterational(x, decision.a_star, mc_trials, score_seed)
            action, j_star = tuple(float(v) for v in decision.a_star), decision.j_star
        successes = int(np.sum(oracle.region.contains(Y)))
        results.append(EpisodeResult(
            benchmark=oracle.id, method=method, seed=int(seed), context_index=c,
            context=tuple(float(v) for v in x), action=action, successes=successes,
            mc_trials=mc_trials, j_star=j_star,
        ))
    return results


@dataclass(frozen=True)
class AggregateRow:
    benchmark: str
    method: str
    mean: float
    std: float  # across per-seed means
    context_std: float  # across all episodes
    seeds: int
    episodes: int
    seed_means: tuple = field(default=())

    def to_dict(self) -> dict:
        return {
            "benchmark": self.benchmark,
            "method": self.method,
            "mean": self.mean,
            "std": self.std,
            "context_std": self.context_std,
            "seeds": self.seeds,
            "episodes": self.episodes,
        }


def aggregate(results: Sequence[EpisodeResult]) -> list[AggregateRow]:
    """Per-seed means first, then mean and std across seeds, per (benchmark, method)."""
    groups: dict[tuple, dict[int, list[float]]] = {}
    for r in results:
        groups.setdefault((r.benchmark, r.method), {}).setdefault(r.seed, []).append(r.auf_probability)
    rows = []
    for (bench, method), by_seed in groups.items():
        seeds = sorted(by_seed)
        seed_means = np.array([np.mean(by_seed[s]) for s in seeds])
        every = np.array(sorted(v for s in seeds for v in by_seed[s]))
        rows.append(AggregateRow(
            benchmark=bench, method=method,
            mean=float(np.mean(seed_means)), std=float(np.std(seed_means)),
            context_std=float(np.std(every)), seeds=len(seeds), episodes=int(every.size),
            seed_means=tuple(float(v) for v in seed_means),
        ))
    return rows


def reproduce_table(benchmarks: Sequence[str] = TABLE_BENCHMARKS,
                    methods: Sequence[str] = ("none", "nested"),
                    seeds: Sequence[int] = range(5), contexts_per_seed: int = 10,
                    mc_trials: int = 100, n: int = 1000,
                    opt_config: Optional[OptimizerConfig] = None,
                    est_configs: Optional[dict] = None,
                    noise: Optional[str] = None) -> tuple[list[AggregateRow], list[EpisodeResult]]:
    episodes: list[EpisodeResult] = []
    for bench in benchmarks:
        oracle = get_benchmark(bench, noise)
        cfg = (est_configs or {}).get(oracle.id) or default_estimator_config(oracle.id)
        for method in methods:
            for s in seeds:
                log.info("episode %s/%s seed=%s", oracle.id, method, s)
                episodes.extend(run_episode(oracle, method, cfg, opt_config, s,
                                            contexts_per_seed, mc_trials, n))
    return aggregate(episodes), episodes


# -- surrogate gap --------------------------------------------------------------

GAP_LOWER, GAP_UPPER = 0.5, 2.0


def gap_reference_probability() -> float:
    return float(std_normal_cdf(GAP_UPPER) - std_normal_cdf(GAP_LOWER))


def surrogate_gap_curve(etas: Sequence[float], epsabs: float = 1e-10) -> list[tuple[float, float]]:
    """``|P(Y in S) - E[w_eta(Y)]|`` for standard normal ``Y`` and ``S = [0.5, 2]``."""
    etas = [float(e) for e in etas]
    if any(e <= 0 for e in etas) or etas != sorted(etas):
        raise ValueError("etas must be positive and ascending")
    region = PolytopeRegion.from_bounds([GAP_LOWER], [GAP_UPPER])
    p_ref = gap_reference_probability()
    out = []
    for eta in etas:
        sd = SmoothedDesirability(region, eta)

        def integrand(y, sd=sd):
            return float(sd.values(np.array([[y]]))[0]) * float(std_normal_pdf(y))

        val, err = integrate.quad(integrand, -8.0, 8.0, points=[GAP_LOWER, GAP_UPPER],
                                  epsabs=epsabs, epsrel=0.0, limit=500)
        if not err <= 10 * epsabs:
            raise ArithmeticError(f"quadrature did not converge for eta={eta} (err={err:g})")
        out.append((eta, abs(p_ref - val)))
    return out


def quadrature_reference_probability(epsabs: float = 1e-10) -> float:
    """``P(0.5 <= Y <= 2)`` by quadrature of the normal density, as an independent route."""
    val, _ = integrate.quad(lambda y: float(std_normal_pdf(y)), GAP_LOWER, GAP_UPPER,
                            epsabs=epsabs, epsrel=0.0)
    return float(val)


# -- estimator consistency --------------------------------------------------------


def oracle_objective(oracle: BenchmarkOracle, x, a, eta: float, m: int, seed: int) -> float:
    """Monte Carlo ground truth of the smoothed objective under the alteration."""
    Y = oracle.sample_alterational(x, a, m, seed)
    return float(np.mean(SmoothedDesirability(oracle.region, eta).values(Y)))


def consistency_curve(oracle: Optional[BenchmarkOracle] = None,
                      ns: Sequence[int] = (100, 400, 1600), probes: int = 20, seed: int = 0,
                      eta: float = 10.0, oracle_draws: int = 100_000,
                      bandwidth_scale: Optional[dict] = None) -> list[tuple[int, float]]:
    """Median ``|J_hat - J|`` over random in-box probes, for each sample size.

    Regularization follows ``lambda_x = n**-0.5`` and ``lambda_h = n**-0.25``.
    """
    oracle = oracle or get_benchmark("lin_syn1")
    ns = [int(v) for v in ns]
    if ns != sorted(ns) or any(v < 50 for v in ns):
        raise ValueError("ns must be ascending and each at least 50")

    probe_pts = []
    for p in range(probes):
        x = oracle.sample_context(rng.derive_seed(seed, rng.PROBE, p, 0))
        u = rng.substream(seed, rng.PROBE, p, 1).uniform(size=oracle.d_a)
        a = oracle.box.lower + u * (oracle.box.upper - oracle.box.lower)
        truth = oracle_objective(oracle, x, a, eta, oracle_draws, rng.derive_seed(seed, rng.PROBE, p, 2))
        probe_pts.append((x, a, truth))

    curve = []
    for n in ns:
        data = oracle.generate_observational(n, rng.derive_seed(seed, rng.DATASET, n))
        cfg = EstimatorConfig(lambda_x=n ** -0.5, lambda_h=n ** -0.25, eta=eta,
                              bandwidth_scale=dict(bandwidth_scale or {}))
        est = fit(data, oracle.region, cfg)
        errs = []
        for x, a, truth in probe_pts:
            errs.append(abs(est.objective(est.context_weights(x), a) - truth))
        curve.append((n, float(np.median(errs))))
    return curve


# -- nested vs conditional ablation ------------------------------------------------


def ablation_fig5(seed_count: int = 5, contexts_per_seed: int = 10, mc_trials: int = 100,
                  n: int = 1000, est_config: Optional[EstimatorConfig] = None,
                  opt_config: Optional[OptimizerConfig] = None) -> tuple[list[AggregateRow], list[EpisodeResult]]:
    oracle = get_benchmark("bank_exp")
    episodes = []
    for method in ("none", "nested", "conditional"):
        for s in range(seed_count):
            episodes.extend(run_episode(oracle, method, est_config, opt_config, s,
                                        contexts_per_seed, mc_trials, n))
    return aggregate(episodes), episodes
