"""Replication harness.

Replications are seeded independently from (master_seed, rep_index) and
collected in replication order, so every report is the same for any number
of workers.
"""
import dataclasses
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from spiketest.asymptotics import (
    SpikedModel,
    cross_spike_matrix,
    lambda_mean_correction,
    lambda_var_first_order,
    lambda_var_refined,
    ratio_params,
    ratio_statistic,
    rho_and_cov_lambda_trace,
    sigma2_M,
    trace_var,
)
from spiketest.constants import DEFAULT_ALPHA_LEVEL, DEFAULT_REPS, DEFAULT_WORKERS, MIN_REPORTABLE_REPS
from spiketest.errors import EmptyRange, EstimatorError, InvalidConfig
from spiketest.factor_inference import CORRECTED, UNCORRECTED, FactorTestConfig, run_test
from spiketest.models import MCReport, MomentSummary, RejectionSummary
from spiketest.seeding import SeedUtils
from spiketest.simulation import EntryDistribution, FactorSpec, sample_spectrum
from spiketest.spectral_measure import BulkSpec, DiscreteMeasure, psi_family, solve_silverstein

logger = logging.getLogger(__name__)

BOTH = "both"
PROCEDURES = {CORRECTED: (CORRECTED,), UNCORRECTED: (UNCORRECTED,), BOTH: (CORRECTED, UNCORRECTED)}


@dataclass(frozen=True)
class Scenario:
    p: int
    n: int
    c: float
    t_list: Tuple[float, ...]
    sigma2: float = 1.0
    dist: EntryDistribution = field(default_factory=EntryDistribution)
    m0: Optional[int] = None
    alpha_level: float = DEFAULT_ALPHA_LEVEL
    reps: int = DEFAULT_REPS
    master_seed: int = 0
    procedure: str = CORRECTED
    label: str = ""
    smoke: bool = False

    def __post_init__(self):
        object.__setattr__(self, "t_list", tuple(float(t) for t in self.t_list))
        if self.m0 is None:
            object.__setattr__(self, "m0", len(self.t_list))
        if self.procedure not in PROCEDURES:
            raise InvalidConfig(f"Unknown procedure {self.procedure!r}")
        if self.reps < 1:
            raise InvalidConfig(f"reps must be positive, got {self.reps}")
        if self.reps < MIN_REPORTABLE_REPS:
            if not self.smoke:
                raise InvalidConfig(
                    f"reps must be at least {MIN_REPORTABLE_REPS} outside smoke runs, got {self.reps}")
            logger.warning("scenario %s runs only %d replications", self.label or self.t_list, self.reps)
        # validates c, m0, alpha_level and the SNR list
        self.test_config
        self.factor_spec

    @property
    def test_config(self) -> FactorTestConfig:
        return FactorTestConfig(m0=self.m0, c=self.c, p=self.p, n=self.n, alpha_level=self.alpha_level)

    @property
    def factor_spec(self) -> FactorSpec:
        return FactorSpec(self.t_list, self.sigma2, self.p)

    @property
    def procedures(self) -> Tuple[str, ...]:
        return PROCEDURES[self.procedure]

    def with_overrides(self, reps: Optional[int] = None, master_seed: Optional[int] = None) -> "Scenario":
        changes: Dict[str, Any] = {}
        if reps is not None:
            changes["reps"] = reps
        if master_seed is not None:
            changes["master_seed"] = master_seed
        return dataclasses.replace(self, **changes) if changes else self


def _replicate(scenario: Scenario, seed: int) -> Dict[str, Tuple]:
    sample = sample_spectrum(scenario.factor_spec, scenario.n, scenario.dist, seed)
    out = {}
    for procedure in scenario.procedures:
        try:
            outcome = run_test(sample.eigs, scenario.test_config, corrected=procedure == CORRECTED)
        except (EstimatorError, EmptyRange) as e:
            # estimated SNRs can leave no admissible t_{m0} on a single draw
            out[procedure] = (None, type(e).__name__)
            continue
        out[procedure] = ((outcome.statistic, outcome.critical_value, outcome.reject), None)
    return out


def _summarize(procedure: str, rows: Sequence[Tuple]) -> RejectionSummary:
    valid = np.array([r[0] for r in rows if r[0] is not None], dtype=np.float64).reshape(-1, 3)
    kinds = Counter(r[1] for r in rows if r[0] is None)
    count = valid.shape[0]
    if count == 0:
        logger.warning("no valid replications for procedure %s", procedure)
        rate = se = mean_stat = mean_crit = math.nan
    else:
        rate = float(np.mean(valid[:, 2]))
        se = math.sqrt(rate * (1.0 - rate) / count)
        mean_stat = float(np.mean(valid[:, 0]))
        mean_crit = float(np.mean(valid[:, 1]))
    if kinds:
        logger.warning("procedure %s: %d replications failed %s", procedure, sum(kinds.values()), dict(kinds))
    return RejectionSummary(
        procedure=procedure,
        rejection_rate=rate,
        mc_standard_error=se,
        mean_statistic=mean_stat,
        mean_critical_value=mean_crit,
        valid_reps=count,
        failures=sum(kinds.values()),
        failure_kinds=dict(sorted(kinds.items())),
    )


def run_scenario(scenario: Scenario, workers: int = DEFAULT_WORKERS) -> MCReport:
    logger.info("scenario %s: p=%d n=%d t=%s c=%s reps=%d",
                scenario.label, scenario.p, scenario.n, scenario.t_list, scenario.c, scenario.reps)
    seeds = SeedUtils.replication_seeds(scenario.master_seed, scenario.reps)
    replications = Parallel(n_jobs=workers)(delayed(_replicate)(scenario, s) for s in seeds)
    results = [_summarize(proc, [rep[proc] for rep in replications]) for proc in scenario.procedures]
    for r in results:
        logger.info("scenario %s %s: rate=%.4f se=%.4f", scenario.label, r.procedure,
                    r.rejection_rate, r.mc_standard_error)
    return MCReport(
        label=scenario.label,
        reps=scenario.reps,
        master_seed=scenario.master_seed,
        results=results,
        parameters={"p": scenario.p, "n": scenario.n, "c": scenario.c, "t_list": list(scenario.t_list),
                    "sigma2": scenario.sigma2, "m0": scenario.m0, "alpha_level": scenario.alpha_level,
                    "dist": scenario.dist.to_dict()},
    )


def _leave_one_out_cov(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Unbiased sample covariances with each observation left out in turn."""
    N = x.size
    k = N - 1
    mx = (x.sum() - x) / k
    my = (y.sum() - y) / k
    sxy = np.dot(x, y) - x * y
    return (sxy - k * mx * my) / (k - 1)


def _jackknife_se(replicates: np.ndarray) -> float:
    N = replicates.size
    return float(math.sqrt((N - 1) / N * np.sum((replicates - replicates.mean()) ** 2)))


def _cov_with_se(x: np.ndarray, y: np.ndarray) -> Tuple[float, float]:
    value = float(np.cov(x, y, ddof=1)[0, 1])
    return value, _jackknife_se(_leave_one_out_cov(x, y))


def _mean_with_se(x: np.ndarray) -> Tuple[float, float]:
    # the jackknife SE of a mean is the usual standard error
    return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(x.size))


def _moment_replicate(model: SpikedModel, n: int, dist: EntryDistribution, seed: int) -> np.ndarray:
    sample = sample_spectrum(model, n, dist, seed)
    m = model.m
    psis = np.array([f.psi for f in model.families])
    fluct = math.sqrt(n) * (sample.eigs[:m] / psis - 1.0)
    ratios = np.array([math.sqrt(n) * ratio_statistic(sample.eigs, k) for k in range(1, m + 1)])
    return np.concatenate([fluct, [sample.trace - sample.population_trace], ratios])


def _moment_theory(model: SpikedModel) -> Dict[str, Any]:
    m = model.m
    ks = range(1, m + 1)
    ratio1 = [ratio_params(model, k, refined=False) for k in ks]
    ratio2 = [ratio_params(model, k, refined=True) for k in ks]
    return {
        "var1": [lambda_var_first_order(model, k) for k in ks],
        "var2": [lambda_var_refined(model, k) for k in ks],
        "mean_corr": [lambda_mean_correction(model, k) for k in ks],
        "trace_var1": trace_var(model, refined=False),
        "trace_var2": trace_var(model, refined=True),
        "cov_trace": [rho_and_cov_lambda_trace(model, k)[1] for k in ks],
        "cross_cov": cross_spike_matrix(model).tolist(),
        "ratio_center": [c for c, _ in ratio1],
        "ratio_var1": [v for _, v in ratio1],
        "ratio_var2": [v for _, v in ratio2],
    }


def moment_oracle(model: SpikedModel, n: int, p: int, dist: EntryDistribution, reps: int, seed: int,
                  workers: int = DEFAULT_WORKERS) -> MCReport:
    """Empirical moments of (√n(λ_k/ψ_k−1), tr S_n − tr Σ_p) next to their closed forms."""
    if (n, p) != (model.n, model.p):
        model = dataclasses.replace(model, n=n, p=p)
    if not math.isclose(dist.nu4, model.nu4):
        logger.warning("entry distribution has nu4=%s but the model declares nu4=%s", dist.nu4, model.nu4)
    if reps < MIN_REPORTABLE_REPS:
        logger.warning("moment oracle runs only %d replications", reps)
    seeds = SeedUtils.replication_seeds(seed, reps)
    rows = Parallel(n_jobs=workers)(delayed(_moment_replicate)(model, n, dist, s) for s in seeds)
    data = np.vstack(rows)
    m = model.m
    fluct, trace, ratios = data[:, :m], data[:, m], data[:, m + 1:]

    means = [_mean_with_se(fluct[:, k]) for k in range(m)]
    variances = [_cov_with_se(fluct[:, k], fluct[:, k]) for k in range(m)]
    trace_v = _cov_with_se(trace, trace)
    cov_tr = [_cov_with_se(fluct[:, k], trace) for k in range(m)]
    ratio_v = [_cov_with_se(ratios[:, k], ratios[:, k]) for k in range(m)]
    cross = np.zeros((m, m))
    cross_se = np.zeros((m, m))
    for i in range(m):
        for j in range(i, m):
            cross[i, j], cross_se[i, j] = _cov_with_se(fluct[:, i], fluct[:, j])
            cross[j, i], cross_se[j, i] = cross[i, j], cross_se[i, j]
    corr = [cov_tr[k][0] / math.sqrt(variances[k][0] * trace_v[0]) for k in range(m)]

    summary = MomentSummary(
        mean=[v for v, _ in means],
        mean_se=[s for _, s in means],
        var=[v for v, _ in variances],
        var_se=[s for _, s in variances],
        trace_var=trace_v[0],
        trace_var_se=trace_v[1],
        cov_trace=[v for v, _ in cov_tr],
        cov_trace_se=[s for _, s in cov_tr],
        corr_trace=corr,
        cross_cov=cross.tolist(),
        cross_cov_se=cross_se.tolist(),
        ratio_var=[v for v, _ in ratio_v],
        ratio_var_se=[s for _, s in ratio_v],
        theory=_moment_theory(model),
    )
    logger.info("moment oracle: %d reps, var=%s, trace var=%.4f", reps, summary.var, summary.trace_var)
    return MCReport(label="moment-oracle", reps=reps, master_seed=seed, moments=summary,
                    parameters={"n": n, "p": p, "y": model.y, "nu4": model.nu4,
                                "alphas": model.alphas.tolist(), "dist": dist.to_dict()})


def _resolvent_replicate(root_v: np.ndarray, n: int, dist: EntryDistribution, z: float, seed: int) -> float:
    rng = SeedUtils.generator(seed)
    X = root_v[:, None] * dist.sample(rng, (root_v.size, n))
    inner = np.linalg.eigvalsh(X.T @ X / n)
    return float(np.sum(1.0 / (inner - z)))


def resolvent_oracle(H: DiscreteMeasure, y: float, alpha: float, n: int, dist: EntryDistribution,
                     reps: int, seed: int, workers: int = DEFAULT_WORKERS) -> Dict[str, float]:
    """Variance of tr(S̲_n − zI)⁻¹ at z = ψ(α) for a bulk-only companion matrix.

    The bulk diagonal is fixed across replications, with atom counts
    proportional to the weights of H.
    """
    p = int(round(y * n))
    counts = np.round(H.weights * p).astype(int)
    counts[-1] = p - counts[:-1].sum()
    root_v = np.sqrt(np.repeat(H.values, counts))
    z = psi_family(H, y, alpha).psi
    seeds = SeedUtils.replication_seeds(seed, reps)
    values = np.array(Parallel(n_jobs=workers)(
        delayed(_resolvent_replicate)(root_v, n, dist, z, s) for s in seeds))
    centred = values - n * solve_silverstein(H, p / n, z)
    var, var_se = _cov_with_se(values, values)
    model = SpikedModel.from_spikes([alpha], BulkSpec(H), dist.nu4, n, p + 1, y=y)
    return {
        "z": z,
        "mean": float(np.mean(centred)),
        "mean_se": float(np.std(centred, ddof=1) / math.sqrt(reps)),
        "var": var,
        "var_se": var_se,
        "sigma2_M": sigma2_M(model, 1),
        "reps": reps,
    }


def _table_frame(scenarios: Sequence[Scenario], reports: Sequence[MCReport]) -> pd.DataFrame:
    width = max((len(s.t_list) for s in scenarios), default=0)
    t_cols = [f"t{i}" for i in range(1, width + 1)]
    columns = ["p", "n", "c", *t_cols, "procedure", "rate", "se", "reps", "seed"]
    rows = []
    for scenario, report in zip(scenarios, reports):
        ts = list(scenario.t_list) + [np.nan] * (width - len(scenario.t_list))
        for r in report.results:
            rows.append([scenario.p, scenario.n, scenario.c, *ts, r.procedure,
                         r.rejection_rate, r.mc_standard_error, r.valid_reps, scenario.master_seed])
    return pd.DataFrame(rows, columns=columns)


def table_runner(scenarios: Sequence[Scenario], out_path, workers: int = DEFAULT_WORKERS) -> pd.DataFrame:
    reports = [run_scenario(s, workers) for s in scenarios]
    frame = _table_frame(scenarios, reports)
    frame.to_csv(out_path, index=False, float_format="%.6f")
    logger.info("wrote %d rows to %s", len(frame), out_path)
    return frame
