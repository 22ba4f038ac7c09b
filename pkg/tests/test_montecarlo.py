import itertools
import logging
import math
from pathlib import Path

import numpy as np
import pytest

import spiketest.montecarlo as montecarlo
from spiketest.asymptotics import SpikedModel, lambda_var_first_order
from spiketest.config_models import TableConfig, load_config
from spiketest.errors import EmptyRange, InsufficientSeparation, InvalidConfig
from spiketest.montecarlo import (
    Scenario,
    _jackknife_se,
    _leave_one_out_cov,
    moment_oracle,
    resolvent_oracle,
    run_scenario,
    table_runner,
)
from spiketest.seeding import SeedUtils
from spiketest.simulation import EntryDistribution
from spiketest.spectral_measure import BulkSpec, DiscreteMeasure

TABLES = Path(__file__).resolve().parents[1] / "tables"


def _small(**kwargs):
    base = dict(p=40, n=80, c=5.0, t_list=(10.0,), sigma2=2.0, reps=20, master_seed=3, label="small", smoke=True)
    base.update(kwargs)
    return Scenario(**base)


class TestSeeds:
    def test_replication_seeds_are_stable_and_distinct(self):
        seeds = SeedUtils.replication_seeds(20240101, 50)
        assert seeds == SeedUtils.replication_seeds(20240101, 50)
        assert len(set(seeds)) == 50
        assert seeds[7] == SeedUtils.replication_seed(20240101, 7)
        assert all(0 <= s < 2 ** 64 for s in seeds)
        assert seeds != SeedUtils.replication_seeds(20240102, 50)

    def test_negative_master_seed(self):
        with pytest.raises(ValueError):
            SeedUtils.replication_seed(-1, 0)


class TestJackknife:
    def test_leave_one_out_cov_matches_brute_force(self):
        rng = SeedUtils.generator(5)
        x, y = rng.standard_normal(12), rng.standard_normal(12)
        expected = [np.cov(np.delete(x, i), np.delete(y, i), ddof=1)[0, 1] for i in range(12)]
        np.testing.assert_allclose(_leave_one_out_cov(x, y), expected, rtol=1e-12, atol=1e-14)

    def test_jackknife_of_the_mean_is_the_standard_error(self):
        x = SeedUtils.generator(6).standard_normal(30)
        loo = (x.sum() - x) / 29
        assert _jackknife_se(loo) == pytest.approx(x.std(ddof=1) / math.sqrt(30), rel=1e-12)


class TestScenario:
    def test_defaults(self):
        scenario = _small(t_list=(10.0, 5.0), reps=200)
        assert scenario.m0 == 2
        assert scenario.procedures == ("corrected",)
        assert scenario.with_overrides(reps=300).reps == 300
        assert scenario.with_overrides() is scenario

    def test_unknown_procedure(self):
        with pytest.raises(InvalidConfig):
            _small(procedure="bootstrap")

    def test_invalid_c(self):
        with pytest.raises(InvalidConfig):
            _small(c=1.2)

    def test_warns_on_few_replications_in_smoke_runs(self, caplog):
        with caplog.at_level(logging.WARNING, logger="spiketest.montecarlo"):
            _small(reps=20)
        assert "only 20 replications" in caplog.text

    def test_few_replications_rejected_outside_smoke_runs(self):
        with pytest.raises(InvalidConfig, match="at least 100"):
            _small(reps=20, smoke=False)
        assert _small(reps=100, smoke=False).reps == 100


class TestRunScenario:
    def test_rate_and_standard_error(self):
        result = run_scenario(_small()).result("corrected")
        assert result.valid_reps == 20 and result.failures == 0
        assert 0.0 <= result.rejection_rate <= 1.0
        assert result.rejection_rate * 20 == pytest.approx(round(result.rejection_rate * 20))
        rate = result.rejection_rate
        assert result.mc_standard_error == pytest.approx(math.sqrt(rate * (1 - rate) / 20))

    def test_independent_of_worker_count(self):
        scenario = _small(t_list=(10.0, 5.0), procedure="both")
        serial = run_scenario(scenario, workers=1)
        parallel = run_scenario(scenario, workers=2)
        assert serial.to_dict() == parallel.to_dict()
        assert [r.procedure for r in serial.results] == ["corrected", "uncorrected"]

    def test_estimator_failures_leave_the_denominator(self, monkeypatch):
        calls = itertools.count()
        real = montecarlo.run_test

        def flaky(eigs, config, corrected=True):
            if next(calls) % 2:
                raise InsufficientSeparation("forced")
            return real(eigs, config, corrected)

        monkeypatch.setattr(montecarlo, "run_test", flaky)
        result = run_scenario(_small(), workers=1).result("corrected")
        assert result.valid_reps == 10
        assert result.failures == 10
        assert result.failure_kinds == {"InsufficientSeparation": 10}
        rate = result.rejection_rate
        assert result.mc_standard_error == pytest.approx(math.sqrt(rate * (1 - rate) / 10))

    def test_all_failures_give_nan(self, monkeypatch):
        def broken(eigs, config, corrected=True):
            raise InsufficientSeparation("forced")

        monkeypatch.setattr(montecarlo, "run_test", broken)
        result = run_scenario(_small(reps=5), workers=1).result("corrected")
        assert result.valid_reps == 0
        assert math.isnan(result.rejection_rate)

    def test_empty_range_on_estimated_snrs_counts_as_failure(self, monkeypatch):
        calls = itertools.count()
        real = montecarlo.run_test

        def sometimes_empty(eigs, config, corrected=True):
            if next(calls) % 4 == 0:
                raise EmptyRange("forced")
            return real(eigs, config, corrected)

        monkeypatch.setattr(montecarlo, "run_test", sometimes_empty)
        result = run_scenario(_small(), workers=1).result("corrected")
        assert result.failure_kinds == {"EmptyRange": 5}
        assert result.valid_reps == 15

    def test_weak_leading_factor_does_not_abort_the_scenario(self):
        # t̂₁ falls below c on a fair share of draws when t₁ is close to c
        scenario = Scenario(p=100, n=200, c=5.0, t_list=(5.4, 5.0), sigma2=2.0, reps=100, master_seed=1)
        result = run_scenario(scenario).result("corrected")
        assert result.failure_kinds.get("EmptyRange", 0) >= 1
        assert result.valid_reps + result.failures == 100
        assert 0.0 <= result.rejection_rate <= 1.0


class TestTableRunner:
    def test_empty_table_writes_header_only(self, tmp_path):
        path = tmp_path / "empty.csv"
        frame = table_runner([], path)
        assert frame.empty
        assert path.read_text() == "p,n,c,procedure,rate,se,reps,seed\n"

    def test_rows_are_reproducible(self, tmp_path):
        scenarios = [_small(), _small(t_list=(10.0, 5.0), procedure="both", master_seed=4)]
        first, second = tmp_path / "a.csv", tmp_path / "b.csv"
        frame = table_runner(scenarios, first)
        table_runner(scenarios, second)
        assert first.read_bytes() == second.read_bytes()
        assert list(frame.columns) == ["p", "n", "c", "t1", "t2", "procedure", "rate", "se", "reps", "seed"]
        assert len(frame) == 3
        assert frame["procedure"].tolist() == ["corrected", "corrected", "uncorrected"]
        assert math.isnan(frame.loc[0, "t2"])


@pytest.mark.slow
def test_moment_oracle_agrees_with_refined_closed_forms():
    model = SpikedModel.from_spikes([4.0, 3.0], BulkSpec(DiscreteMeasure.point_mass(1.0)), 3.0, 400, 200)
    report = moment_oracle(model, 400, 200, EntryDistribution(), reps=2000, seed=11, workers=2)
    moments, theory = report.moments, report.moments.theory
    for k in range(2):
        assert abs(moments.var[k] - theory["var1"][k]) < 3 * moments.var_se[k]
        assert abs(moments.var[k] - theory["var2"][k]) < 3 * moments.var_se[k]
        assert abs(moments.ratio_var[k] - theory["ratio_var2"][k]) < 3 * moments.ratio_var_se[k]
        assert abs(moments.corr_trace[k]) < 0.15
    assert abs(moments.trace_var - theory["trace_var2"]) < 3 * moments.trace_var_se
    assert abs(moments.cross_cov[0][1] - theory["cross_cov"][0][1]) < 3 * moments.cross_cov_se[0][1]


@pytest.mark.slow
def test_resolvent_variance_matches_sigma2_M():
    result = resolvent_oracle(DiscreteMeasure.point_mass(1.0), 0.5, 3.0, 400, EntryDistribution(),
                              reps=2000, seed=5, workers=2)
    assert result["var"] == pytest.approx(result["sigma2_M"], rel=0.15)


def _rate(p, n, c, t_list, procedure="corrected", reps=1000, seed=20240101, dist=None):
    scenario = Scenario(p=p, n=n, c=c, t_list=t_list, sigma2=2.0, reps=reps, master_seed=seed,
                        procedure=procedure, dist=dist or EntryDistribution())
    return run_scenario(scenario, workers=2)


# reported rates over 3000 Gaussian replications, keyed by (p, n, c, t2)
REPORTED_SIZE = {
    (100, 200, 3.5, 3.5): 0.054, (100, 200, 3.5, 3.7): 0.019, (100, 200, 5, 5): 0.053, (100, 200, 5, 5.5): 0.007,
    (200, 400, 3.5, 3.5): 0.052, (200, 400, 3.5, 3.7): 0.011, (200, 400, 5, 5): 0.054, (200, 400, 5, 5.5): 0.002,
    (200, 200, 3.5, 3.5): 0.044, (200, 200, 3.5, 3.7): 0.015, (200, 200, 5, 5): 0.057, (200, 200, 5, 5.5): 0.005,
    (400, 400, 3.5, 3.5): 0.057, (400, 400, 3.5, 3.7): 0.011, (400, 400, 5, 5): 0.058, (400, 400, 5, 5.5): 0.001,
    (200, 100, 3.5, 3.5): 0.029, (200, 100, 3.5, 3.7): 0.017, (200, 100, 5, 5): 0.056, (200, 100, 5, 5.5): 0.014,
    (400, 200, 3.5, 3.5): 0.033, (400, 200, 3.5, 3.7): 0.014, (400, 200, 5, 5): 0.050, (400, 200, 5, 5.5): 0.006,
}
REPORTED_POWER = {
    (100, 200, 3.5, 3): 0.427, (100, 200, 3.5, 2.5): 0.923, (100, 200, 5, 4): 0.691, (100, 200, 5, 3): 1.000,
    (200, 400, 3.5, 3): 0.668, (200, 400, 3.5, 2.5): 0.998, (200, 400, 5, 4): 0.919, (200, 400, 5, 3): 1.000,
    (200, 200, 3.5, 3): 0.345, (200, 200, 3.5, 2.5): 0.884, (200, 200, 5, 4): 0.682, (200, 200, 5, 3): 1.000,
    (400, 400, 3.5, 3): 0.605, (400, 400, 3.5, 2.5): 0.993, (400, 400, 5, 4): 0.914, (400, 400, 5, 3): 1.000,
    (200, 100, 3.5, 2.5): 0.223, (200, 100, 3.5, 1.5): 0.450, (200, 100, 5, 4): 0.381, (200, 100, 5, 3): 0.905,
    (400, 200, 3.5, 2.5): 0.563, (400, 200, 3.5, 1.5): 0.834, (400, 200, 5, 4): 0.630, (400, 200, 5, 3): 0.999,
}


def _table(name):
    return load_config(TABLES / name, TableConfig).to_scenarios()


def _key(scenario):
    return scenario.p, scenario.n, scenario.c, scenario.t_list[-1]


def _tolerance(reported, floor, reps):
    # our estimate and the reported one both carry binomial noise
    se = math.sqrt(reported * (1 - reported) * (1 / reps + 1 / 3000))
    return max(floor, 3 * se)


@pytest.mark.slow
@pytest.mark.parametrize("scenario", _table("table1.json"), ids=lambda s: s.label)
def test_empirical_size_matches_reported_table(scenario):
    reported = REPORTED_SIZE[_key(scenario)]
    rate = run_scenario(scenario, workers=2).result("corrected").rejection_rate
    assert rate == pytest.approx(reported, abs=_tolerance(reported, 0.02, scenario.reps))


@pytest.mark.slow
@pytest.mark.parametrize("scenario", _table("table2.json"), ids=lambda s: s.label)
def test_empirical_power_matches_reported_table(scenario):
    reported = REPORTED_POWER[_key(scenario)]
    rate = run_scenario(scenario, workers=2).result("corrected").rejection_rate
    assert rate == pytest.approx(reported, abs=_tolerance(reported, 0.04, scenario.reps))


@pytest.mark.slow
def test_correction_raises_power_without_inflating_size():
    power = _rate(200, 100, 5.0, (10.0, 4.0), procedure="both")
    assert power.result("corrected").rejection_rate - power.result("uncorrected").rejection_rate >= 0.08
    size = _rate(200, 100, 5.0, (10.0, 5.0), procedure="both")
    corrected = size.result("corrected").rejection_rate
    assert 0.03 <= corrected <= 0.08
    assert size.result("uncorrected").rejection_rate < corrected


@pytest.mark.slow
def test_light_tailed_entries_shrink_the_spike_variance():
    # ν₄ = 1 removes most of the fluctuation of a coordinate-aligned spike, so the
    # Gaussian-calibrated test rejects less at t₂ = c and more once the centre
    # of the statistic falls below the critical value
    gaussian = SpikedModel.factor([10.0, 5.0], 2.0, 200, 100)
    rademacher = SpikedModel.factor([10.0, 5.0], 2.0, 200, 100, nu4=1.0)
    assert lambda_var_first_order(rademacher, 2) < 0.1 * lambda_var_first_order(gaussian, 2)

    light = EntryDistribution("rademacher")
    size_gauss = _rate(100, 200, 5.0, (10.0, 5.0)).result("corrected").rejection_rate
    size_light = _rate(100, 200, 5.0, (10.0, 5.0), dist=light).result("corrected").rejection_rate
    assert size_light < size_gauss - 0.02
    power_gauss = _rate(100, 200, 5.0, (10.0, 4.0)).result("corrected").rejection_rate
    power_light = _rate(100, 200, 5.0, (10.0, 4.0), dist=light).result("corrected").rejection_rate
    assert power_light > power_gauss + 0.1
