import math

import numpy as np
import pytest

from spiketest.asymptotics import SpikedModel
from spiketest.errors import InvalidConfig, InvalidModel
from spiketest.seeding import SeedUtils
from spiketest.simulation import (
    EntryDistribution,
    FactorSpec,
    companion_equivalence_check,
    draw_data,
    eigenvalues_from_data,
    read_data_csv,
    read_header,
    sample_spectrum,
    spectrum_of,
    write_spectrum_csv,
)
from spiketest.spectral_measure import BulkSpec, DiscreteMeasure

GAUSSIAN = EntryDistribution()


class TestEntryDistribution:
    @pytest.mark.parametrize("dist, nu4", [
        (EntryDistribution("gaussian"), 3.0),
        (EntryDistribution("rademacher"), 1.0),
        (EntryDistribution("uniform"), 1.8),
        (EntryDistribution("two_point", 2.0), 3.25),
    ])
    def test_standardized_with_declared_fourth_moment(self, dist, nu4):
        N = 10 ** 5
        x = dist.sample(SeedUtils.generator(1234), (N,))
        assert dist.nu4 == pytest.approx(nu4)
        assert abs(x.mean()) < 5 / math.sqrt(N)
        assert abs(np.mean(x * x) - 1.0) <= 5 * math.sqrt((nu4 - 1) / N) + 1e-12
        fourth = x ** 4
        assert abs(fourth.mean() - nu4) < 5 * fourth.std() / math.sqrt(N) + 1e-12

    def test_two_point_needs_a_above_one(self):
        with pytest.raises(InvalidConfig):
            EntryDistribution("two_point", 0.5)

    def test_unknown_kind(self):
        with pytest.raises(InvalidConfig):
            EntryDistribution("cauchy")


class TestFactorSpec:
    def test_trace_and_model(self):
        spec = FactorSpec((10.0, 5.0), 2.0, 100)
        assert spec.population_trace == pytest.approx(2.0 * (15.0 + 98))
        model = spec.to_model(200)
        assert model.alphas.tolist() == [20.0, 10.0]

    def test_rejects_unordered(self):
        with pytest.raises(InvalidModel):
            FactorSpec((5.0, 10.0), 1.0, 100)


class TestSampling:
    def test_same_seed_same_spectrum(self):
        spec = FactorSpec((10.0, 5.0), 2.0, 60)
        first = sample_spectrum(spec, 120, GAUSSIAN, 42)
        second = sample_spectrum(spec, 120, GAUSSIAN, 42)
        assert np.array_equal(first.eigs, second.eigs)
        assert first.trace == second.trace
        assert not np.array_equal(first.eigs, sample_spectrum(spec, 120, GAUSSIAN, 43).eigs)

    @pytest.mark.parametrize("p, n", [(40, 80), (80, 40), (50, 50)])
    def test_spectrum_shape_and_trace(self, p, n):
        sample = sample_spectrum(FactorSpec((8.0,), 1.0, p), n, GAUSSIAN, 5)
        eigs = sample.eigs
        assert eigs.shape == (p,)
        assert np.all(eigs >= 0)
        assert np.all(np.diff(eigs) <= 0)
        assert eigs.sum() == pytest.approx(sample.trace, rel=1e-8)
        if p > n:
            assert np.all(eigs[n:] == 0)
        assert sample.population_trace == pytest.approx(8.0 + p - 1)

    def test_wide_data_uses_companion_matrix(self):
        X, _ = draw_data(FactorSpec((6.0,), 1.0, 30), 12, GAUSSIAN, 9)
        eigs, _ = spectrum_of(X)
        direct = np.sort(np.linalg.eigvalsh(X @ X.T / 12))[::-1]
        np.testing.assert_allclose(eigs[:12], direct[:12], rtol=1e-9, atol=1e-9)

    @pytest.mark.parametrize("shape", [(3, 5), (5, 3), (4, 4)])
    def test_companion_equivalence(self, shape):
        X = SeedUtils.generator(0).standard_normal(shape)
        assert companion_equivalence_check(X)
        assert companion_equivalence_check(np.zeros(shape))

    def test_general_bulk_draws_atoms(self):
        H = DiscreteMeasure(((0.5, 0.5), (2.0, 0.5)))
        model = SpikedModel.from_spikes([12.0], BulkSpec(H), 3.0, 200, 100)
        sample = sample_spectrum(model, 200, GAUSSIAN, 8)
        bulk_trace = sample.population_trace - 12.0
        assert 99 * 0.5 - 1e-9 <= bulk_trace <= 99 * 2.0 + 1e-9
        assert sample.eigs.sum() == pytest.approx(sample.trace, rel=1e-8)

    def test_rotated_spike_block(self):
        c, s = math.cos(0.4), math.sin(0.4)
        U = np.array([[c, -s], [s, c]])
        model = SpikedModel.from_spikes([9.0, 6.0], BulkSpec(DiscreteMeasure.point_mass(1.0)), 3.0,
                                        100, 50, eigvecs=U)
        sample = sample_spectrum(model, 100, GAUSSIAN, 1)
        assert sample.population_trace == pytest.approx(15.0 + 48)

    def test_too_small(self):
        with pytest.raises(InvalidConfig):
            sample_spectrum(FactorSpec((8.0,), 1.0, 10), 1, GAUSSIAN, 0)

    def test_null_largest_eigenvalue_near_edge(self):
        spec = FactorSpec((), 1.0, 200)
        hits = sum(2.76 < sample_spectrum(spec, 400, GAUSSIAN, seed).eigs[0] < 3.07 for seed in range(200))
        assert hits >= 190


class TestFiles:
    def test_spectrum_csv_round_trip(self, tmp_path):
        sample = sample_spectrum(FactorSpec((10.0,), 2.0, 30), 60, GAUSSIAN, 17)
        path = tmp_path / "spectrum.csv"
        write_spectrum_csv(sample, path)
        assert path.read_text().startswith("# p=30,n=60,seed=17,trace=")
        header = read_header(path)
        assert header["p"] == "30" and header["n"] == "60" and header["seed"] == "17"
        assert float(header["trace"]) == sample.trace
        assert np.array_equal(eigenvalues_from_data(read_data_csv(path)), sample.eigs)

    def test_data_matrix_file(self, tmp_path):
        X, _ = draw_data(FactorSpec((10.0,), 1.0, 6), 20, GAUSSIAN, 4)
        path = tmp_path / "data.csv"
        np.savetxt(path, X.T, delimiter=",")
        eigs = eigenvalues_from_data(read_data_csv(path))
        expected, _ = spectrum_of(X)
        np.testing.assert_allclose(eigs, expected, rtol=1e-10)


@pytest.mark.slow
def test_factor_spike_mean_matches_psi():
    spec = FactorSpec((10.0,), 2.0, 200)
    top = [sample_spectrum(spec, 400, GAUSSIAN, seed).eigs[0] for seed in range(500)]
    assert np.mean(top) == pytest.approx(2.0 * (10.0 + 0.5 / 0.9), rel=0.01)


@pytest.mark.slow
def test_trace_is_unbiased():
    spec = FactorSpec((10.0, 5.0), 1.0, 200)
    traces = np.empty(2000)
    for seed in range(traces.size):
        X, _ = draw_data(spec, 400, GAUSSIAN, seed)
        traces[seed] = np.sum(X * X) / 400
    se = traces.std(ddof=1) / math.sqrt(traces.size)
    assert abs(traces.mean() - spec.population_trace) < 3 * se
