import json
import os
import warnings

import numpy as np
import pytest

from contact_intervals import MassAction, Network, Period, SimulationConfig, exponential, fit_mle, run_with_restarts, weibull
from contact_intervals import io as cio
from contact_intervals.likelihoods import likelihood_ratio_test, loglik, survival_terms


def sim(population, model, m=40, seed=0, latent=Period("constant", 0.0)):
    return run_with_restarts(SimulationConfig(population, model, Period("exponential", 1.0), latent, m_target=m, seed=seed))


@pytest.mark.parametrize(
    "population", [MassAction(300), Network(n=300, expected_degree=5)], ids=["mass-action", "network"]
)
def test_dataset_round_trip_exact(tmp_path, population):
    data = sim(population, weibull(1.3, 1.7), seed=4, latent=Period("exponential", 0.3))
    cio.write_dataset(data, tmp_path, seed=4)
    again = cio.read_dataset(tmp_path)
    assert again == data
    assert [r.t_recovery for r in again.individuals] == [r.t_recovery for r in data.individuals]
    assert (data.network is None) == (not os.path.exists(tmp_path / "edges.csv"))
    meta = json.loads((tmp_path / "meta.json").read_text())
    assert meta["seed"] == 4 and meta["m"] == data.m and meta["T"] == data.T


def test_written_files_are_deterministic(tmp_path):
    data = sim(Network(n=200, expected_degree=4), exponential(2.0), seed=1)
    cio.write_dataset(data, tmp_path / "a", seed=1)
    cio.write_dataset(data, tmp_path / "b", seed=1)
    for name in ("individuals.csv", "edges.csv", "meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_missing_values_are_empty_fields(tmp_path):
    data = sim(MassAction(100), exponential(2.0), seed=2)
    cio.write_dataset(data, tmp_path)
    lines = (tmp_path / "individuals.csv").read_text().splitlines()
    assert lines[0] == "id,imported,t_inf,t_onset_infectious,t_recovery,degree,infector"
    assert lines[1].endswith(",,")


def test_decode_error_names_line(tmp_path):
    data = sim(MassAction(100), exponential(2.0), seed=3)
    cio.write_dataset(data, tmp_path)
    path = tmp_path / "individuals.csv"
    lines = path.read_text().splitlines()
    lines[3] = lines[3].replace(lines[3].split(",")[2], "abc", 1)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(cio.DecodeError, match="line 4"):
        cio.read_dataset(tmp_path)


def test_decode_error_short_row(tmp_path):
    data = sim(MassAction(100), exponential(2.0), seed=3)
    cio.write_dataset(data, tmp_path)
    with open(tmp_path / "individuals.csv", "a") as fh:
        fh.write("7,0,1.0\n")
    with pytest.raises(cio.DecodeError, match=f"line {data.m + 2}"):
        cio.read_dataset(tmp_path)


def test_decode_error_bad_meta(tmp_path):
    data = sim(MassAction(100), exponential(2.0), seed=3)
    cio.write_dataset(data, tmp_path)
    (tmp_path / "meta.json").write_text('{"n": 100,\n "T": }\n')
    with pytest.raises(cio.DecodeError, match="line 2"):
        cio.read_dataset(tmp_path)


def test_decode_error_bad_edges(tmp_path):
    data = sim(Network(n=100, expected_degree=4), exponential(2.0), seed=3)
    cio.write_dataset(data, tmp_path)
    with open(tmp_path / "edges.csv", "a") as fh:
        fh.write("1,x\n")
    with pytest.raises(cio.DecodeError, match="line"):
        cio.read_dataset(tmp_path)


class TestEpicurve:
    def test_single_case_flat(self):
        data = cio.epicurve_to_dataset(cio.EpiCurve([0], [1]), 100)
        assert data.m == 1 and data.individuals[0].imported
        assert survival_terms(data, "mass-action").n_events == 0
        assert loglik(data, exponential(0.1), "mass-action") == loglik(data, exponential(10.0), "mass-action") == 0.0

    def test_two_cases_window_end(self):
        data = cio.epicurve_to_dataset(cio.EpiCurve([0, 1, 2], [1, 0, 1]), 100)
        first, second = data.individuals
        assert (first.t_inf, first.t_onset, first.t_recovery) == (-2.0, -1.0, 0.0)
        assert second.t_inf == 0.0 and not second.imported
        t = survival_terms(data, "mass-action")
        assert t.cand_tau.tolist() == [1.0]

    def test_same_day_cases_are_imports(self):
        data = cio.epicurve_to_dataset(cio.EpiCurve([3, 4], [2, 1]), 100)
        assert [r.imported for r in data.individuals] == [True, True, False]

    def test_validation(self):
        with pytest.raises(ValueError):
            cio.EpiCurve([0, 1], [0, 0])
        with pytest.raises(ValueError):
            cio.EpiCurve([0, 1], [1, -1])
        with pytest.raises(ValueError):
            cio.epicurve_to_dataset(cio.EpiCurve([0], [5]), 3)
        with pytest.raises(ValueError):
            cio.epicurve_to_dataset(cio.EpiCurve([0], [5]), None)

    def test_read_epicurve(self, tmp_path):
        p = tmp_path / "curve.csv"
        p.write_text("day,count\n0,1\n1,3\n2,0\n")
        curve = cio.read_epicurve(str(p), infectious=2.0)
        assert curve.counts == [1, 3, 0] and curve.infectious == 2.0
        p.write_text("day,count\n0,1\n1,-3\n")
        with pytest.raises(cio.DecodeError, match="line 3"):
            cio.read_epicurve(str(p))
        p.write_text("d,c\n0,1\n")
        with pytest.raises(cio.DecodeError, match="line 1"):
            cio.read_epicurve(str(p))

    @staticmethod
    def binned(model, seed, n=10_000, m=500):
        config = SimulationConfig(MassAction(n), model, Period("constant", 1.0), Period("constant", 1.0), m_target=m, seed=seed)
        data = run_with_restarts(config)
        last = int(np.floor(data.T + 2.0)) - 1  # last complete onset day
        days, counts = cio.bin_onsets(data, 2.0, last)
        return cio.epicurve_to_dataset(cio.EpiCurve(days, counts), n)

    @pytest.mark.parametrize("beta", [1.5, 2.0, 3.0])
    def test_round_trip_rate(self, beta):
        for seed in range(5):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                data = self.binned(exponential(beta), seed)
                fit = fit_mle(data, "exponential", "mass-action", profile=False)
            assert fit.model.beta == pytest.approx(beta, rel=0.25)

    def test_weibull_alternative_power(self):
        rejected = 0
        runs = 20
        for seed in range(runs):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                data = self.binned(weibull(2.0, 2.0**0.5), seed)
                null = fit_mle(data, "exponential", "mass-action", profile=False)
                alt = fit_mle(data, "weibull", "mass-action", profile=False)
            rejected += likelihood_ratio_test(null, alt)[1] < 0.05
        assert rejected / runs >= 0.8


def test_write_json_sorted(tmp_path):
    text = cio.write_json({"b": 1, "a": [1.5]}, tmp_path / "x.json")
    assert text == '{\n  "a": [\n    1.5\n  ],\n  "b": 1\n}\n'
    assert (tmp_path / "x.json").read_text() == text
