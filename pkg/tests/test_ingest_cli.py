import json
import math
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ggmcpd.cli import REAL_DATA_DEFAULTS, main
from ggmcpd.exceptions import DomainError
from ggmcpd.ggm import read_matrix
from ggmcpd.ingest import (PricePanel, log_returns, read_numeric_csv, read_price_panel,
                           volatility_index, volatility_proxy, write_series_csv)
from ggmcpd.pipeline import read_trace_csv
from ggmcpd.scenarios import single_change_config

PRICES = """date,AAA,BBB,CCC
2020-01-02,100,50,10
2020-01-03,110,NA,11
2020-01-06,121,52,12
2020-01-07,,53,13
2020-01-08,133.1,54,14
2020-01-09,140,55,15
"""


@pytest.fixture
def price_file(tmp_path):
    path = tmp_path / "prices.csv"
    path.write_text(PRICES)
    return path


class TestPricePanel:
    def test_read_drops_missing(self, price_file):
        panel = read_price_panel(str(price_file))
        assert panel.tickers == ["AAA", "BBB", "CCC"]
        assert panel.dropped_rows == 2
        assert panel.prices.shape == (4, 3)
        assert panel.dates[0].isoformat() == "2020-01-02"

    def test_no_date_column(self, tmp_path):
        path = tmp_path / "p.csv"
        path.write_text("A,B\n1,2\n3,4\n")
        panel = read_price_panel(str(path))
        assert panel.dates == [] and panel.tickers == ["A", "B"]

    def test_dates_must_increase(self):
        from datetime import date
        with pytest.raises(ValueError):
            PricePanel(["A"], [date(2020, 1, 2), date(2020, 1, 1)], [[1.0], [2.0]])

    def test_subset_keeps_order(self, price_file):
        panel = read_price_panel(str(price_file))
        sub = panel.subset(2, seed=0)
        order = [panel.tickers.index(t) for t in sub.tickers]
        assert order == sorted(order)
        np.testing.assert_array_equal(sub.prices, panel.prices[:, order])
        with pytest.raises(ValueError):
            panel.subset(4)


class TestLogReturns:
    def test_example(self):
        np.testing.assert_allclose(log_returns(np.array([[100.0], [110.0]])), [[math.log(1.1)]],
                                   rtol=1e-14)

    def test_constant_prices(self):
        np.testing.assert_array_equal(log_returns(np.full((5, 3), 7.0)), np.zeros((4, 3)))

    def test_centering(self, price_file):
        x = log_returns(read_price_panel(str(price_file)), center=True)
        np.testing.assert_allclose(x.mean(axis=0), 0.0, atol=1e-15)

    def test_non_positive(self):
        with pytest.raises(DomainError):
            log_returns(np.array([[1.0], [0.0]]))

    @given(arrays(np.float64, (6, 2), elements=st.floats(0.01, 1e4)))
    @settings(max_examples=30)
    def test_sum_telescopes(self, prices):
        x = log_returns(prices)
        np.testing.assert_allclose(x.sum(axis=0), np.log(prices[-1] / prices[0]),
                                   rtol=1e-9, atol=1e-9)


class TestVolatility:
    def test_against_loop(self, rng):
        x = rng.standard_normal((40, 3))
        w = 6
        vol = volatility_proxy(x, w)
        assert vol.shape == (40 - w, 3)
        for t in range(vol.shape[0]):
            seg = x[t:t + w + 1]
            mean = seg.sum(axis=0) / (w + 1)
            expected = np.sqrt(((seg - mean) ** 2).sum(axis=0) / w)
            np.testing.assert_allclose(vol[t], expected, rtol=1e-12)
        np.testing.assert_allclose(volatility_index(vol), vol.mean(axis=1))

    def test_one_dimensional(self):
        vol = volatility_proxy(np.arange(5.0), 1)
        np.testing.assert_allclose(vol.ravel(), math.sqrt(0.5))

    def test_window_too_long(self):
        with pytest.raises(ValueError):
            volatility_proxy(np.ones((3, 2)), 3)


class TestSeriesCSV:
    def test_round_trip(self, tmp_path, rng):
        m = rng.standard_normal((5, 2))
        path = tmp_path / "s.csv"
        write_series_csv(str(path), m, ["a", "b"], index=[f"2021-01-0{i + 1}" for i in range(5)])
        np.testing.assert_array_equal(read_numeric_csv(str(path)), m)

    def test_no_header(self, tmp_path):
        path = tmp_path / "n.csv"
        path.write_text("1,2\n3,4\n")
        np.testing.assert_array_equal(read_numeric_csv(str(path)), [[1, 2], [3, 4]])


def test_real_data_defaults():
    assert REAL_DATA_DEFAULTS == {"n0": 200, "w": 22, "pi0": 0.05, "kappa": 2, "B": 10, "iota": 5}


class TestCLI:
    @pytest.fixture
    def scenario_file(self, tmp_path):
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps(single_change_config(10, "uniform", seed=3, length=300,
                                                        beta=-0.6)))
        return path

    def test_simulate_then_detect(self, tmp_path, scenario_file, capsys):
        sim = tmp_path / "sim"
        assert main(["simulate", "--spec", str(scenario_file), "--out", str(sim)]) == 0
        truth = json.loads((sim / "ground_truth.json").read_text())
        assert truth["change_times"] == [300] and truth["T"] == 600
        data = read_matrix(str(sim / "data.csv"))
        assert data.shape == (600, 10)
        assert read_matrix(str(sim / "omega_0.bin")).shape == (10, 10)

        outs = []
        for name in ("d1", "d2"):
            out = tmp_path / name
            assert main(["detect", "--data", str(sim / "data.csv"), "--out", str(out),
                         "--n0", "150", "--w", "6", "--pi0", "0.01"]) == 0
            outs.append(((out / "trace.csv").read_text(), (out / "detected.json").read_text()))
        assert outs[0] == outs[1]
        trace = read_trace_csv(str(tmp_path / "d1" / "trace.csv"))
        assert len(trace) == 600
        detected = json.loads(outs[0][1])
        assert any(0 <= d + 6 - 300 <= 40 for d in detected)
        cfg = json.loads((tmp_path / "d1" / "config.json").read_text())
        assert cfg["n0"] == 150 and cfg["kappa"] == REAL_DATA_DEFAULTS["kappa"]

    def test_ini_config_overridden_by_flags(self, tmp_path, scenario_file):
        sim = tmp_path / "sim"
        main(["simulate", "--spec", str(scenario_file), "--out", str(sim)])
        ini = tmp_path / "cfg.ini"
        ini.write_text("[pipeline]\nn0 = 180\nB = 7\n[detector]\nw = 5\npi0 = 0.02\n")
        out = tmp_path / "det"
        assert main(["detect", "--data", str(sim / "data.csv"), "--config", str(ini),
                     "--out", str(out), "--w", "6"]) == 0
        cfg = json.loads((out / "config.json").read_text())
        assert cfg["n0"] == 180 and cfg["B"] == 7
        assert cfg["detector"]["w"] == 6 and cfg["detector"]["pi0"] == 0.02

    def test_env_output_dir(self, tmp_path, scenario_file, monkeypatch):
        monkeypatch.setenv("GGMCPD_OUTPUT_DIR", str(tmp_path / "env"))
        assert main(["simulate", "--spec", str(scenario_file)]) == 0
        assert (tmp_path / "env" / "simulate" / "data.csv").exists()

    def test_error_reporting(self, tmp_path, capsys):
        code = main(["detect", "--data", str(tmp_path / "missing.csv")])
        assert code == 1
        err = json.loads(capsys.readouterr().err.strip())
        assert err["command"] == "detect" and err["error"]

    def test_invalid_parameters(self, tmp_path, capsys):
        path = tmp_path / "d.csv"
        path.write_text("1,2\n3,4\n")
        assert main(["detect", "--data", str(path), "--n0", "3", "--w", "5"]) == 1
        assert "error" in json.loads(capsys.readouterr().err)

    def test_exit_status_from_module(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "ggmcpd", "simulate", "--spec",
                               str(tmp_path / "none.json")], capture_output=True, text=True)
        assert proc.returncode == 1
        assert json.loads(proc.stderr.strip().splitlines()[-1])["command"] == "simulate"

    def test_null_dist(self, tmp_path, capsys):
        out = tmp_path / "nd"
        assert main(["null-dist", "--p", "20", "--dmax", "3", "--w", "4", "--reps", "100",
                     "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["n"] == 100
        samples = read_numeric_csv(str(out / "samples.csv"))
        assert samples.shape == (100, 1)
        assert samples.mean() == pytest.approx(summary["mean"], abs=1e-12)

    def test_power(self, tmp_path, scenario_file):
        out = tmp_path / "pw"
        assert main(["power", "--scenario", str(scenario_file), "--reps", "3", "--w", "5",
                     "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert 0 <= summary["pi0_hat"] <= 1 and summary["pi1_hat"] < 0.5

    def test_ingest(self, tmp_path, price_file):
        out = tmp_path / "ret.csv"
        assert main(["ingest", "--prices", str(price_file), "--out", str(out),
                     "--vol-window", "2"]) == 0
        x = read_numeric_csv(str(out))
        panel = read_price_panel(str(price_file))
        np.testing.assert_allclose(x, log_returns(panel), rtol=1e-15)
        assert out.read_text().splitlines()[0] == "date,AAA,BBB,CCC"
        vol = read_numeric_csv(str(tmp_path / "ret_volatility.csv"))
        assert vol.shape == (1, 4)
