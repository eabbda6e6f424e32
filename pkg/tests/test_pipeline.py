import json
import math
import warnings

import numpy as np
import pytest

from ggmcpd import pipeline as pipeline_mod
from ggmcpd.detector import DetectorConfig
from ggmcpd.exceptions import SeparationWarning
from ggmcpd.ggm import PrecisionMatrix, sample_ggm
from ggmcpd.pipeline import (Mode, OnlineChangeDetector, PipelineConfig, PipelineState,
                             check_separation, read_trace_csv, run, step, write_detected_json,
                             write_trace_csv)
from ggmcpd.scenarios import (ScenarioSpec, StreamSegment, random_sparse_precision,
                              render_stream, uniform_change)

P = 20


@pytest.fixture(scope="module")
def omega():
    return random_sparse_precision(P, 2, seed=24)


@pytest.fixture(scope="module")
def change_stream(omega):
    post = uniform_change(omega, -0.6)
    spec = ScenarioSpec(p=P, segments=[StreamSegment(600, omega), StreamSegment(600, post),
                                       StreamSegment(600, omega)])
    return render_stream(spec, seed=25)


def _config(**kw):
    base = dict(n0=150, B=10, kappa=2, detector=DetectorConfig(w=6))
    base.update(kw)
    return PipelineConfig(**base)


class TestConfig:
    def test_n0_exceeds_window(self):
        with pytest.raises(ValueError):
            PipelineConfig(n0=5, B=1, kappa=1, detector=DetectorConfig(w=5))

    @pytest.mark.parametrize("field", ["B", "kappa", "iota"])
    def test_positive(self, field):
        with pytest.raises(ValueError):
            _config(**{field: 0})


class TestBurnIn:
    def test_short_stream(self, omega):
        x = sample_ggm(omega, 100, seed=1)
        detected, trace = run(x, _config())
        assert detected == []
        assert all(e.mode is Mode.BURN_IN and e.statistic is None for e in trace)

    def test_transition_after_n0(self, omega):
        cfg = _config()
        x = sample_ggm(omega, 200, seed=2)
        _, trace = run(x, cfg)
        assert trace[cfg.n0 - 1].mode is Mode.BURN_IN and trace[cfg.n0 - 1].refit_performed
        assert all(e.mode is Mode.MONITOR for e in trace[cfg.n0:])
        first_stat = next(e.t for e in trace if e.statistic is not None)
        assert first_stat == cfg.n0 + cfg.w - 1
        assert trace[first_stat].window_start == cfg.n0


class TestMonitor:
    def test_statistic_absent_exactly_outside_full_monitor(self, change_stream):
        cfg = _config()
        _, trace = run(change_stream[0], cfg)
        for e in trace:
            if e.mode is not Mode.MONITOR:
                assert e.statistic is None
            elif e.statistic is None:
                assert e.window_start is None

    def test_detects_strong_change(self, change_stream):
        data, changes = change_stream
        cfg = _config()
        detected, _ = run(data, cfg)
        for c in changes:
            assert any(0 <= d + cfg.w - c <= 40 for d in detected)

    def test_detected_increasing_with_gaps(self, change_stream):
        cfg = _config(iota=1)
        detected, _ = run(change_stream[0], cfg)
        assert all(b - a >= cfg.n0 for a, b in zip(detected, detected[1:]))

    def test_refit_cadence(self, omega):
        cfg = _config(B=7)
        _, trace = run(sample_ggm(omega, 600, seed=3), cfg)
        b = 0
        for e in trace:
            if e.mode is not Mode.MONITOR or e.alarm_confirmed:
                # counter restarts with every fresh estimate
                b = 0
            elif e.statistic is not None and not e.flagged:
                b += 1
                assert e.refit_performed == (b % cfg.B == 0)

    def test_iota_one_alarms_on_first_flag(self, change_stream):
        cfg = _config(iota=1)
        _, trace = run(change_stream[0], cfg)
        for e in trace:
            if e.flagged:
                assert e.alarm_confirmed
                break

    def test_iota_run_location(self, change_stream):
        cfg = _config(iota=3)
        detected, trace = run(change_stream[0], cfg)
        confirmations = [e for e in trace if e.alarm_confirmed]
        assert len(confirmations) == len(detected)
        for e, loc in zip(confirmations, detected):
            run_events = trace[e.t - cfg.iota + 1:e.t + 1]
            assert all(r.flagged for r in run_events)
            assert loc == run_events[0].window_start

    def test_post_alarm_burn_in_resumes_at_location_plus_n0(self, change_stream):
        cfg = _config()
        detected, trace = run(change_stream[0], cfg)
        loc = detected[0]
        alarm_t = next(e.t for e in trace if e.alarm_confirmed)
        assert all(e.mode is Mode.POST_ALARM_BURN_IN for e in trace[alarm_t + 1:loc + cfg.n0])
        assert trace[loc + cfg.n0].mode is Mode.MONITOR

    def test_refit_failure_keeps_estimate(self, omega, monkeypatch):
        def boom(*args, **kwargs):
            raise RuntimeError("solver exploded")

        monkeypatch.setattr(pipeline_mod, "minibatch_refit", boom)
        cfg = _config(B=5)
        state = PipelineState.initial(P, cfg)
        events = []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for row in sample_ggm(omega, 250, seed=4):
                state, e = step(state, row, cfg)
                events.append(e)
        failed = [e for e in events if e.diagnostic and "refit failed" in e.diagnostic]
        assert failed and not any(e.refit_performed for e in failed)
        assert state.omega_hat is not None

    def test_dimension_checked(self, omega):
        state = PipelineState.initial(P, _config())
        with pytest.raises(ValueError):
            step(state, np.ones(P + 1), _config())
        with pytest.raises(ValueError):
            step(state, np.full(P, np.nan), _config())


class TestDeterminism:
    def test_replay_bit_exact(self, change_stream):
        cfg = _config()
        a = run(change_stream[0], cfg)
        b = run(change_stream[0], cfg)
        assert a[0] == b[0]
        assert a[1] == b[1]

    def test_partial_fit_matches_fit(self, change_stream):
        data = change_stream[0]
        est = OnlineChangeDetector(n0=150, w=6, B=10, kappa=2)
        full = est.fit(data).change_points_
        stats_full = est.statistics()
        est2 = OnlineChangeDetector(n0=150, w=6, B=10, kappa=2)
        est2.partial_fit(data[:333])
        est2.partial_fit(data[333:])
        assert est2.change_points_ == full
        np.testing.assert_array_equal(est2.statistics(), stats_full)

    def test_fit_predict(self, change_stream):
        est = OnlineChangeDetector(n0=150, w=6, B=10, kappa=2)
        assert est.fit_predict(change_stream[0]) == est.change_points_


class TestSeparation:
    def test_warns(self):
        cfg = PipelineConfig(n0=1500, B=50, kappa=4, detector=DetectorConfig(w=20),
                             separation_guard=3000)
        with pytest.warns(SeparationWarning):
            assert check_separation(cfg, 100, 20) is not None

    def test_infinite_spacing(self):
        cfg = PipelineConfig(n0=1500, B=50, kappa=4, detector=DetectorConfig(w=20))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert check_separation(cfg, 100, 20) is None

    def test_log_branch(self):
        cfg = PipelineConfig(n0=50, B=5, kappa=1, detector=DetectorConfig(w=2),
                             separation_guard=10**9)
        bound = 100 * 3 * math.log(100) ** 3
        assert check_separation(cfg, 100, 3) is None
        small = PipelineConfig(n0=50, B=5, kappa=1, detector=DetectorConfig(w=2),
                               separation_guard=int(bound) - 1)
        with pytest.warns(SeparationWarning):
            check_separation(small, 100, 3)


class TestTraceIO:
    def test_round_trip(self, tmp_path, change_stream):
        detected, trace = run(change_stream[0][:300], _config())
        path = tmp_path / "trace.csv"
        write_trace_csv(str(path), trace)
        back = read_trace_csv(str(path))
        assert len(back) == len(trace)
        for a, b in zip(trace, back):
            assert (a.t, a.mode, a.flagged, a.alarm_confirmed, a.refit_performed) == \
                   (b.t, b.mode, b.flagged, b.alarm_confirmed, b.refit_performed)
            assert a.statistic == b.statistic
        text = path.read_text().splitlines()
        assert text[0] == "t,mode,statistic,flagged,alarm_confirmed,refit_performed"
        assert ",NA," in text[1]

    def test_detected_json(self, tmp_path):
        path = tmp_path / "d.json"
        write_detected_json(str(path), [np.int64(3), 10])
        assert json.loads(path.read_text()) == [3, 10]


def test_stationary_identity_stream_rarely_alarms():
    om = PrecisionMatrix(np.eye(P))
    cfg = _config(n0=400, B=50)
    x = sample_ggm(om, 3000, seed=30)
    detected, trace = run(x, cfg)
    stats = np.array([e.statistic for e in trace if e.statistic is not None])
    assert 0.0 <= np.mean(stats >= cfg.detector.zeta) <= 0.06
    assert len(detected) <= 2
