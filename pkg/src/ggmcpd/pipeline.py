"""Online detection with periodic re-estimation of the pre-change precision matrix.

The state machine has three modes. ``BurnIn`` collects ``n0`` samples and
fits the initial estimate. ``Monitor`` slides a length-``w`` window over
the stream, tests every full window and refits every ``B`` unflagged
steps. An alarm is confirmed after ``iota`` consecutive flags; the change
location is the first sample of the first flagged window, and the stream
re-enters burn-in (``PostAlarmBurnIn``) starting from that location.

Indexing is 0-based. The window tested at step ``t`` covers samples
``t - w + 1 .. t``; ``window_start = t - w + 1``.
"""

import csv
import json
import logging
import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from sklearn.base import BaseEstimator

from .detector import DetectorConfig, WindowBuffer, test_step
from .estimator import DEFAULT_MAX_ITER, DEFAULT_TOL, bic_select_cov, minibatch_refit
from .exceptions import SeparationWarning
from .scenarios import separation_bound
from .validation import check_positive_int, check_samples

logger = logging.getLogger(__name__)


class Mode(str, Enum):
    BURN_IN = "BurnIn"
    MONITOR = "Monitor"
    POST_ALARM_BURN_IN = "PostAlarmBurnIn"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class PipelineConfig:
    """Tuning of the online pipeline.

    Parameters
    ----------
    n0 : int
        Burn-in length; must exceed the window length.
    B : int
        Number of unflagged steps between refits.
    kappa : int
        Every ``kappa``-th refit reruns BIC selection of the penalty.
    detector : DetectorConfig
    iota : int, default=5
        Consecutive flags needed to confirm an alarm.
    separation_guard : int, optional
        Expected spacing between changes, checked by :func:`check_separation`.
    center : bool, default=False
        Center samples before forming covariances.
    """

    n0: int
    B: int
    kappa: int
    detector: DetectorConfig
    iota: int = 5
    separation_guard: int = None
    center: bool = False
    grid_size: int = 20
    tol: float = DEFAULT_TOL
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        check_positive_int(self.n0, "n0")
        check_positive_int(self.B, "B")
        check_positive_int(self.kappa, "kappa")
        check_positive_int(self.iota, "iota")
        if self.n0 <= self.detector.w:
            raise ValueError(f"n0={self.n0} must exceed the window length w={self.detector.w}")
        if self.separation_guard is not None:
            check_positive_int(self.separation_guard, "separation_guard")

    @property
    def w(self):
        return self.detector.w


@dataclass(frozen=True)
class StepEvent:
    t: int
    mode: Mode
    statistic: float = None
    flagged: bool = False
    alarm_confirmed: bool = False
    refit_performed: bool = False
    window_start: int = None
    diagnostic: str = None


class _Moments:
    """Running first and second moments of a sample set."""

    def __init__(self, p):
        self.gram = np.zeros((p, p))
        self.total = np.zeros(p)
        self.n = 0

    def add(self, x):
        self.gram += np.outer(x, x)
        self.total += x
        self.n += 1

    def covariance(self, center):
        cov = self.gram / self.n
        if center:
            mean = self.total / self.n
            cov = cov - np.outer(mean, mean)
        return 0.5 * (cov + cov.T)


@dataclass
class PipelineState:
    """Mutable state of one pipeline instance."""

    p: int
    w: int
    mode: Mode = Mode.BURN_IN
    t: int = 0
    b: int = 0
    t_hat_last: int = 0
    omega_hat: object = None
    consecutive_flags: int = 0
    run_start: int = None
    refit_count: int = 0
    tau0: float = None
    detected: list = field(default_factory=list)
    buffer: WindowBuffer = None
    history: _Moments = None
    recent: deque = None

    @classmethod
    def initial(cls, p, config):
        state = cls(p=int(p), w=config.w)
        state.buffer = WindowBuffer(config.w, p)
        state.history = _Moments(p)
        state.recent = deque(maxlen=config.w + config.iota)
        return state


def _fit_initial(state, config):
    cov = state.history.covariance(config.center)
    _, sol, _ = bic_select_cov(cov, state.history.n, config.grid_size, config.tol, config.max_iter)
    state.omega_hat = sol.omega_hat
    state.tau0 = sol.tau0
    state.refit_count = 0
    state.b = 0
    state.mode = Mode.MONITOR
    state.buffer.clear()


def _refit(state, config):
    state.refit_count += 1
    cov = state.history.covariance(config.center)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sol = minibatch_refit(
            cov, state.refit_count, config.kappa, state.tau0,
            warm_start=state.omega_hat.matrix, grid_size=config.grid_size,
            n=state.history.n, tol=config.tol, max_iter=config.max_iter,
        )
    state.omega_hat = sol.omega_hat
    state.tau0 = sol.tau0


def _burn_in_step(state, x, config):
    state.history.add(x)
    event_mode = state.mode
    refit = False
    diagnostic = None
    if state.history.n >= config.n0:
        try:
            _fit_initial(state, config)
            refit = True
        except Exception as exc:  # keep collecting; retry on the next sample
            diagnostic = f"burn-in fit failed: {exc}"
            logger.warning(diagnostic)
    return StepEvent(t=state.t, mode=event_mode, refit_performed=refit, diagnostic=diagnostic)


def _confirm_alarm(state, config):
    location = state.run_start
    state.detected.append(location)
    state.t_hat_last = location
    seed_rows = list(state.recent)[-(state.t - location + 1):]
    state.history = _Moments(state.p)
    state.buffer.clear()
    state.consecutive_flags = 0
    state.run_start = None
    state.b = 0
    state.omega_hat = None
    state.mode = Mode.POST_ALARM_BURN_IN
    for row in seed_rows:
        state.history.add(row)
    if state.history.n >= config.n0:
        _fit_initial(state, config)


def step(state, x_t, config):
    """Advance the pipeline by one observation.

    Returns ``(state, event)``; ``state`` is updated in place.
    """
    x = np.asarray(x_t, dtype=np.float64)
    if x.shape != (state.p,):
        raise ValueError(f"expected observation of shape ({state.p},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("observation contains non-finite values")
    state.recent.append(x.copy())

    if state.mode is not Mode.MONITOR:
        event = _burn_in_step(state, x, config)
        state.t += 1
        return state, event

    evicted = state.buffer.push(x)
    if evicted is not None:
        state.history.add(evicted)
    if not state.buffer.full:
        event = StepEvent(t=state.t, mode=Mode.MONITOR)
        state.t += 1
        return state, event

    window_start = state.t - config.w + 1
    result = test_step(state.omega_hat, state.buffer, config.detector)
    confirmed = False
    refit = False
    diagnostic = None
    if not result.flagged:
        state.consecutive_flags = 0
        state.run_start = None
        state.b += 1
        if state.b == config.B:
            state.b = 0
            try:
                _refit(state, config)
                refit = True
            except Exception as exc:  # keep the previous estimate
                diagnostic = f"refit failed: {exc}"
                logger.warning(diagnostic)
    else:
        if state.consecutive_flags == 0:
            state.run_start = window_start
        state.consecutive_flags += 1
        if state.consecutive_flags == config.iota:
            confirmed = True
            _confirm_alarm(state, config)
    event = StepEvent(
        t=state.t, mode=Mode.MONITOR, statistic=float(result.t_stat), flagged=result.flagged,
        alarm_confirmed=confirmed, refit_performed=refit, window_start=window_start,
        diagnostic=diagnostic,
    )
    state.t += 1
    return state, event


def run(stream, config):
    """Fold :func:`step` over a ``(T, p)`` stream.

    Returns ``(detected, trace)`` where ``detected`` lists confirmed change
    locations (window starts) and ``trace`` holds one :class:`StepEvent` per
    sample.
    """
    x = check_samples(stream)
    state = PipelineState.initial(x.shape[1], config)
    trace = []
    for row in x:
        state, event = step(state, row, config)
        trace.append(event)
    return list(state.detected), trace


def check_separation(config, p, d_max, constant=1.0):
    """Advisory check of the configured change spacing.

    Returns a :class:`SeparationWarning` (also emitted through
    :mod:`warnings`) when ``config.separation_guard`` is below
    ``C p d_max log^2 p max(w, log p)``; otherwise ``None``.
    """
    spacing = config.separation_guard
    if spacing is None or math.isinf(spacing):
        return None
    bound = separation_bound(p, d_max, config.w, constant)
    if spacing < bound:
        warning = SeparationWarning(
            f"change spacing {spacing} is below the separation bound {bound:.4g} "
            f"(p={p}, d_max={d_max}, w={config.w}, C={constant})"
        )
        warnings.warn(warning, stacklevel=2)
        return warning
    return None


# ---------------------------------------------------------------------------
# trace export

TRACE_COLUMNS = ("t", "mode", "statistic", "flagged", "alarm_confirmed", "refit_performed")


def write_trace_csv(path, trace):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for ev in trace:
            stat = "NA" if ev.statistic is None else format(ev.statistic, ".17g")
            writer.writerow([ev.t, str(ev.mode), stat, int(ev.flagged),
                             int(ev.alarm_confirmed), int(ev.refit_performed)])


def read_trace_csv(path):
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(StepEvent(
                t=int(row["t"]), mode=Mode(row["mode"]),
                statistic=None if row["statistic"] == "NA" else float(row["statistic"]),
                flagged=row["flagged"] == "1", alarm_confirmed=row["alarm_confirmed"] == "1",
                refit_performed=row["refit_performed"] == "1",
            ))
    return out


def write_detected_json(path, detected):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([int(d) for d in detected], fh)


class OnlineChangeDetector(BaseEstimator):
    """Streaming change-point detector with mini-batch re-estimation.

    Parameters
    ----------
    n0 : int, default=1500
        Burn-in length.
    w : int, default=20
        Window length.
    pi0 : float, default=0.01
        Per-window false-alarm rate.
    B : int, default=50
        Unflagged steps between refits.
    kappa : int, default=4
        Refits between BIC re-selections.
    iota : int, default=5
        Consecutive flags needed to confirm an alarm.
    center : bool, default=False

    Attributes
    ----------
    change_points_ : list of int
        Confirmed change locations (0-based sample indices).
    trace_ : list of StepEvent
    state_ : PipelineState
    """

    def __init__(self, n0=1500, w=20, pi0=0.01, B=50, kappa=4, iota=5, center=False):
        self.n0 = n0
        self.w = w
        self.pi0 = pi0
        self.B = B
        self.kappa = kappa
        self.iota = iota
        self.center = center

    def _config(self):
        return PipelineConfig(
            n0=self.n0, B=self.B, kappa=self.kappa, iota=self.iota, center=self.center,
            detector=DetectorConfig(w=self.w, pi0=self.pi0),
        )

    def fit(self, X, y=None):
        """Run the pipeline over ``X`` from a fresh state."""
        x = check_samples(X)
        self.config_ = self._config()
        self.state_ = PipelineState.initial(x.shape[1], self.config_)
        self.trace_ = []
        self.n_features_in_ = x.shape[1]
        return self.partial_fit(x)

    def partial_fit(self, X, y=None):
        """Continue the stream with more rows of ``X``."""
        if not hasattr(self, "state_"):
            return self.fit(X)
        x = check_samples(X, n_features=self.n_features_in_)
        for row in x:
            _, event = step(self.state_, row, self.config_)
            self.trace_.append(event)
        self.change_points_ = list(self.state_.detected)
        return self

    def fit_predict(self, X, y=None):
        return self.fit(X).change_points_

    def statistics(self):
        """Per-sample statistic with ``nan`` where none was computed."""
        return np.array([np.nan if e.statistic is None else e.statistic for e in self.trace_])
