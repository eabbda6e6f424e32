"""Window test statistic and sequential decision rule.

A window holds ``w`` consecutive observations. Each node ``s`` contributes a
normalized conditional-residual energy ``Y_s``; under no change ``w * Y_s``
is chi-square with ``w`` degrees of freedom. The statistic sums the barrier
``f(Y_s)`` over nodes, centers by the null mean and scales by the null
standard deviation built from the partial correlations.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import BarrierDomainError, WindowNotFull
from .ggm import PartialCorrelationMatrix, PrecisionMatrix, validate_precision
from .specialfn import barrier_f, g1, g2, gaussian_quantile
from .validation import check_samples, check_window_length


@dataclass(frozen=True)
class DetectorConfig:
    """Window length, target false-alarm rate and critical value.

    ``zeta`` defaults to the upper ``pi0`` Gaussian quantile.
    """

    w: int
    pi0: float = 0.01
    zeta: float = None

    def __post_init__(self):
        check_window_length(self.w)
        if not 0.0 < self.pi0 < 1.0:
            raise ValueError(f"pi0 must lie in (0, 1), got {self.pi0!r}")
        if self.zeta is None:
            object.__setattr__(self, "zeta", gaussian_quantile(self.pi0))
        if not math.isfinite(self.zeta):
            raise ValueError("zeta must be finite")
        object.__setattr__(self, "w", int(self.w))


class WindowBuffer:
    """Fixed-capacity ring buffer of the most recent observations."""

    def __init__(self, w, p):
        self.w = check_window_length(w)
        self.p = int(p)
        self._data = np.empty((self.w, self.p))
        self._start = 0
        self._size = 0

    def __len__(self):
        return self._size

    @property
    def full(self):
        return self._size == self.w

    def push(self, x):
        """Append ``x``; return the evicted oldest row, or ``None``."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.p,):
            raise ValueError(f"expected observation of shape ({self.p},), got {x.shape}")
        evicted = None
        if self._size < self.w:
            self._data[(self._start + self._size) % self.w] = x
            self._size += 1
        else:
            evicted = self._data[self._start].copy()
            self._data[self._start] = x
            self._start = (self._start + 1) % self.w
        return evicted

    def clear(self):
        self._start = 0
        self._size = 0

    def array(self):
        """Stored rows, oldest first, as a ``(len, p)`` copy."""
        idx = (self._start + np.arange(self._size)) % self.w
        return self._data[idx]


@dataclass(frozen=True)
class TestResult:
    t_stat: float
    flagged: bool
    y_values: np.ndarray = field(repr=False)
    denominator: float


def _window_array(window, p):
    if isinstance(window, WindowBuffer):
        if not window.full:
            raise WindowNotFull(f"window holds {len(window)} of {window.w} rows")
        arr = window.array()
    else:
        arr = np.atleast_2d(np.asarray(window, dtype=np.float64))
    if arr.shape[1] != p:
        raise ValueError(f"dimension mismatch: window has {arr.shape[1]} columns, precision has {p}")
    return arr


def y_stats(omega, window):
    """Per-node statistic ``Y_s = sum_r <x_r, Omega[:, s]>^2 / (w Omega_ss)``."""
    omega = validate_precision(omega)
    x = _window_array(window, omega.p)
    proj = x @ omega.matrix
    return np.einsum("ij,ij->j", proj, proj) / (x.shape[0] * omega.diag)


def statistic_denominator(r_matrix, w):
    """``g2(w) * sqrt(sum_ij R_ij^4)``."""
    if isinstance(r_matrix, PrecisionMatrix):
        return g2(w) * math.sqrt(r_matrix.correlation_norm4)
    r = np.asarray(r_matrix, dtype=np.float64)
    return g2(w) * math.sqrt(float(np.sum((r * r) ** 2)))


def t_statistic(y, r_matrix, w):
    """Standardized barrier sum over nodes.

    Parameters
    ----------
    y : array of shape (p,)
        Node statistics, all strictly positive.
    r_matrix : PartialCorrelationMatrix, PrecisionMatrix or array
        Partial correlations (a precision matrix is normalized first).
    w : int
    """
    y = np.asarray(y, dtype=np.float64)
    if isinstance(r_matrix, PartialCorrelationMatrix):
        r_matrix = r_matrix.matrix
    p = r_matrix.p if isinstance(r_matrix, PrecisionMatrix) else np.shape(r_matrix)[0]
    if y.shape != (p,):
        raise ValueError(f"dimension mismatch: y has shape {y.shape}, R has {p} rows")
    if not np.all(y > 0):
        raise BarrierDomainError("node statistic is non-positive; window is degenerate")
    center = g1(w)
    num = math.fsum((barrier_f(y) - center).tolist())
    return num / statistic_denominator(r_matrix, w)


def decide(t_stat, config):
    return bool(t_stat >= config.zeta)


def test_step(omega, window, config):
    """Evaluate the statistic on one full window and apply the threshold.

    The computation is the same whether ``omega`` is the true precision
    matrix or an estimate.
    """
    omega = validate_precision(omega)
    y = y_stats(omega, window)
    if isinstance(window, WindowBuffer):
        w = window.w
    else:
        w = np.shape(window)[0]
    if w != config.w:
        raise ValueError(f"window length {w} differs from configured w={config.w}")
    denom = statistic_denominator(omega, w)
    t = t_statistic(y, omega, w)
    return TestResult(t_stat=t, flagged=decide(t, config), y_values=y, denominator=denom)


# Not a pytest test despite the name.
test_step.__test__ = False
TestResult.__test__ = False


def sliding_statistics(omega, samples, w):
    """Statistic for every length-``w`` window of ``samples``.

    Entry ``i`` uses rows ``i .. i + w - 1``; the output has ``n - w + 1``
    values. Vectorized equivalent of repeated :func:`test_step` calls.
    """
    omega = validate_precision(omega)
    x = check_samples(samples, n_features=omega.p)
    w = check_window_length(w)
    if x.shape[0] < w:
        return np.empty(0)
    proj = x @ omega.matrix
    energy = proj * proj / omega.diag
    y = sliding_window_view(energy, w, axis=0).sum(axis=-1) / w
    if not np.all(y > 0):
        raise BarrierDomainError("node statistic is non-positive; window is degenerate")
    num = np.sum(barrier_f(y) - g1(w), axis=1)
    return num / statistic_denominator(omega, w)


class KnownPrecisionDetector(BaseEstimator):
    """Sliding-window change detector for a fixed reference precision matrix.

    Parameters
    ----------
    precision : array-like of shape (p, p), optional
        Reference (pre-change) precision matrix. When omitted, :meth:`fit`
        uses the inverse sample covariance of the training data.
    w : int, default=20
        Window length.
    pi0 : float, default=0.01
        Target per-window false-alarm rate.

    Attributes
    ----------
    precision_ : PrecisionMatrix
    config_ : DetectorConfig
    """

    def __init__(self, precision=None, w=20, pi0=0.01):
        self.precision = precision
        self.w = w
        self.pi0 = pi0

    def fit(self, X=None, y=None):
        self.config_ = DetectorConfig(w=self.w, pi0=self.pi0)
        if self.precision is not None:
            self.precision_ = validate_precision(self.precision)
        else:
            if X is None:
                raise ValueError("either precision or training samples are required")
            x = check_samples(X)
            cov = x.T @ x / x.shape[0]
            self.precision_ = validate_precision(np.linalg.inv(cov))
        self.n_features_in_ = self.precision_.p
        return self

    def decision_function(self, X):
        """Statistic for each length-``w`` window of ``X``."""
        check_is_fitted(self, "precision_")
        return sliding_statistics(self.precision_, X, self.config_.w)

    def predict(self, X):
        """Boolean flag per window (statistic at or above the critical value)."""
        return self.decision_function(X) >= self.config_.zeta
