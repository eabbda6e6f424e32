"""Online change-point detection for sparse Gaussian graphical models."""

from .detector import (DetectorConfig, KnownPrecisionDetector, TestResult, WindowBuffer, decide,
                       sliding_statistics, t_statistic, test_step, y_stats)
from .estimator import (GlassoSolution, SparsePrecisionEstimator, bic_select, minibatch_refit,
                        penalized_precision, sample_covariance)
from .exceptions import (AsymmetryBeyondTolerance, BarrierDomainError, DomainError,
                         NotConverged, NotPositiveDefinite, SeparationWarning, WindowNotFull)
from .ggm import (ChangeSignal, PartialCorrelationMatrix, PrecisionMatrix, change_signal,
                  degree_stats, detectability_threshold, kl_divergence, partial_correlation,
                  sample_ggm, validate_precision)
from .pipeline import (Mode, OnlineChangeDetector, PipelineConfig, PipelineState, StepEvent,
                       check_separation, run, step)
from .specialfn import (barrier_f, chi2_moment_cov, digamma, g1, g2, gaussian_quantile, h_w,
                        h_w_oracle, trigamma)

__version__ = "0.1.0"

__all__ = [
    "AsymmetryBeyondTolerance", "BarrierDomainError", "ChangeSignal", "DetectorConfig",
    "DomainError", "GlassoSolution", "KnownPrecisionDetector", "Mode", "NotConverged",
    "NotPositiveDefinite", "OnlineChangeDetector", "PartialCorrelationMatrix", "PipelineConfig",
    "PipelineState", "PrecisionMatrix", "SeparationWarning", "SparsePrecisionEstimator",
    "StepEvent", "TestResult", "WindowBuffer", "WindowNotFull", "barrier_f", "bic_select",
    "change_signal", "check_separation", "chi2_moment_cov", "decide", "degree_stats",
    "detectability_threshold", "digamma", "g1", "g2", "gaussian_quantile", "h_w", "h_w_oracle",
    "kl_divergence", "minibatch_refit", "partial_correlation", "penalized_precision", "run",
    "sample_covariance", "sample_ggm", "sliding_statistics", "step", "t_statistic", "test_step",
    "trigamma", "validate_precision", "y_stats",
]
