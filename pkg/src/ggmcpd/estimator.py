"""Sparse precision estimation: l1-penalized Gaussian likelihood with BIC tuning.

The solver minimizes

    -log det(Omega) + <Omega, S> + tau * sum_ij |Omega_ij|

over positive-definite ``Omega`` (the diagonal is penalized too) by
blockwise coordinate descent on the dual, one lasso per column. The working
covariance ``W`` starts at ``S + tau I`` and stays feasible for the dual
box constraint ``|W - S| <= tau`` after the first sweep.
"""

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit
from scipy import linalg
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import NotConverged, NotPositiveDefinite
from .ggm import PrecisionMatrix
from .validation import check_samples

DEFAULT_TOL = 1e-5
DEFAULT_MAX_ITER = 200
JITTER_FACTOR = 1e-8


@dataclass(frozen=True)
class GlassoSolution:
    """Result of one penalized fit.

    ``objective`` is the penalized negative log-likelihood at ``omega_hat``.
    ``dual_path`` holds ``-log det W - p`` after each sweep; it is the
    dual objective in minimization form and is nonincreasing.
    """

    omega_hat: PrecisionMatrix
    tau: float
    iterations: int
    objective: float
    converged: bool
    covariance_hat: np.ndarray = field(repr=False)
    dual_path: tuple = field(default=(), repr=False)
    tau0: float = None
    bic: float = None


def sample_covariance(samples, center=False):
    """``X^T X / n`` (or the centered version when ``center`` is true)."""
    x = check_samples(samples, min_samples=2)
    if center:
        x = x - x.mean(axis=0)
    return x.T @ x / x.shape[0]


def penalized_objective(omega, cov, tau):
    """``-log det(Omega) + <Omega, S> + tau ||Omega||_1``; ``inf`` if not PD."""
    omega = np.asarray(omega, dtype=np.float64)
    sign, logdet = np.linalg.slogdet(omega)
    if sign <= 0:
        return math.inf
    return float(-logdet + np.sum(omega * cov) + tau * np.sum(np.abs(omega)))


def kkt_residual(omega, cov, tau):
    """Largest violation of the subgradient optimality conditions.

    At the optimum ``S - Omega^{-1} + tau * Z = 0`` with ``Z`` a subgradient
    of the l1 norm: ``Z_ij = sign(Omega_ij)`` on the support and
    ``|Z_ij| <= 1`` off it.
    """
    omega = np.asarray(omega, dtype=np.float64)
    grad = cov - np.linalg.inv(omega)
    grad = 0.5 * (grad + grad.T)
    on = omega != 0
    res_on = np.abs(grad + tau * np.sign(omega))[on]
    res_off = np.maximum(np.abs(grad) - tau, 0.0)[~on]
    vals = np.concatenate([res_on, res_off])
    return float(vals.max()) if vals.size else 0.0


@njit(cache=True)
def _cd_pass(W, S, B, g, j, tau, active_only):
    p = W.shape[0]
    max_delta = 0.0
    for k in range(p):
        if k == j:
            continue
        old = B[k, j]
        if active_only and old == 0.0:
            continue
        wkk = W[k, k]
        r = S[k, j] - (g[k] - wkk * old)
        if r > tau:
            new = (r - tau) / wkk
        elif r < -tau:
            new = (r + tau) / wkk
        else:
            new = 0.0
        d = new - old
        if d != 0.0:
            B[k, j] = new
            for m in range(p):
                g[m] += W[m, k] * d
            ad = abs(d) * math.sqrt(wkk)
            if ad > max_delta:
                max_delta = ad
    return max_delta


@njit(cache=True)
def _solve_column(W, S, B, j, tau, tol, max_sweeps):
    """Lasso coordinate descent for column ``j``; writes ``W[:, j] = W11 beta``."""
    p = W.shape[0]
    g = np.zeros(p)
    for l in range(p):
        b = B[l, j]
        if l != j and b != 0.0:
            for k in range(p):
                g[k] += W[k, l] * b
    sweeps = 0
    while True:
        # full pass, then iterate on the current active set
        max_delta = _cd_pass(W, S, B, g, j, tau, False)
        sweeps += 1
        if max_delta < tol or sweeps >= max_sweeps:
            break
        while sweeps < max_sweeps:
            sweeps += 1
            if _cd_pass(W, S, B, g, j, tau, True) < tol:
                break
    for k in range(p):
        if k != j:
            W[k, j] = g[k]
            W[j, k] = g[k]
    return sweeps


@njit(cache=True)
def _dual_sweep(W, S, B, tau, tol, max_sweeps):
    p = W.shape[0]
    total = 0
    for j in range(p):
        total += _solve_column(W, S, B, j, tau, tol, max_sweeps)
    return total


def _precision_from_dual(W, B):
    p = W.shape[0]
    schur = np.diag(W) - np.einsum("kj,kj->j", W, B)
    theta = 1.0 / schur
    omega = -B * theta[None, :]
    omega[np.diag_indices(p)] = theta
    return 0.5 * (omega + omega.T)


def _cholesky_ok(m):
    try:
        linalg.cholesky(m, lower=True, check_finite=False)
    except linalg.LinAlgError:
        return False
    return True


def _prepare_cov(cov, tau):
    cov = np.array(cov, dtype=np.float64, copy=True)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("covariance must be square")
    if not np.all(np.isfinite(cov)):
        raise ValueError("covariance has non-finite entries")
    cov = 0.5 * (cov + cov.T)
    p = cov.shape[0]
    mean_diag = float(np.mean(np.diag(cov)))
    jitter = JITTER_FACTOR * (mean_diag if mean_diag > 0 else 1.0)
    for _ in range(8):
        if _cholesky_ok(cov + tau * np.eye(p)):
            return cov
        cov[np.diag_indices(p)] += jitter
        jitter *= 10.0
    raise NotPositiveDefinite("covariance is not positive semi-definite even after diagonal jitter")


def penalized_precision(cov, tau, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER, warm_start=None):
    """Solve the l1-penalized precision problem for one ``tau``.

    Parameters
    ----------
    cov : array of shape (p, p)
        Symmetric positive semi-definite sample covariance.
    tau : float
        Penalty level, applied to every entry including the diagonal.
    tol : float
        Stop when the largest change of the working covariance, relative to
        its largest entry, falls below ``tol``.
    max_iter : int
        Cap on outer sweeps. Reaching it emits :class:`NotConverged` and
        returns the last iterate with ``converged=False``.
    warm_start : array-like or PrecisionMatrix, optional
        Previous precision estimate used to initialize the dual variables.

    Returns
    -------
    GlassoSolution
    """
    tau = float(tau)
    if tau < 0 or not math.isfinite(tau):
        raise ValueError(f"tau must be a finite nonnegative number, got {tau!r}")
    cov = _prepare_cov(cov, tau)
    p = cov.shape[0]
    inner_tol = 0.1 * tol

    W = None
    if warm_start is not None:
        prev = np.asarray(warm_start, dtype=np.float64)
        if prev.shape == (p, p):
            try:
                W0 = linalg.inv(prev, check_finite=False)
            except linalg.LinAlgError:
                W0 = None
            if W0 is not None:
                W0 = 0.5 * (W0 + W0.T)
                W0[np.diag_indices(p)] = np.diag(cov) + tau
                if _cholesky_ok(W0):
                    W = W0
                    B = -prev / np.diag(prev)[None, :]
                    B[np.diag_indices(p)] = 0.0
                    B = np.ascontiguousarray(B)
    if W is None:
        W = cov + tau * np.eye(p)
        B = np.zeros((p, p))

    dual_path = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        W_old = W.copy()
        _dual_sweep(W, cov, B, tau, inner_tol, 1000)
        sign, logdet = np.linalg.slogdet(W)
        dual_path.append(-logdet - p if sign > 0 else math.inf)
        scale = np.max(np.abs(W_old))
        change = np.max(np.abs(W - W_old)) / scale
        if change < tol:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"penalized_precision did not converge in {max_iter} sweeps (tau={tau:.3g})",
            NotConverged,
            stacklevel=2,
        )

    omega = _precision_from_dual(W, B)
    if not _cholesky_ok(omega):
        omega = linalg.inv(W)
        omega = 0.5 * (omega + omega.T)
    return GlassoSolution(
        omega_hat=PrecisionMatrix(omega),
        tau=tau,
        iterations=iterations,
        objective=penalized_objective(omega, cov, tau),
        converged=converged,
        covariance_hat=W,
        dual_path=tuple(dual_path),
    )


def tau_scale(p, n):
    """``sqrt(log p / n)``, the rate that couples the penalty to sample size."""
    return math.sqrt(math.log(p) / n)


def tau_grid(p, n, grid_size=20):
    """Penalties ``10^(-1 + j/10) sqrt(log p / n)`` for ``j = 0 .. grid_size-1``."""
    j = np.arange(grid_size)
    return 10.0 ** (-1.0 + j / 10.0) * tau_scale(p, n)


def bic_score(omega, cov, n):
    """``n [-log det Omega + <Omega, S>] + log(n) (k + p)``.

    ``k`` counts nonzero strictly-upper-triangular entries of ``Omega``.
    """
    omega = np.asarray(omega, dtype=np.float64)
    p = omega.shape[0]
    sign, logdet = np.linalg.slogdet(omega)
    if sign <= 0:
        return math.inf
    k = int(np.count_nonzero(np.triu(omega, 1))) + p
    return float(n * (-logdet + np.sum(omega * cov)) + math.log(n) * k)


@dataclass(frozen=True)
class BICPath:
    taus: np.ndarray
    scores: np.ndarray
    solutions: list = field(repr=False)
    best_index: int


def bic_select_cov(cov, n, grid_size=20, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """BIC model selection from a covariance matrix and its sample count.

    Fits the grid from the largest penalty down, warm-starting each fit from
    the previous one. Ties go to the larger penalty.

    Returns
    -------
    tau_star : float
    solution : GlassoSolution
        With ``tau0`` and ``bic`` filled in.
    path : BICPath
    """
    if n < 2:
        raise ValueError("at least two samples are required")
    cov = np.asarray(cov, dtype=np.float64)
    p = cov.shape[0]
    taus = tau_grid(p, n, grid_size)
    scale = tau_scale(p, n) if p > 1 else 1.0
    scores = np.full(grid_size, math.inf)
    sols = [None] * grid_size
    best = None
    prev = None
    for j in range(grid_size - 1, -1, -1):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NotConverged)
            sol = penalized_precision(cov, taus[j], tol=tol, max_iter=max_iter, warm_start=prev)
        prev = sol.omega_hat.matrix
        score = bic_score(sol.omega_hat.matrix, cov, n)
        scores[j] = score
        sols[j] = replace(sol, tau0=taus[j] / scale, bic=score)
        if best is None or score < scores[best]:
            best = j
    path = BICPath(taus=taus, scores=scores, solutions=sols, best_index=best)
    return float(taus[best]), sols[best], path


def bic_select(samples, grid_size=20, center=False, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Select the penalty on the standard grid by BIC.

    Returns ``(tau_star, solution)``.
    """
    x = check_samples(samples, min_samples=2)
    cov = sample_covariance(x, center=center)
    tau_star, sol, _ = bic_select_cov(cov, x.shape[0], grid_size, tol, max_iter)
    return tau_star, sol


def minibatch_refit(
    samples_since_last_change,
    kappa_counter,
    kappa,
    last_tau0,
    warm_start=None,
    grid_size=20,
    n=None,
    tol=DEFAULT_TOL,
    max_iter=DEFAULT_MAX_ITER,
):
    """Periodic re-estimation of the pre-change precision matrix.

    Every ``kappa``-th call (``kappa_counter % kappa == 0``) reruns BIC
    selection. Otherwise the previous scale-free penalty ``last_tau0`` is
    reused as ``tau = last_tau0 * sqrt(log p / n)`` with one warm-started fit.

    ``samples_since_last_change`` may be an ``(n, p)`` sample matrix, or a
    ``(p, p)`` covariance when ``n`` is given.
    """
    if n is None:
        x = check_samples(samples_since_last_change, min_samples=2)
        cov = sample_covariance(x)
        n = x.shape[0]
    else:
        cov = np.asarray(samples_since_last_change, dtype=np.float64)
        if n < 2:
            raise ValueError("at least two samples are required")
    if kappa < 1:
        raise ValueError("kappa must be positive")
    if kappa_counter % kappa == 0 or last_tau0 is None:
        _, sol, _ = bic_select_cov(cov, n, grid_size, tol, max_iter)
        return sol
    p = cov.shape[0]
    scale = tau_scale(p, n) if p > 1 else 1.0
    tau = last_tau0 * scale
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NotConverged)
        sol = penalized_precision(cov, tau, tol=tol, max_iter=max_iter, warm_start=warm_start)
    return replace(sol, tau0=last_tau0, bic=bic_score(sol.omega_hat.matrix, cov, n))


class SparsePrecisionEstimator(BaseEstimator):
    """l1-penalized precision estimator with optional BIC tuning.

    Parameters
    ----------
    tau : float or None, default=None
        Fixed penalty. ``None`` selects it by BIC on the standard grid.
    grid_size : int, default=20
    tol : float, default=1e-5
    max_iter : int, default=200
    assume_centered : bool, default=True
        Treat the data as zero-mean (no centering before forming ``S``).

    Attributes
    ----------
    precision_ : ndarray of shape (p, p)
    covariance_ : ndarray of shape (p, p)
        Working covariance at convergence (inverse of ``precision_``).
    tau_ : float
    solution_ : GlassoSolution
    bic_path_ : BICPath or None
    """

    def __init__(self, tau=None, grid_size=20, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                 assume_centered=True):
        self.tau = tau
        self.grid_size = grid_size
        self.tol = tol
        self.max_iter = max_iter
        self.assume_centered = assume_centered

    def fit(self, X, y=None):
        x = check_samples(X, min_samples=2)
        cov = sample_covariance(x, center=not self.assume_centered)
        if self.tau is None:
            tau, sol, path = bic_select_cov(cov, x.shape[0], self.grid_size, self.tol, self.max_iter)
        else:
            sol = penalized_precision(cov, self.tau, tol=self.tol, max_iter=self.max_iter)
            tau, path = float(self.tau), None
        self.solution_ = sol
        self.precision_ = np.array(sol.omega_hat.matrix)
        self.covariance_ = np.array(sol.covariance_hat)
        self.tau_ = tau
        self.bic_path_ = path
        self.n_features_in_ = x.shape[1]
        return self

    def score(self, X, y=None):
        """Average Gaussian log-likelihood of ``X`` under the fitted model."""
        check_is_fitted(self, "precision_")
        x = check_samples(X, n_features=self.n_features_in_)
        s = x.T @ x / x.shape[0]
        p = x.shape[1]
        sign, logdet = np.linalg.slogdet(self.precision_)
        return float(0.5 * (logdet - np.sum(self.precision_ * s) - p * math.log(2 * math.pi)))
