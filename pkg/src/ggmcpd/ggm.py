"""Precision-matrix algebra, Gaussian graphical model sampling and change diagnostics."""

import math
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import linalg

from .exceptions import AsymmetryBeyondTolerance, DomainError, NotPositiveDefinite
from .specialfn import barrier_f

SYMMETRY_RTOL = 1e-10
DEFAULT_SPARSITY_EPS = 1e-8


class PrecisionMatrix:
    """Validated symmetric positive-definite precision matrix.

    Holds the dense matrix together with its lower Cholesky factor ``L``
    (``Omega = L L^T``). The covariance ``Sigma = Omega^{-1}`` is never formed
    explicitly; solves go through ``L``.

    Instances are treated as immutable: the underlying array is flagged
    read-only.

    Parameters
    ----------
    matrix : array-like of shape (p, p)
    sparsity_eps : float, default=1e-8
        Entries with ``|Omega_ij| <= sparsity_eps`` count as zero in
        :func:`degree_stats` and :attr:`support`.
    """

    def __init__(self, matrix, sparsity_eps=DEFAULT_SPARSITY_EPS):
        arr = np.array(matrix, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
            raise ValueError(f"precision matrix must be square and non-empty, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("precision matrix has non-finite entries")
        scale = np.max(np.abs(arr))
        asym = np.max(np.abs(arr - arr.T))
        if asym > SYMMETRY_RTOL * max(scale, np.finfo(float).tiny):
            raise AsymmetryBeyondTolerance(
                f"max |M - M^T| = {asym:.3e} exceeds {SYMMETRY_RTOL:g} * max|M|"
            )
        arr = 0.5 * (arr + arr.T)
        try:
            chol = linalg.cholesky(arr, lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise NotPositiveDefinite(str(exc)) from None
        if not np.all(np.diag(chol) > 0):
            raise NotPositiveDefinite("Cholesky factor has a non-positive pivot")
        if sparsity_eps < 0:
            raise ValueError("sparsity_eps must be nonnegative")
        arr.setflags(write=False)
        chol.setflags(write=False)
        self._matrix = arr
        self._chol = chol
        self.sparsity_eps = float(sparsity_eps)

    @property
    def matrix(self):
        return self._matrix

    @property
    def chol(self):
        """Lower Cholesky factor ``L`` with ``Omega = L L^T``."""
        return self._chol

    @property
    def p(self):
        return self._matrix.shape[0]

    @property
    def diag(self):
        return np.diagonal(self._matrix)

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._matrix
        return self._matrix.astype(dtype)

    def __repr__(self):
        return f"PrecisionMatrix(p={self.p})"

    def solve(self, rhs):
        """Return ``Omega^{-1} rhs`` via the cached factor."""
        return linalg.cho_solve((self._chol, True), rhs, check_finite=False)

    def covariance(self):
        """Dense ``Sigma = Omega^{-1}``. Mostly useful for tests and small p."""
        return self.solve(np.eye(self.p))

    def logdet(self):
        return 2.0 * float(np.sum(np.log(np.diag(self._chol))))

    @property
    def support(self):
        """Boolean mask of entries with magnitude above ``sparsity_eps``."""
        return np.abs(self._matrix) > self.sparsity_eps

    @cached_property
    def partial_correlation(self):
        return partial_correlation(self)

    @cached_property
    def correlation_norm4(self):
        """``sum_ij R_ij^4``, the squared denominator term of the test statistic."""
        r = self.partial_correlation.matrix
        return float(np.sum((r * r) ** 2))

    def scaled(self, factor):
        return PrecisionMatrix(self._matrix * float(factor), self.sparsity_eps)


class PartialCorrelationMatrix:
    """``R_ij = Omega_ij / sqrt(Omega_ii Omega_jj)`` with unit diagonal."""

    def __init__(self, matrix):
        arr = np.array(matrix, dtype=np.float64, copy=True)
        arr.setflags(write=False)
        self._matrix = arr

    @property
    def matrix(self):
        return self._matrix

    @property
    def p(self):
        return self._matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._matrix
        return self._matrix.astype(dtype)


def validate_precision(matrix, sparsity_eps=DEFAULT_SPARSITY_EPS):
    """Symmetrize, factor and wrap ``matrix``.

    Raises
    ------
    AsymmetryBeyondTolerance
        If the input is not symmetric to 1e-10 relative tolerance.
    NotPositiveDefinite
        If the Cholesky factorization fails.
    """
    if isinstance(matrix, PrecisionMatrix):
        return matrix
    return PrecisionMatrix(matrix, sparsity_eps=sparsity_eps)


def partial_correlation(omega):
    omega = validate_precision(omega)
    m = omega.matrix
    inv_sd = 1.0 / np.sqrt(np.diag(m))
    r = m * inv_sd[:, None] * inv_sd[None, :]
    np.fill_diagonal(r, 1.0)
    return PartialCorrelationMatrix(r)


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_ggm(omega, n, seed=None):
    """Draw ``n`` i.i.d. rows from ``N(0, Omega^{-1})``.

    Standard normal rows ``z`` are mapped through ``x = L^{-T} z`` so that
    ``cov(x) = (L L^T)^{-1}``.

    Parameters
    ----------
    omega : PrecisionMatrix or array-like
    n : int
    seed : int, sequence, or numpy Generator
    """
    omega = validate_precision(omega)
    n = int(n)
    if n < 1:
        raise ValueError("n must be at least 1")
    z = _rng(seed).standard_normal((omega.p, n))
    x = linalg.solve_triangular(omega.chol, z, lower=True, trans="T", check_finite=False)
    return np.ascontiguousarray(x.T)


def _same_dim(a, b):
    if a.p != b.p:
        raise ValueError(f"dimension mismatch: {a.p} vs {b.p}")


def kl_divergence(omega_pre, omega_post, w=1, method="eig"):
    """KL-type divergence ``w * sum_j f(lambda_j)`` over eigenvalues of ``Omega_post^{-1} Omega_pre``.

    ``method="eig"`` uses the generalized symmetric eigenproblem;
    ``method="trace"`` uses ``w [tr(Omega_post^{-1} Omega_pre) - log det(Omega_pre / Omega_post) - p]``.
    """
    a = validate_precision(omega_pre)
    b = validate_precision(omega_post)
    _same_dim(a, b)
    if method == "eig":
        lam = linalg.eigh(a.matrix, b.matrix, eigvals_only=True)
        lam = np.clip(lam, np.finfo(float).tiny, None)
        return float(w * math.fsum(barrier_f(lam)))
    if method == "trace":
        tr = float(np.trace(b.solve(a.matrix)))
        return float(w * (tr - (a.logdet() - b.logdet()) - a.p))
    raise ValueError(f"unknown method {method!r}")


def degree_stats(omega):
    """Row-wise support counts, diagonal included.

    Returns
    -------
    d_max : int
    d_bar : float
    """
    omega = validate_precision(omega)
    counts = np.count_nonzero(omega.support, axis=1)
    return int(counts.max()), float(counts.mean())


@dataclass(frozen=True)
class ChangeSignal:
    """Per-node relative change ``delta`` and its average barrier ``psi_bar``."""

    delta: np.ndarray
    psi_bar: float


def change_signal(omega_pre, omega_post):
    """Relative node-wise change between two regimes.

    ``delta_s = [Omega_pre Omega_post^{-1} Omega_pre]_ss / (Omega_pre)_ss - 1``
    is the shift in the mean of the node statistic after the change, and
    ``psi_bar`` is the mean of ``f(1 + delta_s)``.
    """
    a = validate_precision(omega_pre)
    b = validate_precision(omega_post)
    _same_dim(a, b)
    m = b.solve(a.matrix)
    quad = np.einsum("ij,ji->i", a.matrix, m)
    delta = quad / a.diag - 1.0
    psi_bar = math.fsum(barrier_f(1.0 + delta)) / a.p
    delta.setflags(write=False)
    return ChangeSignal(delta=delta, psi_bar=float(psi_bar))


def detectability_threshold(p, w, pi0, pi1):
    """Signal level ``(4/w) sqrt((log(1/(2 pi0)) + log(1/(2 pi1))) / p)``.

    Average change signals above this level are detectable with false-alarm
    and miss rates ``pi0`` and ``pi1``.
    """
    for name, val in (("pi0", pi0), ("pi1", pi1)):
        if not 0 < val <= 0.5:
            raise DomainError(f"{name} must lie in (0, 1/2], got {val!r}")
    if p < 1 or w < 1:
        raise DomainError("p and w must be positive")
    total = math.log(1.0 / (2.0 * pi0)) + math.log(1.0 / (2.0 * pi1))
    return 4.0 / w * math.sqrt(total / p)


# ---------------------------------------------------------------------------
# matrix I/O

_BIN_HEADER = struct.Struct("<QQ")


def write_matrix_csv(path, matrix, header=None):
    """Write a 2-D array as CSV with 17 significant digits."""
    arr = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    hdr = "" if header is None else ",".join(str(h) for h in header)
    np.savetxt(path, arr, delimiter=",", fmt="%.17g", header=hdr, comments="")


def read_matrix_csv(path):
    """Read a numeric CSV matrix; a non-numeric first row is treated as a header."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    skip = 0
    try:
        [float(tok) for tok in first.strip().split(",") if tok != ""]
    except ValueError:
        skip = 1
    arr = np.loadtxt(path, delimiter=",", skiprows=skip, dtype=np.float64, ndmin=2)
    return arr


def write_matrix_binary(path, matrix):
    """Binary dump: two little-endian uint64 dims then row-major float64 values."""
    arr = np.ascontiguousarray(np.atleast_2d(np.asarray(matrix, dtype="<f8")))
    with open(path, "wb") as fh:
        fh.write(_BIN_HEADER.pack(*arr.shape))
        fh.write(arr.tobytes(order="C"))


def read_matrix_binary(path):
    with open(path, "rb") as fh:
        head = fh.read(_BIN_HEADER.size)
        if len(head) != _BIN_HEADER.size:
            raise ValueError("truncated matrix header")
        rows, cols = _BIN_HEADER.unpack(head)
        payload = fh.read()
    if len(payload) != 8 * rows * cols:
        raise ValueError(f"expected {rows}x{cols} float64 payload, got {len(payload)} bytes")
    return np.frombuffer(payload, dtype="<f8").reshape(rows, cols).astype(np.float64)


def read_matrix(path):
    """Dispatch on extension: ``.bin``/``.f64`` binary, anything else CSV."""
    if str(path).endswith((".bin", ".f64")):
        return read_matrix_binary(path)
    return read_matrix_csv(path)


def write_matrix(path, matrix):
    if str(path).endswith((".bin", ".f64")):
        write_matrix_binary(path, matrix)
    else:
        write_matrix_csv(path, matrix)
