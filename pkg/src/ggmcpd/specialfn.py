"""Scalar special functions and the barrier/normalization terms of the test statistic.

Everything here is a pure function. Monte Carlo helpers take an explicit
seed and own their generator.
"""

import math

import numpy as np

from .exceptions import DomainError

EULER_GAMMA = 0.57721566490153286061

# Bernoulli-number coefficients B_{2k}/(2k) for the digamma series and B_{2k}
# for the trigamma series, k = 1..7.
_DIGAMMA_SERIES = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)
_TRIGAMMA_SERIES = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
)
_ASYMPTOTIC_CUTOFF = 8.0


def barrier_f(x):
    """Convex barrier ``f(x) = x - 1 - log(x)``.

    Nonnegative on ``(0, inf)`` with its unique root at ``x = 1``. Accepts
    scalars or arrays; scalars come back as ``float``.

    Raises
    ------
    DomainError
        If any entry is non-positive or non-finite.
    """
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError("barrier_f requires finite, strictly positive arguments")
    out = arr - 1.0 - np.log(arr)
    if out.ndim == 0:
        return float(out)
    return out


def _check_positive(x, name):
    if not math.isfinite(x) or x <= 0:
        raise DomainError(f"{name} requires x > 0, got {x!r}")


def digamma(x):
    """Digamma function psi(x) for real x > 0.

    Shifts the argument upward with ``psi(x) = psi(x + 1) - 1/x`` until it
    reaches 8, then sums seven terms of the asymptotic expansion.
    """
    x = float(x)
    _check_positive(x, "digamma")
    acc = 0.0
    while x < _ASYMPTOTIC_CUTOFF:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    for coef in reversed(_DIGAMMA_SERIES):
        series = series * inv2 + coef
    return acc + math.log(x) - 0.5 / x - series * inv2


def trigamma(x):
    """Trigamma function psi'(x) for real x > 0."""
    x = float(x)
    _check_positive(x, "trigamma")
    acc = 0.0
    while x < _ASYMPTOTIC_CUTOFF:
        acc += 1.0 / (x * x)
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    for coef in reversed(_TRIGAMMA_SERIES):
        series = series * inv2 + coef
    return acc + 1.0 / x + 0.5 * inv2 + series * inv2 / x


def _check_window(w):
    if isinstance(w, bool) or int(w) != w or w < 1:
        raise DomainError(f"window length must be a positive integer, got {w!r}")
    return int(w)


def g1(w):
    """Null mean of ``f(Z/w)`` for ``Z ~ chi2_w``: ``log(w/2) - psi(w/2)``."""
    w = _check_window(w)
    return math.log(w / 2.0) - digamma(w / 2.0)


def g2(w):
    """Null standard deviation of ``f(Z/w)``: ``sqrt(psi'(w/2) - 2/w)``."""
    w = _check_window(w)
    var = trigamma(w / 2.0) - 2.0 / w
    if not var > 0:
        raise ArithmeticError(
            f"non-positive variance {var!r} for w={w}; trigamma is inaccurate"
        )
    return math.sqrt(var)


def h_w(r, w=None):
    """Correlation proxy between ``f(Y_s1)`` and ``f(Y_s2)``: ``r**4``.

    The exact correlation depends weakly on ``w`` (deviation is O(1/w)); the
    quartic proxy is used for every ``w``. ``w`` is accepted for signature
    symmetry with :func:`h_w_oracle` and validated when given.
    """
    if w is not None:
        _check_window(w)
    arr = np.asarray(r, dtype=np.float64)
    if np.any(np.abs(arr) > 1.0 + 1e-12) or not np.all(np.isfinite(arr)):
        raise DomainError("h_w requires |r| <= 1")
    sq = arr * arr
    out = np.minimum(sq * sq, 1.0)
    if out.ndim == 0:
        return float(out)
    return out


def _bivariate_chi2(r, w, nsamples, rng):
    x = rng.standard_normal((nsamples, w))
    y = rng.standard_normal((nsamples, w))
    xp = r * x + math.sqrt(max(0.0, 1.0 - r * r)) * y
    return np.sum(x * x, axis=1), np.sum(xp * xp, axis=1)


def h_w_oracle(r, w, nsamples=100_000, seed=0):
    """Monte Carlo estimate of ``corr[f(Z_w/w), f(Z'_w/w)]``.

    ``(Z_w, Z'_w)`` are sums of ``w`` squared standard bivariate normals with
    correlation ``r``. Deterministic given ``seed``.
    """
    w = _check_window(w)
    if abs(r) > 1:
        raise DomainError("h_w_oracle requires |r| <= 1")
    if nsamples < 10_000:
        raise DomainError("h_w_oracle requires nsamples >= 1e4")
    rng = np.random.default_rng(seed)
    z, zp = _bivariate_chi2(float(r), w, int(nsamples), rng)
    a = barrier_f(z / w)
    b = barrier_f(zp / w)
    a = a - a.mean()
    b = b - b.mean()
    denom = math.sqrt(float(np.dot(a, a)) * float(np.dot(b, b)))
    return float(np.dot(a, b) / denom)


def chi2_moment_cov(r, w):
    """Covariances of centered chi-square powers for correlated pairs.

    Returns ``(p, q)`` with ``p = cov[(Z-w)^2, (Z'-w)^2]`` and
    ``q = cov[(Z-w)^2, (Z'-w)^3]`` where ``Z, Z'`` are ``chi2_w`` sums built
    from standard bivariate normals with correlation ``r``.

    Both follow from the joint cumulants of ``(X^2 - 1, X'^2 - 1)``:

    ``p = 8 r^2 w (4 + r^2 w + 2 r^2)``
    ``q = 48 r^2 w (w + 4) + 96 r^4 w (w + 2)``

    For ``w = 1`` these reduce to ``32 r^2 + 24 r^4`` and
    ``240 r^2 + 288 r^4``.
    """
    w = _check_window(w)
    if abs(r) > 1:
        raise DomainError("chi2_moment_cov requires |r| <= 1")
    r2 = r * r
    p_rw = 8.0 * r2 * w * (4.0 + r2 * w + 2.0 * r2)
    q_rw = 48.0 * r2 * w * (w + 4.0) + 96.0 * r2 * r2 * w * (w + 2.0)
    return p_rw, q_rw


# Acklam's rational approximation to the lower-tail normal quantile.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _acklam(p):
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        return num / den
    if p > 1.0 - _P_LOW:
        return -_acklam(1.0 - p)
    q = p - 0.5
    r = q * q
    num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
    den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    return num / den


def gaussian_tail(x):
    """Upper-tail probability ``Q(x) = P(N(0,1) >= x)``."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def gaussian_quantile(pi):
    """Inverse Q-function: the ``zeta`` with ``P(N(0,1) >= zeta) = pi``.

    Rational approximation followed by one Newton step against the
    erfc-based tail; absolute error well below 1e-9 on ``(1e-300, 1)``.
    """
    pi = float(pi)
    if not 0.0 < pi < 1.0:
        raise DomainError(f"gaussian_quantile requires 0 < pi < 1, got {pi!r}")
    if pi == 0.5:
        return 0.0
    if pi > 0.5:
        # 1 - pi is exact here and keeps the Newton step free of cancellation
        return -gaussian_quantile(1.0 - pi)
    # zeta = -Phi^{-1}(pi); refine x = Phi^{-1}(pi) against Phi(x) = Q(-x).
    x = _acklam(pi)
    err = gaussian_tail(-x) - pi
    dens = math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    if dens > 0:
        x -= err / dens
    return -x
