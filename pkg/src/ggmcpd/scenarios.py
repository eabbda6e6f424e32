"""Ground-truth generators for piecewise-constant Gaussian graphical models."""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import NotPositiveDefinite
from .ggm import PrecisionMatrix, read_matrix, sample_ggm, validate_precision


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _to_correlation(m):
    d = 1.0 / np.sqrt(np.diag(m))
    out = m * d[:, None] * d[None, :]
    np.fill_diagonal(out, 1.0)
    return out


def _row_sparse(p, k, rng, draw):
    """``p x p`` matrix with ``k`` nonzeros per row at distinct random columns."""
    u = np.zeros((p, p))
    for i in range(p):
        cols = rng.choice(p, size=k, replace=False)
        u[i, cols] = draw(k)
    return u


def random_sparse_precision(p, d, lambda0=0.1, seed=None, normalize=True):
    """Sparse random precision matrix ``H + lambda0 I``.

    ``U`` has ``d`` standard normal entries per row at columns sampled
    without replacement; ``H = U U^T / max|U U^T|``. With ``normalize`` the
    result is rescaled to unit diagonal.
    """
    if not 1 <= d <= p:
        raise ValueError(f"need 1 <= d <= p, got d={d}, p={p}")
    if lambda0 <= 0:
        raise ValueError("lambda0 must be positive")
    rng = _rng(seed)
    u = _row_sparse(p, d, rng, rng.standard_normal)
    h = u @ u.T
    h /= np.max(np.abs(h))
    omega = h + lambda0 * np.eye(p)
    if normalize:
        omega = _to_correlation(omega)
    return PrecisionMatrix(omega)


def clt_demo_precision(p, d_max, seed=None):
    """``(U + U^T + 1.5 d_max I) / lambda_min`` with ``d_max`` uniform(-1, 1) entries per row of ``U``."""
    if not 1 <= d_max <= p:
        raise ValueError(f"need 1 <= d_max <= p, got d_max={d_max}, p={p}")
    rng = _rng(seed)
    u = _row_sparse(p, d_max, rng, lambda k: rng.uniform(-1.0, 1.0, size=k))
    omega = u + u.T + 1.5 * d_max * np.eye(p)
    lam_min = np.linalg.eigvalsh(omega)[0]
    if lam_min <= 0:
        raise NotPositiveDefinite("diagonal loading was insufficient for this draw")
    return PrecisionMatrix(omega / lam_min)


def uniform_change(omega, beta):
    """Scale every entry by ``1 + beta``."""
    if beta <= -1:
        raise ValueError("beta must exceed -1")
    omega = validate_precision(omega)
    return PrecisionMatrix((1.0 + beta) * omega.matrix, omega.sparsity_eps)


def lowrank_change(omega, r, beta):
    """Multiply the ``r`` largest eigenvalues by ``1 + beta``, keeping eigenvectors."""
    omega = validate_precision(omega)
    p = omega.p
    if not 1 <= r <= p:
        raise ValueError(f"need 1 <= r <= p, got r={r}")
    if beta <= -1:
        raise ValueError("beta must exceed -1")
    lam, vec = np.linalg.eigh(omega.matrix)
    lam = lam.copy()
    lam[p - r:] *= 1.0 + beta
    out = (vec * lam) @ vec.T
    return PrecisionMatrix(0.5 * (out + out.T), omega.sparsity_eps)


def localized_change(omega, node_s, v=None, seed=None, norm=1.0, max_halvings=20):
    """Perturb one node and its edges: ``Omega + v e_s^T + e_s v^T``.

    When ``v`` is omitted it is drawn as a standard normal vector on the
    off-diagonal neighbours of ``node_s`` and rescaled to Euclidean length
    ``norm``. ``v`` is halved until the result is positive definite.

    Raises
    ------
    NotPositiveDefinite
        If ``max_halvings`` halvings do not restore positive definiteness.
    """
    omega = validate_precision(omega)
    p = omega.p
    if not 0 <= node_s < p:
        raise ValueError(f"node index {node_s} out of range")
    support = omega.support[node_s]
    if v is None:
        nbrs = np.flatnonzero(support)
        nbrs = nbrs[nbrs != node_s]
        v = np.zeros(p)
        if nbrs.size:
            v[nbrs] = _rng(seed).standard_normal(nbrs.size)
            v *= norm / np.linalg.norm(v)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (p,):
        raise ValueError("v must have length p")
    if np.any(v[~support] != 0):
        raise ValueError("v must vanish where the precision row of node_s is zero")
    for _ in range(max_halvings + 1):
        out = omega.matrix.copy()
        out[:, node_s] += v
        out[node_s, :] += v
        try:
            return PrecisionMatrix(out, omega.sparsity_eps)
        except NotPositiveDefinite:
            v = 0.5 * v
    raise NotPositiveDefinite(f"no positive-definite perturbation after {max_halvings} halvings")


def star_precision(p, seed=None):
    """Hub-and-spoke precision: ``1.1 I + (e1 u^T + u e1^T) / (p ||u||_inf)``."""
    if p < 2:
        raise ValueError("star graph needs p >= 2")
    u = np.zeros(p)
    u[1:] = _rng(seed).standard_normal(p - 1)
    e1 = np.zeros(p)
    e1[0] = 1.0
    scale = p * np.max(np.abs(u))
    omega = 1.1 * np.eye(p) + (np.outer(e1, u) + np.outer(u, e1)) / scale
    return PrecisionMatrix(omega)


# ---------------------------------------------------------------------------
# streams


@dataclass
class StreamSegment:
    length: int
    omega: PrecisionMatrix
    generator: str = "matrix"
    params: dict = field(default_factory=dict)


@dataclass
class ScenarioSpec:
    """Piecewise-constant model: consecutive segments with their precision matrices."""

    p: int
    segments: list
    seed: object = 0

    def __post_init__(self):
        if not self.segments:
            raise ValueError("scenario needs at least one segment")
        for seg in self.segments:
            if seg.length < 1:
                raise ValueError("segment lengths must be positive")
            if seg.omega.p != self.p:
                raise ValueError("segment dimension differs from p")
        for a, b in zip(self.segments, self.segments[1:]):
            if np.array_equal(a.omega.matrix, b.omega.matrix):
                raise ValueError("consecutive segments share a precision matrix; no change")

    @property
    def change_times(self):
        return [int(c) for c in np.cumsum([s.length for s in self.segments])[:-1]]

    @property
    def horizon(self):
        return int(sum(s.length for s in self.segments))


def render_stream(spec, seed=None):
    """Sample the whole stream.

    Returns ``(data, change_times)``; ``change_times`` are 0-based indices of
    the first sample of each new segment. ``seed`` overrides ``spec.seed``.
    """
    rng = _rng(spec.seed if seed is None else seed)
    parts = [sample_ggm(seg.omega, seg.length, rng) for seg in spec.segments]
    return np.vstack(parts), spec.change_times


def _matrix_seed(seed, k):
    base = list(np.atleast_1d(seed)) if seed is not None else [0]
    return [*map(int, base), 7919, k]


def _build_omega(gen, params, p, seed, k, built):
    base = built[params.get("base", -1)] if built else None
    if gen == "random_sparse":
        return random_sparse_precision(
            p, int(params.get("d", 5)), float(params.get("lambda0", 0.1)),
            seed=_matrix_seed(seed, k), normalize=bool(params.get("normalize", True)),
        )
    if gen == "clt_demo":
        return clt_demo_precision(p, int(params.get("d_max", 5)), seed=_matrix_seed(seed, k))
    if gen == "star":
        return star_precision(p, seed=_matrix_seed(seed, k))
    if gen == "file":
        return PrecisionMatrix(read_matrix(params["path"]))
    if base is None:
        raise ValueError(f"generator {gen!r} needs a preceding segment")
    if gen == "uniform":
        return uniform_change(base, float(params["beta"]))
    if gen == "lowrank":
        return lowrank_change(base, int(params["r"]), float(params["beta"]))
    if gen == "localized":
        return localized_change(
            base, int(params.get("node", 0)), seed=_matrix_seed(seed, k),
            norm=float(params.get("norm", 1.0)),
        )
    raise ValueError(f"unknown generator {gen!r}")


def spec_from_dict(cfg, seed=None):
    """Build a :class:`ScenarioSpec` from its structured form.

    Keys: ``p``, ``seed``, and ``segments`` (each with ``length``,
    ``generator`` and ``params``). Change generators (``uniform``,
    ``lowrank``, ``localized``) act on the segment at ``params.base``
    (default: the previous one).
    """
    p = int(cfg["p"])
    seed = cfg.get("seed", 0) if seed is None else seed
    built = []
    segments = []
    for k, seg in enumerate(cfg["segments"]):
        gen = seg["generator"]
        params = dict(seg.get("params", {}))
        omega = _build_omega(gen, params, p, seed, k, built)
        built.append(omega)
        segments.append(StreamSegment(int(seg["length"]), omega, gen, params))
    return ScenarioSpec(p=p, segments=segments, seed=seed)


def spec_to_dict(spec):
    return {
        "p": spec.p,
        "seed": spec.seed if isinstance(spec.seed, int) else list(np.atleast_1d(spec.seed)),
        "segments": [
            {"length": s.length, "generator": s.generator, "params": s.params}
            for s in spec.segments
        ],
    }


def load_spec(path, seed=None):
    with open(path, encoding="utf-8") as fh:
        return spec_from_dict(json.load(fh), seed=seed)


def s52_config(seed=0, p=100, d=20, lambda0=0.1):
    """Three-change benchmark layout: uniform, low-rank, then a fresh random regime."""
    base = {"d": d, "lambda0": lambda0, "normalize": True}
    return {
        "p": p,
        "seed": seed,
        "segments": [
            {"length": 3000, "generator": "random_sparse", "params": base},
            {"length": 3000, "generator": "uniform", "params": {"beta": 0.2, "base": 0}},
            {"length": 3000, "generator": "lowrank", "params": {"r": p // 2, "beta": 0.4, "base": 0}},
            {"length": 1000, "generator": "random_sparse", "params": base},
        ],
    }


def single_change_config(p, change, seed=0, length=250, d=5, lambda0=0.1, **change_params):
    """Two segments of ``length`` samples: a random sparse regime then a change of kind ``change``."""
    return {
        "p": p,
        "seed": seed,
        "segments": [
            {"length": length, "generator": "random_sparse",
             "params": {"d": d, "lambda0": lambda0, "normalize": True}},
            {"length": length, "generator": change, "params": dict(change_params)},
        ],
    }


def separation_bound(p, d_max, w, constant=1.0):
    """``C p d_max log^2 p max(w, log p)``."""
    lp = math.log(p)
    return constant * p * d_max * lp * lp * max(w, lp)
