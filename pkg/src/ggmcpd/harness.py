"""Monte Carlo experiment driver and summary statistics.

Replicate ``i`` of an experiment seeded with ``seed`` draws everything from
``numpy.random.default_rng([seed, i])`` so any replicate can be rerun on
its own. Replicates may run in parallel through joblib; results are always
merged in replicate order.
"""

import csv
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy import stats

from .detector import DetectorConfig, sliding_statistics
from .estimator import penalized_precision, sample_covariance
from .ggm import degree_stats, sample_ggm
from .pipeline import PipelineConfig, run
from .scenarios import clt_demo_precision, render_stream, spec_from_dict


def replicate_rng(seed, i):
    return np.random.default_rng([int(seed), int(i)])


# ---------------------------------------------------------------------------
# summaries


def estimate_error_rates(flags, t_star, w):
    """Per-stream false-alarm and miss rates.

    ``flags[i]`` is the decision for the window starting at sample ``i``
    (0-based), and ``t_star`` is the index of the first post-change sample.
    Windows ``1 .. t_star - w`` lie wholly before the change and windows
    ``t_star .. T - w`` wholly after it.

    Returns
    -------
    pi0_hat, pi1_hat : float
    """
    flags = np.asarray(flags, dtype=bool)
    horizon = flags.size + w - 1
    if not w < t_star < horizon - w:
        raise ValueError(f"need w < t_star < T - w; got w={w}, t_star={t_star}, T={horizon}")
    pre = flags[1:t_star - w + 1]
    post = flags[t_star:horizon - w + 1]
    return float(pre.mean()), float(1.0 - post.mean())


@dataclass(frozen=True)
class DelaySummary:
    median: float
    iqr: float
    misses: int
    false_alarms: int
    delays: tuple


def delay_stats(detected, true_changes, horizon=None):
    """Match detections to changes and summarize delays.

    Each detection is assigned to the closest change at or before it. The
    first detection in a segment is that change's hit; any further
    detections in the segment, or detections before the first change, are
    false alarms. Changes without a hit are misses.
    """
    detected = sorted(int(d) for d in detected)
    changes = sorted(int(c) for c in true_changes)
    if horizon is not None:
        detected = [d for d in detected if d < horizon]
    bounds = changes + [math.inf]
    delays = []
    false_alarms = 0
    hit = [False] * len(changes)
    for d in detected:
        seg = None
        for j, c in enumerate(changes):
            if c <= d < bounds[j + 1]:
                seg = j
                break
        if seg is None or hit[seg]:
            false_alarms += 1
        else:
            hit[seg] = True
            delays.append(d - changes[seg])
    misses = hit.count(False)
    if delays:
        q1, med, q3 = np.percentile(delays, [25, 50, 75])
    else:
        q1 = med = q3 = math.nan
    return DelaySummary(float(med), float(q3 - q1), misses, false_alarms, tuple(delays))


def ks_normal(samples):
    """Kolmogorov-Smirnov distance to the standard normal."""
    return float(stats.kstest(np.asarray(samples, dtype=float), "norm").statistic)


# ---------------------------------------------------------------------------
# experiments


@dataclass
class NullReport:
    samples: np.ndarray = field(repr=False)
    mean: float
    sd: float
    ks: float
    config: dict


def _null_replicate(omega, cfg, seed, i):
    rng = replicate_rng(seed, i)
    w = cfg["w"]
    est = omega
    if cfg["estimated"]:
        burn = sample_ggm(omega, cfg["burnin"], rng)
        est = penalized_precision(sample_covariance(burn), cfg["tau"]).omega_hat
    window = sample_ggm(omega, w, rng)
    return float(sliding_statistics(est, window, w)[0])


def null_distribution_experiment(p, d_max, w, n_replicates=2000, seed=0, estimated=False,
                                 burnin=None, tau=0.01, n_jobs=1):
    """Replicates of the statistic on windows drawn with no change.

    The reference matrix comes from :func:`clt_demo_precision` with seed
    ``[seed, 2**31]``. With ``estimated`` each replicate first draws
    ``burnin`` samples (default ``ceil(p d_max log p)``) and plugs in the
    penalized estimate at penalty ``tau``.
    """
    if n_replicates < 100:
        raise ValueError("n_replicates must be at least 100")
    omega = clt_demo_precision(p, d_max, seed=[seed, 2**31])
    if burnin is None:
        burnin = math.ceil(p * d_max * math.log(p))
    cfg = {"p": p, "d_max": d_max, "w": w, "n_replicates": n_replicates, "seed": seed,
           "estimated": bool(estimated), "burnin": int(burnin), "tau": float(tau),
           "degree": degree_stats(omega),
           "condition_number": float(np.linalg.cond(omega.matrix))}
    vals = Parallel(n_jobs=n_jobs)(
        delayed(_null_replicate)(omega, cfg, seed, i) for i in range(n_replicates)
    )
    arr = np.asarray(vals)
    return NullReport(arr, float(arr.mean()), float(arr.std(ddof=1)), ks_normal(arr), cfg)


@dataclass
class ExperimentReport:
    pi0_hat: float
    pi1_hat: float
    delays: list
    false_alarm_count: float
    per_replicate: list = field(repr=False)
    config_echo: dict = field(default_factory=dict)


def _power_replicate(scenario_cfg, det, seed, i):
    spec = spec_from_dict(scenario_cfg, seed=[seed, i])
    if len(spec.change_times) != 1:
        raise ValueError("power experiments need exactly one change")
    data, (t_star,) = render_stream(spec, seed=replicate_rng(seed, i))
    omega_pre = spec.segments[0].omega
    flags = sliding_statistics(omega_pre, data, det.w) >= det.zeta
    pi0, pi1 = estimate_error_rates(flags, t_star, det.w)
    return {"replicate": i, "pi0_hat": pi0, "pi1_hat": pi1, "t_star": t_star,
            "flags_post": flags[t_star:].tolist()}


def power_experiment(scenario_cfg, detector_config, n_replicates=100, seed=0, n_jobs=1):
    """Known-precision detector over replicate streams with one change.

    ``scenario_cfg`` is the structured scenario form (see
    :func:`ggmcpd.scenarios.spec_from_dict`); each replicate rebuilds the
    matrices and samples from its own seed.
    """
    det = detector_config
    rows = Parallel(n_jobs=n_jobs)(
        delayed(_power_replicate)(scenario_cfg, det, seed, i) for i in range(n_replicates)
    )
    pi0 = float(np.mean([r["pi0_hat"] for r in rows]))
    pi1 = float(np.mean([r["pi1_hat"] for r in rows]))
    echo = {"scenario": scenario_cfg, "w": det.w, "pi0": det.pi0, "zeta": det.zeta,
            "n_replicates": n_replicates, "seed": seed}
    return ExperimentReport(pi0, pi1, [], 0.0, rows, echo)


def _pipeline_replicate(scenario_cfg, configs, seed, i):
    spec = spec_from_dict(scenario_cfg, seed=[seed, i])
    data, changes = render_stream(spec, seed=replicate_rng(seed, i))
    out = []
    for k, cfg in enumerate(configs):
        start = time.perf_counter()
        detected, _ = run(data, cfg)
        summary = delay_stats([d + cfg.w for d in detected], changes, spec.horizon)
        out.append({"replicate": i, "config": k, "detected": detected, "changes": changes,
                    "delays": _per_change_delays(detected, changes, cfg.w),
                    "false_alarms": summary.false_alarms, "misses": summary.misses,
                    "seconds": time.perf_counter() - start})
    return out


def _per_change_delays(detected, changes, w):
    """Delay for each change (``None`` when missed), look-ahead included."""
    shifted = sorted(d + w for d in detected)
    bounds = list(changes) + [math.inf]
    res = []
    for j, c in enumerate(changes):
        hits = [d for d in shifted if c <= d < bounds[j + 1]]
        res.append(hits[0] - c if hits else None)
    return res


def pipeline_experiment(scenario_cfg, configs, n_replicates=50, seed=0, change_labels=None,
                        n_jobs=1):
    """Run every pipeline configuration on the same replicate streams.

    Returns a list of table rows (one per configuration) with median and IQR
    of the delay per change, and the mean number of false alarms per run,
    plus the per-replicate records.
    """
    configs = list(configs)
    per_rep = Parallel(n_jobs=n_jobs)(
        delayed(_pipeline_replicate)(scenario_cfg, configs, seed, i) for i in range(n_replicates)
    )
    records = [r for rep in per_rep for r in rep]
    n_changes = len(records[0]["changes"]) if records else 0
    labels = change_labels or [f"change_{j}" for j in range(n_changes)]
    table = []
    for k, cfg in enumerate(configs):
        rows = [r for r in records if r["config"] == k]
        row = {"n0": cfg.n0, "B": cfg.B, "kappa": cfg.kappa, "iota": cfg.iota, "w": cfg.w,
               "pi0": cfg.detector.pi0}
        for j, label in enumerate(labels):
            d = [r["delays"][j] for r in rows if r["delays"][j] is not None]
            if d:
                q1, med, q3 = np.percentile(d, [25, 50, 75])
            else:
                q1 = med = q3 = math.nan
            row[f"{label}_median_delay"] = float(med)
            row[f"{label}_iqr_delay"] = float(q3 - q1)
            row[f"{label}_misses"] = sum(r["delays"][j] is None for r in rows)
        row["mean_false_alarms"] = float(np.mean([r["false_alarms"] for r in rows]))
        table.append(row)
    return table, records


def s52_pipeline_configs(sweep, w=20, pi0=0.01):
    """Configuration grids of the three sensitivity studies (n0, kappa, B)."""
    det = DetectorConfig(w=w, pi0=pi0)
    if sweep == "n0":
        grid = [(n0, 50, 4) for n0 in (1100, 1300, 1500, 1700, 1900, 2100)]
    elif sweep == "kappa":
        grid = [(n0, 50, k) for n0 in (1500, 2000) for k in (1, 2, 3, 4)]
    elif sweep == "B":
        grid = [(n0, b, 4) for n0 in (1100, 1500) for b in (5, 10, 20, 40)]
    else:
        raise ValueError(f"unknown sweep {sweep!r}; expected n0, kappa or B")
    return [PipelineConfig(n0=n0, B=b, kappa=k, detector=det) for n0, b, k in grid]


# ---------------------------------------------------------------------------
# output directory


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if hasattr(obj, "__dataclass_fields__"):
        return _jsonable(asdict(obj))
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return v


def write_report_dir(out_dir, config, summary, samples=None, table=None):
    """Write ``config.json``, ``summary.json``, ``samples.csv`` and ``tables.csv``."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(_jsonable(config), fh, indent=2)
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(_jsonable(summary), fh, indent=2)
    with open(os.path.join(out_dir, "samples.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if samples is not None and len(samples):
            if isinstance(samples[0], dict):
                keys = list(samples[0])
                writer.writerow(keys)
                for row in samples:
                    writer.writerow([_fmt(row[k]) if not isinstance(row[k], (list, tuple))
                                     else json.dumps(_jsonable(row[k])) for k in keys])
            else:
                writer.writerow(["value"])
                for v in samples:
                    writer.writerow([format(float(v), ".17g")])
    with open(os.path.join(out_dir, "tables.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if table:
            keys = list(table[0])
            writer.writerow(keys)
            for row in table:
                writer.writerow([_fmt(row[k]) for k in keys])
