"""Rate of escape, asymptotic variance and CLT checks from renewal excursions.

With excursions ``(tau_i, delta_i)`` between consecutive renewals,

    v = E[delta] / E[tau],    sigma^2 = E[(delta - tau v)^2] / E[tau].

Standard errors use the delta method on ratios of means, with a
moving-block bootstrap over excursions as a second opinion.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .automaton import ConeAutomaton
from .renewal import (
    ExcursionStats,
    RenewalConfig,
    check_renewal_identities,
    detect_renewals,
    excursion_stats,
)
from .walk import DrivingMeasure, LazyAverageDriver, run_lazy_walk, run_walk
from .words import Presentation

KS_COEFF_1PCT = 1.63  # asymptotic one-sample KS critical value at the 1% level


class StatisticalPreconditionError(ValueError):
    """Too little data for the requested estimate."""


@dataclass
class Estimate:
    value: float
    se: float

    def __iter__(self):
        return iter((self.value, self.se))


def _ratio_se(num: np.ndarray, den: np.ndarray) -> float:
    """Delta-method SE of mean(num) / mean(den)."""
    m = len(num)
    r = num.mean() / den.mean()
    resid = num - r * den
    return float(np.sqrt(resid.var(ddof=1) / m) / den.mean())


def estimate_speed(s: ExcursionStats, min_excursions: int = 100) -> Estimate:
    """``v_hat = sum(delta) / sum(tau)`` with delta-method SE."""
    if len(s) < 2:
        raise StatisticalPreconditionError("need at least two excursions")
    if len(s) < min_excursions:
        import warnings

        warnings.warn(f"only {len(s)} excursions; the standard error is unreliable")
    return Estimate(s.v_hat, _ratio_se(s.deltas.astype(float), s.taus.astype(float)))


@dataclass
class VarianceEstimate:
    sigma2: float
    se: float
    Sigma: float  # mean of xi^2
    Sigma_se: float
    degenerate: bool = False


def estimate_variance(s: ExcursionStats, v: float | None = None) -> VarianceEstimate:
    """``sigma2_hat = mean(xi^2) / mean(tau)`` with ``xi = delta - tau v``."""
    if len(s) < 2:
        raise StatisticalPreconditionError("need at least two excursions")
    xi2 = s.residuals(v) ** 2
    tau = s.taus.astype(float)
    sigma2 = float(xi2.mean() / tau.mean())
    Sigma = float(xi2.mean())
    return VarianceEstimate(
        sigma2=sigma2,
        se=_ratio_se(xi2, tau),
        Sigma=Sigma,
        Sigma_se=float(xi2.std(ddof=1) / np.sqrt(len(xi2))),
        degenerate=Sigma == 0.0,
    )


def split_sample_variance(s: ExcursionStats) -> VarianceEstimate:
    """``v`` from the first half of the excursions, ``xi`` on the second half."""
    half = len(s) // 2
    if half < 2:
        raise StatisticalPreconditionError("need at least four excursions")
    v1 = float(s.deltas[:half].sum() / s.taus[:half].sum())
    second = ExcursionStats(
        times=s.times[half:],
        taus=s.taus[half:],
        deltas=s.deltas[half:],
        overshoots=s.overshoots[half:],
        first_time=s.first_time,
        first_distance=s.first_distance,
    )
    return estimate_variance(second, v1)


def block_bootstrap(
    s: ExcursionStats,
    statistic,
    block: int | None = None,
    n_boot: int = 200,
    seed: int = 0,
) -> float:
    """Moving-block bootstrap SE of ``statistic(taus, deltas)`` over excursions."""
    m = len(s)
    block = block or max(1, int(round(m ** (1 / 3))))
    n_blocks = int(np.ceil(m / block))
    rng = np.random.default_rng(seed)
    starts_max = m - block + 1
    offsets = np.arange(block)
    out = np.empty(n_boot)
    for b in range(n_boot):
        idx = (rng.integers(0, starts_max, size=n_blocks)[:, None] + offsets).ravel()[:m]
        out[b] = statistic(s.taus[idx], s.deltas[idx])
    return float(out.std(ddof=1))


def bootstrap_speed_se(s: ExcursionStats, **kw) -> float:
    return block_bootstrap(s, lambda t, d: d.sum() / t.sum(), **kw)


def bootstrap_variance_se(s: ExcursionStats, **kw) -> float:
    def sig(t, d):
        v = d.sum() / t.sum()
        return np.mean((d - t * v) ** 2) / t.mean()

    return block_bootstrap(s, sig, **kw)


def v_direct(final_distances: Sequence[int], n: int) -> Estimate:
    """Mean of ``d(e, Z_n) / n`` over independent replicas."""
    x = np.asarray(final_distances, dtype=float) / n
    if len(x) < 2:
        raise StatisticalPreconditionError("need at least two replicas")
    return Estimate(float(x.mean()), float(x.std(ddof=1) / np.sqrt(len(x))))


def combined_z(a: Estimate, b: Estimate) -> float:
    """|a - b| in units of the combined standard error."""
    return abs(a.value - b.value) / float(np.hypot(a.se, b.se))


@dataclass
class CLTReport:
    ks_distance: float
    p_value: float
    bound: float
    replicas: int
    passed: bool
    samples: np.ndarray = field(repr=False)


def ks_against_normal(z: np.ndarray) -> CLTReport:
    z = np.asarray(z, dtype=float)
    res = stats.kstest(z, "norm")
    bound = KS_COEFF_1PCT / np.sqrt(len(z))
    return CLTReport(float(res.statistic), float(res.pvalue), float(bound), len(z), bool(res.statistic <= bound), z)


def standardize(final_distances: Sequence[int], n: int, v: float, sigma2: float) -> np.ndarray:
    d = np.asarray(final_distances, dtype=float)
    return (d - n * v) / np.sqrt(sigma2 * n)


def clt_check(
    m: DrivingMeasure,
    p: Presentation,
    A: ConeAutomaton,
    n: int,
    replicas: int,
    seed: int,
    v: float,
    sigma2: float,
) -> CLTReport:
    """KS distance of ``(d(e, Z_n) - n v) / (sigma sqrt(n))`` over replicas against N(0, 1).

    ``v`` and ``sigma2`` must come from an independent run.
    """
    if replicas < 1:
        raise StatisticalPreconditionError("replicas must be positive")
    finals = [run_walk(m, p, A, n, seed, r).distances[-1] for r in range(replicas)]
    return ks_against_normal(standardize(finals, n, v, sigma2))


def lazy_corrected_estimates(s: ExcursionStats, ell: int, driver_ell: int | None = None) -> dict:
    """Base-walk speed and variance from excursions of the averaged walk.

    The averaged walk at step ``n`` is the base walk at time ``T_n`` with
    ``E[U] = (ell + 1) / 2`` and ``Var[U] = (ell^2 - 1) / 12``, hence

        v = (2 / (ell + 1)) * E[delta] / E[tau],
        sigma^2 = (2 / (ell + 1)) * (E[xi^2] / E[tau] - v^2 Var[U]),

    with ``xi = delta - tau * v_bar`` centered at the averaged walk's speed.
    A second route measures excursions in base steps (``T_{R_{i+1}} -
    T_{R_i}``) and applies the plain formulas; both are returned.
    """
    if driver_ell is not None and driver_ell != ell:
        raise ValueError(f"ell = {ell} does not match the driver's ell = {driver_ell}")
    mean_u = (ell + 1) / 2
    var_u = (ell * ell - 1) / 12
    speed_bar = estimate_speed(s)
    var_bar = estimate_variance(s)
    v = speed_bar.value / mean_u
    sigma2 = (var_bar.sigma2 - v * v * var_u) / mean_u
    out = {
        "ell": ell,
        "v": v,
        "v_se": speed_bar.se / mean_u,
        "sigma2": sigma2,
        "sigma2_se": var_bar.se / mean_u,
        "v_bar": speed_bar.value,
        "sigma2_bar": var_bar.sigma2,
    }
    if s.base_taus is not None:
        base = ExcursionStats(s.times, s.base_taus, s.deltas, s.overshoots, s.first_time, s.first_distance)
        sp, va = estimate_speed(base), estimate_variance(base)
        out.update(v_base_time=sp.value, v_base_time_se=sp.se, sigma2_base_time=va.sigma2, sigma2_base_time_se=va.se)
    return out


# -- pooled simulation ------------------------------------------------------


@dataclass
class RunBatch:
    """Excursions pooled over replicas plus per-replica summaries."""

    stats: ExcursionStats
    n: int
    replicas: int
    finals: np.ndarray
    k_of_n: np.ndarray
    mean_tau_per_replica: np.ndarray
    renewals: int
    seeds: list
    by_margin: dict = field(default_factory=dict)


def _replica(job: tuple) -> tuple:
    m, p, A, n, seed, r, cfg, ell, check, extra_margins = job
    if ell:
        traj = run_lazy_walk(LazyAverageDriver(m, ell), p, A, n, seed, r)
    else:
        traj = run_walk(m, p, A, n, seed, r)
    rec = detect_renewals(traj, cfg)
    if check:
        check_renewal_identities(rec, traj)
    s = excursion_stats(rec, traj)
    extra = {}
    for margin in extra_margins:
        other = RenewalConfig(cfg.target_type, margin, cfg.discard_tail)
        extra[margin] = excursion_stats(detect_renewals(traj, other), traj)
    return s, int(traj.distances[-1]), rec.k_of_n(n), float(s.taus.mean()), len(rec), extra


def worker_count() -> int:
    """Worker processes for replicas, from ``CONEWALK_THREADS`` (default 1)."""
    import os

    try:
        return max(1, int(os.environ.get("CONEWALK_THREADS", "1")))
    except ValueError:
        return 1


def simulate(
    m: DrivingMeasure,
    p: Presentation,
    A: ConeAutomaton,
    n: int,
    replicas: int,
    seed: int,
    cfg: RenewalConfig,
    ell: int | None = None,
    check: bool = True,
    workers: int | None = None,
    extra_margins: tuple = (),
) -> RunBatch:
    """Run replicas, detect renewals and pool the excursions.

    Renewal identities are checked on every replica when ``check``.
    Replicas are independent; with several workers they run in forked
    processes and are merged in replica order, so results do not depend
    on the worker count.  ``extra_margins`` re-detects renewals on the same
    trajectories with other confirmation windows (``batch.by_margin``).
    """
    if replicas < 1:
        raise StatisticalPreconditionError("replicas must be positive")
    jobs = [(m, p, A, n, seed, r, cfg, ell, check, tuple(extra_margins)) for r in range(replicas)]
    workers = worker_count() if workers is None else workers
    if workers > 1 and replicas > 1:
        import multiprocessing

        with multiprocessing.get_context("fork").Pool(min(workers, replicas)) as pool:
            results = pool.map(_replica, jobs)
    else:
        results = [_replica(job) for job in jobs]
    parts, finals, kn, mt, counts, extras = zip(*results)
    by_margin = {mg: ExcursionStats.concat([e[mg] for e in extras]) for mg in extra_margins}
    by_margin[cfg.margin] = ExcursionStats.concat(list(parts))
    return RunBatch(
        stats=by_margin[cfg.margin],
        n=n,
        replicas=replicas,
        finals=np.asarray(finals),
        k_of_n=np.asarray(kn),
        mean_tau_per_replica=np.asarray(mt),
        renewals=int(sum(counts)),
        seeds=[[seed, r] for r in range(replicas)],
        by_margin=by_margin,
    )


@dataclass
class EstimateReport:
    v_renewal: float
    v_renewal_se: float
    v_renewal_bootstrap_se: float
    v_direct: float
    v_direct_se: float
    sigma2: float
    sigma2_se: float
    sigma2_bootstrap_se: float
    sigma2_split_sample: float
    Sigma: float
    n: int
    replicas: int
    excursions: int
    margin: int
    agreement_z: float
    ks_distance: float | None = None
    ks_bound: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def estimate_report(batch: RunBatch, margin: int) -> EstimateReport:
    s = batch.stats
    sp = estimate_speed(s)
    va = estimate_variance(s)
    vd = v_direct(batch.finals, batch.n)
    return EstimateReport(
        v_renewal=sp.value,
        v_renewal_se=sp.se,
        v_renewal_bootstrap_se=bootstrap_speed_se(s),
        v_direct=vd.value,
        v_direct_se=vd.se,
        sigma2=va.sigma2,
        sigma2_se=va.se,
        sigma2_bootstrap_se=bootstrap_variance_se(s),
        sigma2_split_sample=split_sample_variance(s).sigma2,
        Sigma=va.Sigma,
        n=batch.n,
        replicas=batch.replicas,
        excursions=len(s),
        margin=margin,
        agreement_z=combined_z(sp, vd),
    )


# -- likelihood-ratio probes --------------------------------------------------


@dataclass
class ReweightResult:
    v: float
    se: float
    ess: float
    replicas: int
    weights: np.ndarray = field(repr=False)


class LowEffectiveSampleSize(StatisticalPreconditionError):
    pass


def _log_ratio(base: DrivingMeasure, target: DrivingMeasure) -> np.ndarray:
    if base.words != target.words:
        raise ValueError("target must reweight the atoms of the base measure")
    return np.log(target.probs) - np.log(base.probs)


def atom_counts(trajs, k: int) -> np.ndarray:
    return np.stack([np.bincount(t.increments, minlength=k) for t in trajs])


def reweighted_speed(
    counts: np.ndarray,
    finals: np.ndarray,
    n: int,
    base: DrivingMeasure,
    target: DrivingMeasure,
    min_ess: float = 30.0,
) -> ReweightResult:
    """``E^mu[d(e, Z_n) prod target/base] / n`` from walks sampled under ``base``.

    ``counts[r, i]`` is how often atom ``i`` was drawn in replica ``r``.
    """
    lr = _log_ratio(base, target)
    w = np.exp(counts @ lr)
    ess = float(w.sum() ** 2 / np.dot(w, w))
    if ess < min_ess:
        raise LowEffectiveSampleSize(
            f"effective sample size {ess:.1f} < {min_ess}; shrink the perturbation or the horizon"
        )
    y = w * np.asarray(finals, dtype=float) / n
    return ReweightResult(float(y.mean()), float(y.std(ddof=1) / np.sqrt(len(y))), ess, len(y), w)


@dataclass
class PerturbationFamily:
    base: DrivingMeasure
    direction: np.ndarray
    steps: Sequence[float]

    def __post_init__(self):
        self.direction = np.asarray(self.direction, dtype=float)
        if abs(self.direction.sum()) > 1e-12:
            raise ValueError("direction must sum to zero")
        for h in self.steps:
            for sign in (1, -1):
                if np.any(self.base.probs + sign * h * self.direction <= 0):
                    raise ValueError(f"step {h} leaves the simplex")

    def measure(self, h: float) -> DrivingMeasure:
        if not np.any(self.direction):
            return self.base
        return self.base.perturbed(self.direction, h)


def smoothness_probe(family: PerturbationFamily, counts: np.ndarray, finals: np.ndarray, n: int) -> list:
    """Central differences of ``v`` along the family at each step size.

    All points reuse one batch sampled under the base measure, so the
    differences have common-randomness errors.  The weights have mean one,
    so the distances are centered at their sample mean first; this keeps
    the differences unbiased and removes most of their noise.  Rows hold
    the step, the first and second difference estimates with SEs, and
    whether the first difference agrees with the next smaller step within
    3 combined SE.
    """
    if len(family.steps) < 5:
        raise ValueError("need at least five step sizes")
    d = np.asarray(finals, dtype=float) / n
    d = d - d.mean()
    rows = []
    for h in sorted(family.steps, reverse=True):
        # log-weights are linear in counts: sum_i c_i log(1 + h dir_i / p_i)
        lp = counts @ np.log1p(h * family.direction / family.base.probs)
        lm = counts @ np.log1p(-h * family.direction / family.base.probs)
        wp, wm = np.exp(lp), np.exp(lm)
        first = d * (wp - wm) / (2 * h)
        second = d * (wp - 2 + wm) / (h * h)
        rows.append({
            "step": h,
            "derivative": float(first.mean()),
            "derivative_se": float(first.std(ddof=1) / np.sqrt(len(d))),
            "second_derivative": float(second.mean()),
            "second_derivative_se": float(second.std(ddof=1) / np.sqrt(len(d))),
        })
    for a, b in zip(rows, rows[1:]):
        se = np.hypot(a["derivative_se"], b["derivative_se"])
        a["consistent_with_next"] = bool(abs(a["derivative"] - b["derivative"]) <= 3 * se) if se > 0 else a["derivative"] == b["derivative"]
    rows[-1]["consistent_with_next"] = None
    return rows
