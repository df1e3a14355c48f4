"""Renewal times on finite trajectories and excursion statistics.

``k`` is a renewal time when ``Z_k`` has the target state and the walk
never leaves the automaton cone ``C_A(Z_k)`` afterwards.  On a trajectory
of length ``n`` "afterwards" can only mean up to ``n``, so candidates in
the last ``margin`` steps are refused.

Leaving the cone is read off the common-prefix lengths: if
``p_j = lcp(nf(Z_{j-1}), nf(Z_j))``, then ``Z_i`` stays in ``C_A(Z_k)`` for
all ``k < i <= n`` iff ``min_{k < j <= n} p_j >= |Z_k|``.  One backward
sweep of suffix minima therefore finds every renewal in O(n).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .automaton import ConeAutomaton, in_cone, state_of
from .walk import Trajectory


@dataclass
class RenewalConfig:
    target_type: int
    margin: int = 256
    discard_tail: bool = True

    def validate(self, A: ConeAutomaton | None = None) -> None:
        if self.margin < 1:
            raise ValueError("margin must be at least 1")
        if A is not None:
            if not 0 <= self.target_type < A.n_states:
                raise ValueError(f"no state {self.target_type}")
            if A.recurrent is not None and not A.recurrent[self.target_type]:
                raise ValueError("target type must be recurrent")
            if A.large is not None and not A.large[self.target_type]:
                raise ValueError("target type must be large")


@dataclass
class RenewalRecord:
    times: np.ndarray
    distances: np.ndarray  # d(e, Z_R) at each renewal
    final: tuple  # normal form of Z_n; renewal positions are its prefixes
    n: int
    margin: int
    refused: int = 0  # candidates inside the tail window
    diagnostic: str = ""

    def __len__(self) -> int:
        return len(self.times)

    @property
    def positions(self) -> list:
        return [self.final[:d] for d in self.distances.tolist()]

    def k_of_n(self, n: int | None = None) -> int:
        """Number of renewals at times ``<= n``."""
        n = self.n if n is None else n
        return int(np.searchsorted(self.times, n, side="right"))


def _suffix_min(lcps: np.ndarray) -> np.ndarray:
    """``out[k] = min(lcps[k:])`` with ``out[n] = +inf``."""
    out = np.empty(len(lcps) + 1, dtype=np.int64)
    out[-1] = np.iinfo(np.int64).max
    if len(lcps):
        out[:-1] = np.minimum.accumulate(lcps[::-1])[::-1]
    return out


def _finish(traj: Trajectory, cfg: RenewalConfig, times: np.ndarray, candidates: int) -> RenewalRecord:
    times = np.asarray(times, dtype=np.int64)
    diag = "" if len(times) else "no renewals found; the trajectory is too short"
    return RenewalRecord(
        times=times,
        distances=traj.distances[times] if len(times) else np.zeros(0, dtype=np.int64),
        final=traj.final,
        n=traj.n,
        margin=cfg.margin,
        refused=candidates - len(times),
        diagnostic=diag,
    )


def _horizon(traj: Trajectory, cfg: RenewalConfig) -> int:
    return traj.n - cfg.margin if cfg.discard_tail else traj.n


def detect_renewals(traj: Trajectory, cfg: RenewalConfig) -> RenewalRecord:
    """All renewal times ``k <= n - margin`` of the trajectory."""
    cfg.validate()
    n = traj.n
    k = np.arange(n + 1)
    ok = (traj.states == cfg.target_type) & (_suffix_min(traj.lcps) >= traj.distances)
    candidates = int(ok.sum())
    ok &= k <= _horizon(traj, cfg)
    return _finish(traj, cfg, np.flatnonzero(ok), candidates)


def detect_renewals_bruteforce(traj: Trajectory, cfg: RenewalConfig, A: ConeAutomaton) -> RenewalRecord:
    """The definition, literally: replay every position and test cone membership.

    Quadratic in the worst case; meant as an oracle on short trajectories.
    """
    positions = [traj.position(0)]
    from .shortlex import Position, get_engine

    pos = Position(get_engine(traj.measure.presentation))
    pos.load_normal_form(traj.start)
    words = traj.measure.words
    for j in range(1, traj.n + 1):
        for a in traj.increments[traj.times[j - 1] : traj.times[j]]:
            pos.mul_word(words[a])
        positions.append(pos.word())
    found = []
    for k, x in enumerate(positions):
        if state_of(x, A) != cfg.target_type:
            continue
        if all(in_cone(x, positions[i]) for i in range(k, traj.n + 1)):
            found.append(k)
    horizon = _horizon(traj, cfg)
    kept = [k for k in found if k <= horizon]
    return _finish(traj, cfg, np.array(kept, dtype=np.int64), len(found))


@dataclass
class ExcursionStats:
    """Excursions between consecutive renewals (the one before ``R_1`` is excluded)."""

    times: np.ndarray
    taus: np.ndarray
    deltas: np.ndarray
    overshoots: np.ndarray
    first_time: int
    first_distance: int
    base_taus: np.ndarray | None = None  # excursion lengths in base-walk steps

    def __len__(self) -> int:
        return len(self.taus)

    @property
    def v_hat(self) -> float:
        return float(self.deltas.sum() / self.taus.sum())

    def residuals(self, v: float | None = None) -> np.ndarray:
        """``xi_i = delta_i - tau_i * v`` (in-sample ``v_hat`` by default)."""
        v = self.v_hat if v is None else v
        return self.deltas - self.taus * v

    def k_of_n(self, n: int) -> int:
        return int(np.searchsorted(self.times, n, side="right"))

    @classmethod
    def concat(cls, parts: list) -> "ExcursionStats":
        """Pool excursions from independent replicas."""
        if not parts:
            raise ValueError("nothing to pool")
        return cls(
            times=np.concatenate([s.times for s in parts]),
            taus=np.concatenate([s.taus for s in parts]),
            deltas=np.concatenate([s.deltas for s in parts]),
            overshoots=np.concatenate([s.overshoots for s in parts]),
            first_time=parts[0].first_time,
            first_distance=parts[0].first_distance,
            base_taus=None if any(s.base_taus is None for s in parts)
            else np.concatenate([s.base_taus for s in parts]),
        )


class TooFewRenewals(ValueError):
    pass


def excursion_stats(rec: RenewalRecord, traj: Trajectory) -> ExcursionStats:
    if len(rec) < 3:
        raise TooFewRenewals(f"only {len(rec)} renewals; run a longer walk")
    times = rec.times
    d = traj.distances
    # running maximum of the distance inside each excursion [R_k, R_{k+1}]
    seg_max = np.maximum.reduceat(d[times[0] : times[-1] + 1], times[:-1] - times[0])
    seg_max = np.maximum(seg_max, d[times[1:]])
    return ExcursionStats(
        times=times,
        taus=np.diff(times),
        deltas=np.diff(d[times]),
        overshoots=seg_max - d[times[:-1]],
        first_time=int(times[0]),
        first_distance=int(d[times[0]]),
        base_taus=np.diff(traj.times[times]),
    )


def check_renewal_identities(rec: RenewalRecord, traj: Trajectory) -> None:
    """Exact checks that hold on every run.

    Between consecutive renewals the kept prefix never drops below the
    earlier renewal point (the positions nest), and the renewal distances
    add up: ``d(e, Z_{R_n}) = d(e, Z_{R_1}) + sum of delta_i``.
    """
    t = rec.times
    d = traj.distances[t]
    if np.any(np.diff(t) < 1):
        raise AssertionError("renewal times must strictly increase")
    for i in range(len(t) - 1):
        if traj.lcps[t[i] : t[i + 1]].min() < d[i]:
            raise AssertionError(f"walk leaves the cone of the renewal at {t[i]}")
    if len(t) and int(traj.distances[t[-1]]) != int(d[0]) + int(np.diff(d).sum()):
        raise AssertionError("distance additivity fails")


def verify_renewal_positions(rec: RenewalRecord, traj: Trajectory) -> None:
    """Replay the walk and check the renewal identities on actual normal forms.

    Each renewal position must equal the claimed prefix of the final
    position, and ``d(Z_{R_i}, Z_{R_{i+1}})`` recomputed as the length of
    the normal form of ``Z_{R_i}^-1 Z_{R_{i+1}}`` must equal the difference
    of the recorded distances.
    """
    from .shortlex import Position, get_engine
    from .words import inverse

    eng = get_engine(traj.measure.presentation)
    pos = Position(eng)
    pos.load_normal_form(traj.start)
    words = traj.measure.words
    final = list(traj.final)
    wanted = dict(zip(rec.times.tolist(), traj.distances[rec.times].tolist()))
    prev = None
    for j in range(traj.n + 1):
        if j:
            for a in traj.increments[traj.times[j - 1] : traj.times[j]]:
                pos.mul_word(words[a])
        if j in wanted:
            dj = wanted[j]
            if len(pos.letters) != dj or pos.letters != final[:dj]:
                raise AssertionError(f"position at renewal {j} is not a prefix of the final one")
            here = pos.word()
            if prev is not None:
                step = len(eng.normal_form(inverse(prev[1]) + here))
                if step != dj - len(prev[1]):
                    raise AssertionError(f"distance additivity fails between {prev[0]} and {j}")
            prev = (j, here)


def _autocorr(x: np.ndarray, max_lag: int) -> list | None:
    x = np.asarray(x, dtype=float)
    xc = x - x.mean()
    denom = float(np.dot(xc, xc))
    if denom == 0.0 or len(x) <= max_lag:
        return None
    return [float(np.dot(xc[:-k], xc[k:]) / denom) for k in range(1, max_lag + 1)]


def iid_diagnostics(s: ExcursionStats, max_lag: int = 5) -> dict:
    """Autocorrelations (lags 1..max_lag) and first-vs-second-half KS tests."""
    out = {"m": len(s), "null_band": 3 / np.sqrt(max(len(s), 1))}
    for name, x in (("tau", s.taus), ("delta", s.deltas), ("xi", s.residuals())):
        ac = _autocorr(x, max_lag)
        half = len(x) // 2
        if half and np.ptp(x) > 0:
            ks = stats.ks_2samp(x[:half], x[half:])
            ks_stat, ks_p = float(ks.statistic), float(ks.pvalue)
        else:
            ks_stat, ks_p = None, None
        out[name] = {
            "autocorrelation": ac,
            "zero_variance": ac is None and len(x) > max_lag,
            "halves_ks": ks_stat,
            "halves_ks_pvalue": ks_p,
        }
    return out


@dataclass
class TailFit:
    slope: float
    intercept: float
    r2: float
    n_points: int
    threshold: float
    flagged: bool = field(default=False)


def tail_fit(x: np.ndarray, quantile: float = 0.9, min_r2: float = 0.95) -> TailFit:
    """Least-squares line through the empirical log-survival over the upper tail.

    ``S(t) = P(X >= t)`` is evaluated at the distinct sample values from
    the ``quantile`` point up to the maximum.
    """
    x = np.sort(np.asarray(x, dtype=float))
    if len(x) < 10:
        raise ValueError("need at least 10 samples for a tail fit")
    thr = float(np.quantile(x, quantile))
    vals = np.unique(x[x >= thr])
    surv = (len(x) - np.searchsorted(x, vals, side="left")) / len(x)
    if len(vals) < 3:
        return TailFit(float("nan"), float("nan"), float("nan"), len(vals), thr, True)
    res = stats.linregress(vals, np.log(surv))
    r2 = float(res.rvalue**2)
    return TailFit(float(res.slope), float(res.intercept), r2, len(vals), thr, r2 < min_r2)


def tail_diagnostics(s: ExcursionStats, quantile: float = 0.9) -> dict:
    return {
        name: tail_fit(x, quantile).__dict__
        for name, x in (("tau", s.taus), ("delta", s.deltas), ("overshoot", s.overshoots))
    }


def write_excursions_csv(path, s: ExcursionStats, v: float | None = None) -> None:
    xi = s.residuals(v)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "R_i", "tau", "delta", "xi", "M_k"])
        for i in range(len(s)):
            w.writerow([i + 1, int(s.times[i]), int(s.taus[i]), int(s.deltas[i]), float(xi[i]), int(s.overshoots[i])])


def renewal_summary(rec: RenewalRecord) -> dict:
    return {
        "n": rec.n,
        "margin": rec.margin,
        "renewals": len(rec),
        "refused_in_tail": rec.refused,
        "first": int(rec.times[0]) if len(rec) else None,
        "diagnostic": rec.diagnostic,
    }


def dumps_summary(rec: RenewalRecord) -> str:
    return json.dumps(renewal_summary(rec), indent=2)
