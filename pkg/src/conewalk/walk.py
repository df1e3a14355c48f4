"""Driving measures and random-walk trajectories.

A trajectory keeps, per step, the word length ``d(e, Z_j)``, the automaton
state of ``Z_j`` and the length of the common prefix of the normal forms
of ``Z_{j-1}`` and ``Z_j``.  Positions themselves are not stored (their
total size grows quadratically); any ``Z_j`` can be replayed from the
increments, optionally starting at a stored checkpoint.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .automaton import ConeAutomaton
from .shortlex import Position, get_engine
from .words import Presentation, Word, format_word, free_reduce, is_freely_reduced, parse_word


class AssumptionError(ValueError):
    """A driving measure violates a structural assumption."""


class DrivingMeasure:
    """Finitely supported probability measure on the group.

    ``words[i]`` is drawn with probability ``probs[i]``.
    """

    def __init__(self, words: Sequence[Word], probs: Sequence[float], p: Presentation):
        self.presentation = p
        self.words = [tuple(w) for w in words]
        self.probs = np.asarray(probs, dtype=float)
        if len(self.words) != len(self.probs) or not self.words:
            raise ValueError("need one probability per atom and at least one atom")
        if np.any(self.probs <= 0):
            raise ValueError("atom probabilities must be positive")
        if abs(self.probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {self.probs.sum()!r}, not 1")
        n_letters = len(p.letters)
        for w in self.words:
            if not is_freely_reduced(w) or any(not 0 <= x < n_letters for x in w):
                raise ValueError(f"atom {format_word(w)} is not a reduced word over the generators")
        eng = get_engine(p)
        self.normal_forms = [eng.normal_form(w) for w in self.words]
        if len(set(self.normal_forms)) != len(self.words):
            raise ValueError("atoms must be distinct group elements")

    @classmethod
    def simple(cls, p: Presentation) -> "DrivingMeasure":
        """Simple random walk: uniform on the symmetric generating set."""
        k = len(p.letters)
        return cls([(x,) for x in p.letters], [1.0 / k] * k, p)

    @classmethod
    def from_config(cls, spec: dict, p: Presentation) -> "DrivingMeasure":
        if not spec.get("atoms"):
            if spec.get("kind", "simple") != "simple":
                raise ValueError(f"unknown measure kind {spec.get('kind')!r}")
            return cls.simple(p)
        words = [parse_word(a["word"]) for a in spec["atoms"]]
        return cls(words, [float(a["p"]) for a in spec["atoms"]], p)

    def to_config(self) -> dict:
        return {
            "atoms": [{"word": format_word(w), "p": float(q)} for w, q in zip(self.words, self.probs)]
        }

    def __len__(self) -> int:
        return len(self.words)

    @property
    def max_length(self) -> int:
        return max(len(w) for w in self.words)

    @property
    def contains_generators(self) -> bool:
        support = set(self.normal_forms)
        return all((x,) in support for x in self.presentation.letters)

    @property
    def symmetric(self) -> bool:
        weights = dict(zip(self.normal_forms, self.probs))
        eng = get_engine(self.presentation)
        for w, q in weights.items():
            inv = eng.normal_form(tuple(x ^ 1 for x in reversed(w)))
            if abs(weights.get(inv, 0.0) - q) > 1e-12:
                return False
        return True

    def perturbed(self, direction: Sequence[float], eps: float) -> "DrivingMeasure":
        """``mu + eps * direction``; the direction must sum to zero."""
        direction = np.asarray(direction, dtype=float)
        if direction.shape != self.probs.shape:
            raise ValueError("direction must have one entry per atom")
        if abs(direction.sum()) > 1e-12:
            raise ValueError("perturbation direction must sum to zero")
        probs = self.probs + eps * direction
        if np.any(probs <= 0):
            raise ValueError("perturbation leaves the simplex")
        # renormalize away roundoff so the exact-sum check passes
        return DrivingMeasure(self.words, probs / probs.sum(), self.presentation)


def _support_power_letters(m: DrivingMeasure, ell: int) -> set:
    """Single-letter elements in the support of mu + mu^2 + ... + mu^ell."""
    eng = get_engine(m.presentation)
    layer = {()}
    found: set = set()
    for _ in range(ell):
        layer = {eng.mul(x, w) for x in layer for w in m.normal_forms}
        found |= {w for w in layer if len(w) == 1}
    return found


@dataclass
class MeasureReport:
    contains_generators: bool
    symmetric: bool
    missing: list
    lazy_ell: int | None = None
    lazy_restores: bool | None = None
    warnings: list = field(default_factory=list)


def validate_measure(m: DrivingMeasure, p: Presentation, lazy_ell: int | None = None) -> MeasureReport:
    """Check that the support contains every generator and its inverse.

    Without a lazy driver a violation is an error; with ``lazy_ell`` the
    averaged measure ``(mu + ... + mu^ell) / ell`` must contain them instead.
    """
    if m.presentation != p:
        raise ValueError("measure was built for a different presentation")
    support = set(m.normal_forms)
    missing = [x for x in p.letters if (x,) not in support]
    report = MeasureReport(not missing, m.symmetric, [format_word((x,)) for x in missing])
    if lazy_ell is not None:
        if lazy_ell < 1:
            raise ValueError("lazy ell must be at least 1")
        letters = _support_power_letters(m, lazy_ell)
        still = [x for x in p.letters if (x,) not in letters]
        report.lazy_ell = lazy_ell
        report.lazy_restores = not still
        if still:
            raise AssumptionError(
                f"ell = {lazy_ell} does not bring generators "
                f"{', '.join(format_word((x,)) for x in still)} into the support; increase ell"
            )
        return report
    if missing:
        raise AssumptionError(
            f"support misses generators {', '.join(report.missing)}; "
            "use the lazy averaging driver (lazy_ell) to bypass this"
        )
    # a cheap sufficient check for generating as a semigroup
    if not report.symmetric and len(_support_power_letters(m, 2)) < len(p.letters):
        msg = "support may not generate the group as a semigroup"
        report.warnings.append(msg)
        warnings.warn(msg)
    return report


@dataclass
class Trajectory:
    """A sampled walk ``Z_0, ..., Z_n``.

    ``increments`` are atom indices of the base measure (``times[n]`` of
    them); ``times[j]`` is the number of base steps taken by step ``j``
    (``times[j] = j`` for plain walks).  ``lcps[j-1]`` is the common prefix
    length of the normal forms of ``Z_{j-1}`` and ``Z_j``.
    """

    seed: int
    replica: int
    measure: DrivingMeasure
    start: Word
    increments: np.ndarray
    times: np.ndarray
    distances: np.ndarray
    lcps: np.ndarray
    states: np.ndarray
    final: Word
    checkpoints: dict = field(default_factory=dict)
    ell: int = 1

    @property
    def n(self) -> int:
        return len(self.distances) - 1

    def position(self, k: int) -> Word:
        """Normal form of ``Z_k``, replayed from the nearest checkpoint."""
        if not 0 <= k <= self.n:
            raise IndexError(k)
        if k == self.n:
            return self.final
        base = max((c for c in self.checkpoints if c <= k), default=0)
        pos = Position(get_engine(self.measure.presentation))
        pos.load_normal_form(self.checkpoints.get(base, self.start))
        words = self.measure.words
        for a in self.increments[self.times[base] : self.times[k]]:
            pos.mul_word(words[a])
        return pos.word()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "distance", "state_id"])
            for j, (d, s) in enumerate(zip(self.distances, self.states)):
                w.writerow([j, int(d), int(s)])


def _rng(seed: int, replica: int, stream: int = 0) -> np.random.Generator:
    # one independent stream per (seed, replica); stream 1 feeds the lazy driver
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(replica), int(stream)]))


def _walk(
    m: DrivingMeasure,
    A: ConeAutomaton,
    draws: np.ndarray,
    times: np.ndarray,
    start: Word,
    checkpoint_every: int | None,
):
    eng = get_engine(m.presentation)
    if A.frame_state is None:
        raise ValueError("automaton has no frame map; build it with build_automaton")
    fs = A.frame_state.tolist()
    pos = Position(eng)
    pos.load_normal_form(start)
    letters = pos.letters
    frames = pos.frames
    n = len(times) - 1
    dist = [0] * (n + 1)
    lcp = [0] * n
    states = [0] * (n + 1)
    dist[0] = len(letters)
    states[0] = fs[frames[-1]]
    checkpoints: dict = {}
    plain = bool(np.all(np.diff(times) == 1)) and m.max_length == 1
    if plain and checkpoint_every is None:
        # hot path: one letter per step
        mul = pos.mul_letter
        seq = [m.words[a][0] for a in draws.tolist()]
        for j, x in enumerate(seq, 1):
            lcp[j - 1] = mul(x)
            dist[j] = len(letters)
            states[j] = fs[frames[-1]]
    else:
        words = m.words
        dl = draws.tolist()
        tl = times.tolist()
        for j in range(1, n + 1):
            w = ()
            for a in dl[tl[j - 1] : tl[j]]:
                w += words[a]
            lcp[j - 1] = pos.mul_word(w)
            dist[j] = len(letters)
            states[j] = fs[frames[-1]]
            if checkpoint_every and j % checkpoint_every == 0:
                checkpoints[j] = pos.word()
    return (
        np.asarray(dist, dtype=np.int64),
        np.asarray(lcp, dtype=np.int64),
        np.asarray(states, dtype=np.int32),
        pos.word(),
        checkpoints,
    )


def run_walk(
    m: DrivingMeasure,
    p: Presentation,
    A: ConeAutomaton,
    n: int,
    seed: int,
    replica: int = 0,
    start: Word = (),
    checkpoint_every: int | None = None,
) -> Trajectory:
    """Sample ``n`` steps of the walk driven by ``m``; deterministic in (seed, replica)."""
    if n < 0:
        raise ValueError("n must be non-negative")
    rng = _rng(seed, replica)
    draws = rng.choice(len(m), size=n, p=m.probs).astype(np.int32)
    times = np.arange(n + 1, dtype=np.int64)
    dist, lcp, states, final, cps = _walk(m, A, draws, times, tuple(start), checkpoint_every)
    return Trajectory(seed, replica, m, tuple(start), draws, times, dist, lcp, states, final, cps)


@dataclass
class LazyAverageDriver:
    """Steps of ``(mu + mu^2 + ... + mu^ell) / ell``: draw U uniform on 1..ell, take U base steps."""

    base: DrivingMeasure
    ell: int

    def __post_init__(self):
        if self.ell < 1:
            raise ValueError("ell must be at least 1")

    def draw_u(self, n: int, seed: int, replica: int = 0) -> np.ndarray:
        if self.ell == 1:
            return np.ones(n, dtype=np.int64)
        return _rng(seed, replica, stream=1).integers(1, self.ell + 1, size=n)


def run_lazy_walk(
    driver: LazyAverageDriver,
    p: Presentation,
    A: ConeAutomaton,
    n: int,
    seed: int,
    replica: int = 0,
    checkpoint_every: int | None = None,
) -> Trajectory:
    """Walk driven by the averaged measure; ``traj.times`` holds ``T_j``."""
    validate_measure(driver.base, p, lazy_ell=driver.ell)
    u = driver.draw_u(n, seed, replica)
    times = np.concatenate([[0], np.cumsum(u)]).astype(np.int64)
    m = driver.base
    draws = _rng(seed, replica).choice(len(m), size=int(times[-1]), p=m.probs).astype(np.int32)
    dist, lcp, states, final, cps = _walk(m, A, draws, times, (), checkpoint_every)
    return Trajectory(seed, replica, m, (), draws, times, dist, lcp, states, final, cps, ell=driver.ell)


def visit_counts(traj: Trajectory, n_states: int) -> np.ndarray:
    return np.bincount(traj.states, minlength=n_states)


def pilot_target_type(A: ConeAutomaton, m: DrivingMeasure, n: int = 20_000, seed: int = 0) -> int:
    """Large ubiquitous state visited most often by a pilot walk."""
    from .automaton import choose_target_type

    traj = run_walk(m, m.presentation, A, n, seed)
    return choose_target_type(A, visit_counts(traj, A.n_states))


@dataclass
class StayEstimate:
    p: float
    se: float
    horizon: int
    margin: int
    replicas: int
    p_at_margin: float  # survival up to horizon - margin
    p_at_half_margin: float  # survival up to horizon - margin // 2

    @property
    def margin_sensitivity(self) -> float:
        return self.p_at_margin - self.p


def estimate_stay_probability(
    state: int,
    m: DrivingMeasure,
    p: Presentation,
    A: ConeAutomaton,
    horizon: int,
    margin: int,
    replicas: int,
    seed: int,
) -> StayEstimate:
    """Monte Carlo estimate of ``P_x[the walk never leaves C_A(x)]`` for a root ``x`` of ``state``.

    A replica counts as staying if it is still inside the cone at
    ``horizon``.  Survival at ``horizon - margin`` and ``horizon - margin/2``
    is reported as a sensitivity check on the truncation.
    """
    if A.large is not None and not A.large[state]:
        warnings.warn("state is not marked large; the estimate should vanish with the horizon")
    if not 0 < margin < horizon:
        raise ValueError("need 0 < margin < horizon")
    root = A.representatives[state]
    depth = len(root)
    eng = get_engine(p)
    words = m.words
    exits = np.full(replicas, horizon + 1, dtype=np.int64)
    for r in range(replicas):
        draws = _rng(seed, r).choice(len(m), size=horizon, p=m.probs)
        pos = Position(eng)
        pos.load_normal_form(root)
        for j, a in enumerate(draws.tolist(), 1):
            # leaving the cone means the kept prefix drops below the root
            if pos.mul_word(words[a]) < depth:
                exits[r] = j
                break
    stay = exits > horizon
    pe = float(stay.mean())
    return StayEstimate(
        p=pe,
        se=float(np.sqrt(pe * (1 - pe) / replicas)),
        horizon=horizon,
        margin=margin,
        replicas=replicas,
        p_at_margin=float((exits > horizon - margin).mean()),
        p_at_half_margin=float((exits > horizon - margin // 2).mean()),
    )
