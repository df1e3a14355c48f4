"""Exact oracle checks: normal-form lengths, sphere counts, renewal detection."""

from __future__ import annotations

from typing import Callable, Iterator

import numpy as np

from .automaton import ConeAutomaton, count_paths
from .oracle import BallOracle, bfs_oracle
from .renewal import RenewalConfig, detect_renewals, detect_renewals_bruteforce
from .shortlex import get_engine
from .walk import DrivingMeasure, run_walk
from .words import LENGTH_REDUCING, Presentation, apply_rules, build_rules


def freely_reduced_words(p: Presentation, max_len: int) -> Iterator[tuple]:
    """All freely reduced words of length <= ``max_len``, shortest first."""
    level = [()]
    yield ()
    for _ in range(max_len):
        nxt = []
        for w in level:
            for x in p.letters:
                if not w or w[-1] != x ^ 1:
                    nxt.append(w + (x,))
        yield from nxt
        level = nxt


def distance_mismatches(
    p: Presentation,
    radius: int,
    ball: BallOracle | None = None,
    reducer: Callable | None = None,
    limit: int = 20,
) -> tuple[int, int, list]:
    """Compare ``|reducer(w)|`` with the BFS distance for every reduced word up to ``radius``.

    ``reducer`` defaults to the exact normal form.  Returns the number of
    words checked, the number of mismatches and up to ``limit`` examples.
    """
    ball = ball or bfs_oracle(p, radius)
    reducer = reducer or get_engine(p).normal_form
    examples = []
    checked = bad = 0
    for w in freely_reduced_words(p, radius):
        checked += 1
        if len(reducer(w)) != ball.distance(w):
            bad += 1
            if len(examples) < limit:
                examples.append(w)
    return checked, bad, examples


def corrupted_rules(p: Presentation) -> list:
    """The rule set with one length-reducing rule given a wrong right-hand side.

    A negative control: the damaged rule still shortens words, so rewriting
    terminates, but the results no longer have geodesic length.  (Simply
    dropping a rule is masked by the redundancy of the remaining ones.)
    """
    from .words import RewriteRule

    rules = build_rules(p)
    first = next(i for i, r in enumerate(rules) if r.kind == LENGTH_REDUCING)
    bad = RewriteRule(rules[first].lhs, rules[first].lhs[:1], LENGTH_REDUCING)
    return rules[:first] + [bad] + rules[first + 1 :]


def rule_reducer(rules: list) -> Callable:
    return lambda w: apply_rules(w, rules)


def sphere_mismatches(A: ConeAutomaton, ball: BallOracle) -> list:
    """``(n, count_paths, sphere)`` for every radius where they differ."""
    return [
        (n, count_paths(A, n), ball.sphere(n))
        for n in range(ball.radius + 1)
        if count_paths(A, n) != ball.sphere(n)
    ]


def renewal_mismatches(
    p: Presentation,
    A: ConeAutomaton,
    m: DrivingMeasure,
    target: int,
    n: int = 2000,
    trajectories: int = 10,
    seed: int = 0,
    margin: int = 100,
) -> list:
    """Replica indices where the fast detector and the brute-force definition disagree."""
    cfg = RenewalConfig(target, margin)
    bad = []
    for r in range(trajectories):
        traj = run_walk(m, p, A, n, seed, r)
        fast = detect_renewals(traj, cfg)
        slow = detect_renewals_bruteforce(traj, cfg, A)
        if not np.array_equal(fast.times, slow.times):
            bad.append(r)
    return bad


def rules_hold(p: Presentation, ball: BallOracle) -> list:
    """Rules whose two sides are different elements (checked in the ball)."""
    return [r for r in build_rules(p) if ball.lookup(r.lhs) != ball.lookup(r.rhs) or ball.lookup(r.lhs) < 0]
