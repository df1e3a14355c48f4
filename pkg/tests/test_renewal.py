import csv
import json

import numpy as np
import pytest

from conewalk.automaton import ConeAutomaton, MISSING
from conewalk.renewal import (
    RenewalConfig,
    RenewalRecord,
    TooFewRenewals,
    check_renewal_identities,
    detect_renewals,
    detect_renewals_bruteforce,
    dumps_summary,
    excursion_stats,
    iid_diagnostics,
    tail_diagnostics,
    tail_fit,
    verify_renewal_positions,
    write_excursions_csv,
)
from conewalk.shortlex import normal_form
from conewalk.walk import DrivingMeasure, LazyAverageDriver, run_lazy_walk, run_walk
from conewalk.words import inverse, parse_word


def ray(free2):
    return DrivingMeasure([parse_word("a1")], [1.0], free2)


@pytest.mark.parametrize("group, seed", [("genus2", 0), ("genus2", 1), ("free2", 0), ("free2", 1)])
def test_detector_matches_definition(request, group, seed):
    p = request.getfixturevalue(group)
    A = request.getfixturevalue(f"{group}_automaton")
    m = request.getfixturevalue(f"{group}_srw")
    target = request.getfixturevalue(f"{group}_target")
    for r in range(3):
        traj = run_walk(m, p, A, 1500, seed, r)
        for margin in (1, 50):
            cfg = RenewalConfig(target, margin)
            fast, slow = detect_renewals(traj, cfg), detect_renewals_bruteforce(traj, cfg, A)
            assert np.array_equal(fast.times, slow.times)
            assert fast.refused == slow.refused


def test_detector_matches_definition_for_long_atoms(genus2, genus2_automaton, genus2_target):
    atoms = ["a1", "A1", "b1", "B1", "a2", "A2", "b2", "B2", "a1b1A1", "b2b2"]
    m = DrivingMeasure([parse_word(w) for w in atoms], [0.1] * 10, genus2)
    traj = run_lazy_walk(LazyAverageDriver(m, 2), genus2, genus2_automaton, 1000, 4)
    cfg = RenewalConfig(genus2_target, 30)
    assert np.array_equal(detect_renewals(traj, cfg).times, detect_renewals_bruteforce(traj, cfg, genus2_automaton).times)


def test_never_enters_target(free2, free2_automaton):
    # the a1-ray never visits the state entered by b1
    traj = run_walk(ray(free2), free2, free2_automaton, 100, 0)
    rec = detect_renewals(traj, RenewalConfig(3, 10))
    assert len(rec) == 0 and rec.diagnostic
    with pytest.raises(TooFewRenewals):
        excursion_stats(rec, traj)


def test_ray_renews_every_step(free2, free2_automaton):
    traj = run_walk(ray(free2), free2, free2_automaton, 100, 0)
    rec = detect_renewals(traj, RenewalConfig(1, 10))
    assert rec.times.tolist() == list(range(1, 91))
    assert rec.refused == 10
    assert rec.positions[2] == parse_word("a1a1a1")
    s = excursion_stats(rec, traj)
    assert np.all(s.taus == 1) and np.all(s.deltas == 1) and np.all(s.overshoots == 1)
    assert rec.k_of_n(50) == 50


def test_excursion_arithmetic():
    # renewals at 10 and 25 with distance 9 gained in between
    class Traj:
        distances = np.zeros(40, dtype=np.int64)
        times = np.arange(40)

    t = Traj()
    t.distances[10:] = 3
    t.distances[25:] = 12
    t.distances[30] = 14
    rec = RenewalRecord(times=np.array([10, 25, 30]), distances=t.distances[[10, 25, 30]], final=(), n=39, margin=5)
    s = excursion_stats(rec, t)
    assert s.taus.tolist() == [15, 5]
    assert s.deltas.tolist() == [9, 2]
    assert s.first_time == 10 and s.first_distance == 3


def test_excursion_invariants(genus2, genus2_automaton, genus2_srw, genus2_target):
    traj = run_walk(genus2_srw, genus2, genus2_automaton, 50_000, 3)
    rec = detect_renewals(traj, RenewalConfig(genus2_target, 256))
    s = excursion_stats(rec, traj)
    assert abs(s.residuals().sum()) < 1e-8 * s.taus.sum()
    assert np.all(s.taus >= 1)
    assert np.all(s.deltas <= s.taus * genus2_srw.max_length)
    assert np.all(s.overshoots >= s.deltas)
    assert int(traj.distances[rec.times[-1]]) == s.first_distance + int(s.deltas.sum())
    check_renewal_identities(rec, traj)


def test_positions_nest(free2, free2_automaton, free2_srw, free2_target):
    traj = run_walk(free2_srw, free2, free2_automaton, 3000, 8)
    rec = detect_renewals(traj, RenewalConfig(free2_target, 100))
    verify_renewal_positions(rec, traj)
    pos = rec.positions
    for a, b in zip(pos, pos[1:]):
        assert b[: len(a)] == a
        assert len(normal_form(inverse(a) + b, free2)) == len(b) - len(a)


def test_nesting_is_not_always_strict(free2, free2_automaton, free2_srw, free2_target):
    # the walk may return to a renewal point before leaving for good
    traj = run_walk(free2_srw, free2, free2_automaton, 20_000, 1)
    s = excursion_stats(detect_renewals(traj, RenewalConfig(free2_target, 100)), traj)
    assert np.any(s.deltas == 0)
    assert np.all(s.deltas >= 0)


def test_identity_check_catches_a_bad_record(genus2, genus2_automaton, genus2_srw, genus2_target):
    traj = run_walk(genus2_srw, genus2, genus2_automaton, 5000, 2)
    rec = detect_renewals(traj, RenewalConfig(genus2_target, 100))
    # a time whose cone the walk leaves before the next renewal
    gaps = [(int(a), int(b)) for a, b in zip(rec.times, rec.times[1:]) if b - a > 2]
    non_renewal = next(
        k for a, b in gaps for k in range(a + 1, b) if traj.lcps[k:b].min() < traj.distances[k]
    )
    bad = RenewalRecord(np.sort(np.append(rec.times, non_renewal)), rec.distances, rec.final, rec.n, rec.margin)
    with pytest.raises(AssertionError):
        check_renewal_identities(bad, traj)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_margin_monotonicity(genus2, genus2_automaton, genus2_srw, genus2_target, seed):
    traj = run_walk(genus2_srw, genus2, genus2_automaton, 4000, seed)
    prev = None
    for margin in (1, 16, 64, 256, 1024):
        times = set(detect_renewals(traj, RenewalConfig(genus2_target, margin)).times.tolist())
        if prev is not None:
            assert times <= prev
            assert times == {k for k in prev if k <= traj.n - margin}
        prev = times


def test_config_validation(genus2_automaton):
    with pytest.raises(ValueError):
        RenewalConfig(1, 0).validate()
    with pytest.raises(ValueError):
        RenewalConfig(0).validate(genus2_automaton)
    with pytest.raises(ValueError):
        RenewalConfig(999).validate(genus2_automaton)
    RenewalConfig(1).validate(genus2_automaton)


def test_iid_band(free2, free2_automaton, free2_srw, free2_target):
    traj = run_walk(free2_srw, free2, free2_automaton, 200_000, 17)
    s = excursion_stats(detect_renewals(traj, RenewalConfig(free2_target, 256)), traj)
    rep = iid_diagnostics(s)
    assert rep["m"] >= 10_000
    for name in ("tau", "delta", "xi"):
        assert abs(rep[name]["autocorrelation"][0]) <= rep["null_band"]
        assert not rep[name]["zero_variance"]


def test_iid_zero_variance(free2, free2_automaton):
    traj = run_walk(ray(free2), free2, free2_automaton, 100, 0)
    rep = iid_diagnostics(excursion_stats(detect_renewals(traj, RenewalConfig(1, 10)), traj))
    assert rep["tau"]["zero_variance"] and rep["tau"]["autocorrelation"] is None


def test_halves_ks_over_seeds(free2, free2_automaton, free2_srw, free2_target):
    low = 0
    for seed in range(20):
        traj = run_walk(free2_srw, free2, free2_automaton, 20_000, 100 + seed)
        rep = iid_diagnostics(excursion_stats(detect_renewals(traj, RenewalConfig(free2_target, 256)), traj))
        low += rep["tau"]["halves_ks_pvalue"] < 0.05
    assert low <= 3


def test_geometric_tail_slope():
    x = np.random.default_rng(0).geometric(0.2, 200_000)
    fit = tail_fit(x)
    assert fit.slope == pytest.approx(np.log(0.8), rel=0.1)
    assert not fit.flagged


def test_pareto_tail_flagged():
    fit = tail_fit(np.random.default_rng(0).pareto(1.5, 100_000) + 1)
    assert fit.flagged and fit.r2 < 0.95


def test_tail_needs_samples():
    with pytest.raises(ValueError):
        tail_fit(np.arange(5))


def test_free_group_tails(free2, free2_automaton, free2_srw, free2_target):
    traj = run_walk(free2_srw, free2, free2_automaton, 300_000, 5)
    s = excursion_stats(detect_renewals(traj, RenewalConfig(free2_target, 256)), traj)
    rep = tail_diagnostics(s)
    assert rep["tau"]["r2"] >= 0.95 and rep["tau"]["slope"] < 0


def test_outputs(tmp_path, free2, free2_automaton, free2_srw, free2_target):
    traj = run_walk(free2_srw, free2, free2_automaton, 2000, 5)
    rec = detect_renewals(traj, RenewalConfig(free2_target, 100))
    s = excursion_stats(rec, traj)
    path = tmp_path / "exc.csv"
    write_excursions_csv(path, s)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["i", "R_i", "tau", "delta", "xi", "M_k"]
    assert len(rows) == len(s) + 1
    summary = json.loads(dumps_summary(rec))
    assert summary["renewals"] == len(rec) and summary["margin"] == 100


def test_artificial_automaton_never_renews():
    # a table with no presentation: validation only checks flags that are set
    A = ConeAutomaton.from_table([[1, MISSING], [1, MISSING]])
    RenewalConfig(1, 5).validate(A)
