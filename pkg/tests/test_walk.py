import csv
import warnings

import numpy as np
import pytest

from conewalk.automaton import state_of
from conewalk.shortlex import normal_form
from conewalk.walk import (
    AssumptionError,
    DrivingMeasure,
    LazyAverageDriver,
    estimate_stay_probability,
    run_lazy_walk,
    run_walk,
    validate_measure,
    visit_counts,
)
from conewalk.words import parse_word


def measure(p, spec):
    words, probs = zip(*spec)
    return DrivingMeasure([parse_word(w) for w in words], probs, p)


# F2 atoms whose two-fold products restore the missing generators a1 and b1
TWISTED = [("a1b1", 0.25), ("B1", 0.25), ("A1", 0.25), ("b1A1", 0.25)]


@pytest.mark.parametrize("spec, error", [
    ([("a1", 0.5), ("A1", 0.4)], ValueError),
    ([("a1", 1.2), ("A1", -0.2)], ValueError),
    ([("a1A1", 0.5), ("b1", 0.5)], ValueError),
    ([("a1", 0.5), ("a1", 0.5)], ValueError),
    ([("a2", 1.0)], ValueError),
])
def test_measure_rejects(free2, spec, error):
    with pytest.raises(error):
        measure(free2, spec)


def test_duplicate_group_element_rejected(genus2):
    # a1b1A1B1a2 and b2a2B2 are the same element
    with pytest.raises(ValueError):
        measure(genus2, [("a1b1A1B1a2", 0.5), ("b2a2B2", 0.5)])


def test_validate_simple(genus2, genus2_srw):
    rep = validate_measure(genus2_srw, genus2)
    assert rep.contains_generators and rep.symmetric and rep.missing == []


def test_missing_generators_suggest_lazy_driver(free2):
    m = measure(free2, TWISTED)
    with pytest.raises(AssumptionError, match="lazy"):
        validate_measure(m, free2)
    with pytest.raises(AssumptionError, match="increase ell"):
        validate_measure(m, free2, lazy_ell=1)
    rep = validate_measure(m, free2, lazy_ell=2)
    assert rep.lazy_restores


def test_asymmetric_measure_is_allowed(free2):
    m = measure(free2, [("a1", 0.4), ("A1", 0.1), ("b1", 0.3), ("B1", 0.2)])
    assert not m.symmetric
    assert validate_measure(m, free2).contains_generators


def test_config_round_trip(genus2):
    m = measure(genus2, [("a1", 0.2), ("A1", 0.2), ("b1", 0.1), ("B1", 0.1), ("a2", 0.1), ("A2", 0.1), ("b2", 0.1), ("B2", 0.1)])
    again = DrivingMeasure.from_config(m.to_config(), genus2)
    assert again.words == m.words and np.allclose(again.probs, m.probs)
    assert DrivingMeasure.from_config({"kind": "simple"}, genus2).words == DrivingMeasure.simple(genus2).words


def test_zero_steps(genus2, genus2_automaton, genus2_srw):
    traj = run_walk(genus2_srw, genus2, genus2_automaton, 0, 1)
    assert traj.n == 0 and traj.final == () and traj.distances.tolist() == [0]
    with pytest.raises(ValueError):
        run_walk(genus2_srw, genus2, genus2_automaton, -1, 1)


def test_deterministic(genus2, genus2_automaton, genus2_srw):
    a = run_walk(genus2_srw, genus2, genus2_automaton, 3000, 7, 2)
    b = run_walk(genus2_srw, genus2, genus2_automaton, 3000, 7, 2)
    c = run_walk(genus2_srw, genus2, genus2_automaton, 3000, 7, 3)
    assert np.array_equal(a.increments, b.increments) and np.array_equal(a.distances, b.distances)
    assert a.final == b.final
    assert not np.array_equal(a.increments, c.increments)


def test_trajectory_is_consistent(genus2, genus2_automaton):
    m = measure(genus2, [("a1", 0.1), ("A1", 0.1), ("b1", 0.1), ("B1", 0.1), ("a2", 0.1), ("A2", 0.1), ("b2", 0.1), ("B2", 0.1), ("a1b2", 0.2)])
    traj = run_walk(m, genus2, genus2_automaton, 400, 3, checkpoint_every=50)
    word = ()
    for j in range(traj.n + 1):
        if j:
            word += m.words[traj.increments[j - 1]]
        x = normal_form(word, genus2)
        if j % 37 == 0 or j == traj.n:
            assert traj.position(j) == x
        assert traj.distances[j] == len(x)
        assert traj.states[j] == state_of(x, genus2_automaton)
    assert traj.final == normal_form(word, genus2)
    steps = np.abs(np.diff(traj.distances))
    assert steps.max() <= m.max_length
    assert np.all(traj.lcps <= np.minimum(traj.distances[:-1], traj.distances[1:]))


def test_atom_frequencies(free2, free2_automaton):
    m = measure(free2, [("a1", 0.4), ("A1", 0.1), ("b1", 0.3), ("B1", 0.2)])
    traj = run_walk(m, free2, free2_automaton, 100_000, 5)
    freq = np.bincount(traj.increments, minlength=4) / traj.n
    se = np.sqrt(m.probs * (1 - m.probs) / traj.n)
    assert np.all(np.abs(freq - m.probs) <= 4 * se)


def test_free_group_speed(free2, free2_automaton, free2_srw):
    traj = run_walk(free2_srw, free2, free2_automaton, 1_000_000, 99)
    assert abs(traj.distances[-1] / traj.n - 0.5) <= 0.01


def test_write_csv(tmp_path, free2, free2_automaton, free2_srw):
    traj = run_walk(free2_srw, free2, free2_automaton, 50, 1)
    path = tmp_path / "traj.csv"
    traj.write_csv(path)
    rows = list(csv.reader(path.open()))
    assert len(rows) == 52
    assert int(rows[-1][rows[0].index("distance")]) == traj.distances[-1]


def test_lazy_driver_with_ell_one_is_the_base_walk(genus2, genus2_automaton, genus2_srw):
    lazy = run_lazy_walk(LazyAverageDriver(genus2_srw, 1), genus2, genus2_automaton, 2000, 4, 1)
    plain = run_walk(genus2_srw, genus2, genus2_automaton, 2000, 4, 1)
    assert np.array_equal(lazy.distances, plain.distances)
    assert np.array_equal(lazy.times, plain.times)
    assert lazy.final == plain.final


def test_lazy_times(free2, free2_automaton, free2_srw):
    driver = LazyAverageDriver(free2_srw, 3)
    u = driver.draw_u(200_000, 1)
    assert set(np.unique(u)) == {1, 2, 3}
    assert abs(u.mean() - 2) <= 4 * np.sqrt(2 / 3 / len(u))
    traj = run_lazy_walk(driver, free2, free2_automaton, 20_000, 2)
    assert len(traj.increments) == traj.times[-1]
    assert abs(traj.times[-1] / traj.n - 2) < 0.05
    with pytest.raises(ValueError):
        LazyAverageDriver(free2_srw, 0)


def test_lazy_driver_runs_twisted_measure(free2, free2_automaton):
    m = measure(free2, TWISTED)
    traj = run_lazy_walk(LazyAverageDriver(m, 2), free2, free2_automaton, 500, 3)
    assert traj.n == 500 and traj.ell == 2
    with pytest.raises(AssumptionError):
        run_lazy_walk(LazyAverageDriver(m, 1), free2, free2_automaton, 10, 3)


def test_visit_counts(free2, free2_automaton, free2_srw):
    traj = run_walk(free2_srw, free2, free2_automaton, 1000, 3)
    assert visit_counts(traj, 5).sum() == 1001


def test_stay_probability_free_group(free2, free2_automaton, free2_srw):
    # from a1 the distance is a +-1 walk with up-probability 3/4: escape 1 - 1/3
    est = estimate_stay_probability(1, free2_srw, free2, free2_automaton, 400, 100, 3000, 8)
    assert abs(est.p - 2 / 3) <= 4 * est.se
    assert est.p_at_margin >= est.p_at_half_margin >= est.p
    assert est.margin_sensitivity < 0.02


def test_stay_probability_vanishes_without_drift(free2, free2_automaton):
    # the {a1, A1} walk is a recurrent walk on a line and leaves every cone of a1
    m = measure(free2, [("a1", 0.5), ("A1", 0.5)])
    short = estimate_stay_probability(1, m, free2, free2_automaton, 100, 10, 1000, 1)
    long = estimate_stay_probability(1, m, free2, free2_automaton, 2500, 10, 1000, 1)
    assert long.p < short.p / 2


def test_stay_probability_warns_on_non_large_state(free2, free2_automaton, free2_srw):
    with pytest.warns(UserWarning):
        estimate_stay_probability(0, free2_srw, free2, free2_automaton, 20, 5, 10, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        with pytest.raises(ValueError):
            estimate_stay_probability(1, free2_srw, free2, free2_automaton, 20, 30, 10, 1)


@pytest.mark.parametrize("state", [1, 9, 30, 59])
def test_stay_probability_positive_on_recurrent_states(genus2, genus2_automaton, genus2_srw, state):
    est = estimate_stay_probability(state, genus2_srw, genus2, genus2_automaton, 400, 100, 300, 2)
    assert est.p > 4 * est.se > 0
