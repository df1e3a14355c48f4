import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conewalk.oracle import ElementIndex
from conewalk.shortlex import Position, ShortlexEngine, get_engine, is_normal_form, mul, normal_form
from conewalk.words import Presentation, format_word, free_reduce, inverse, parse_word, words_equal

G2 = Presentation.surface(2)
F2 = Presentation.free(2)
words_g2 = st.lists(st.integers(0, 7), max_size=24).map(tuple)
words_f2 = st.lists(st.integers(0, 3), max_size=24).map(tuple)


@pytest.mark.parametrize("w, nf", [
    ("", ""),
    ("a1A1", ""),
    ("a1b1A1B1a2", "b2a2B2"),
    ("a1b1A1B1a2b2A2B2", ""),
    ("a1B1A1b2b1a1B1A1", "B1a2b2b2A2B2"),
    ("b2a2B2A2", "a1b1A1B1"),
    ("a2b2A2B2", "b1a1B1A1"),
])
def test_examples(w, nf):
    assert format_word(normal_form(parse_word(w), G2)) == nf


def test_ball_words_are_normal_forms(genus2_ball):
    eng = get_engine(G2)
    for w in genus2_ball.words[:20_000]:
        assert eng.normal_form(w) == w
        assert is_normal_form(w, G2)


def test_neighbor_products_match_oracle(genus2):
    from conewalk.oracle import bfs_oracle

    ball = bfs_oracle(genus2, 4)
    for i, w in enumerate(ball.words[: len(ball) - ball.spheres[-1]]):
        for x in genus2.letters:
            assert mul(w, (x,), genus2) == ball.words[ball.neighbors[i][x]]


def test_not_normal_form():
    assert not is_normal_form(parse_word("a1b1A1B1a2"), G2)
    assert not is_normal_form(parse_word("a1A1"), G2)
    pos = Position(get_engine(G2))
    with pytest.raises(ValueError):
        pos.load_normal_form(parse_word("b1A1B1a2"))


def test_free_group_is_free_reduction():
    w = parse_word("a1b1B1a1A1B1b1")
    assert normal_form(w, F2) == free_reduce(w)
    with pytest.raises(ValueError):
        normal_form(parse_word("a2"), F2)


def test_reference_engine_with_larger_difference_set(genus2_ball):
    # any finite superset of the word differences gives the same normal forms
    big = ElementIndex(G2)
    for w in genus2_ball.words[: sum(genus2_ball.spheres[:5])]:
        big.add(w)
    ref = ShortlexEngine(G2, big)
    eng = get_engine(G2)
    for w in [parse_word("a1B1A1b2b1a1B1A1"), parse_word("B2A2b2a2a1b1"), G2.relator * 2 + (3,)]:
        assert ref.normal_form(w) == eng.normal_form(w)


@given(words_g2)
@settings(max_examples=300, deadline=None)
def test_normal_form_properties(w):
    nf = normal_form(w, G2)
    assert normal_form(nf, G2) == nf
    assert is_normal_form(nf, G2)
    assert len(nf) <= len(free_reduce(w))
    assert words_equal(w, nf, G2)
    assert normal_form(tuple(w) + inverse(w), G2) == ()


@given(words_g2, words_g2)
@settings(max_examples=200, deadline=None)
def test_mul_is_concatenation(x, w):
    assert mul(normal_form(x, G2), w, G2) == normal_form(x + w, G2)


@given(words_g2, st.lists(st.integers(0, 7), min_size=1, max_size=4).map(tuple))
@settings(max_examples=300, deadline=None)
def test_mul_word_reports_common_prefix(x, w):
    eng = get_engine(G2)
    pos = eng.position(x)
    old = pos.word()
    kept = pos.mul_word(w)
    new = pos.word()
    lcp = 0
    while lcp < min(len(old), len(new)) and old[lcp] == new[lcp]:
        lcp += 1
    assert kept == lcp
    assert new == normal_form(x + w, G2)


@given(words_g2)
@settings(deadline=None)
def test_normal_form_invariant_under_relator_insertion(w):
    k = len(w) // 2
    assert normal_form(w[:k] + G2.relator + w[k:], G2) == normal_form(w, G2)


@given(words_f2)
def test_free_group_property(w):
    assert normal_form(w, F2) == free_reduce(w)
