"""Property tests over random words, holes, measures and rationals."""

import random
from fractions import Fraction as F

from hypothesis import given, strategies as st

from hitlab.balls import Ball, ball_measure, ball_to_cylinders, coded_cdf
from hitlab.engine import PatternAutomaton, compile_hole, survival_sequence
from hitlab.measures import MeasureModel, cylinder_measure
from hitlab.symbolic import HoleSpec, SymbolicSystem, enumerate_join, outer_j_approximation

FULL2 = SymbolicSystem.full_shift(2)

bits = st.integers(0, 1)
words = st.lists(bits, min_size=1, max_size=5).map(tuple)
probs = st.fractions(F(1, 20), F(19, 20), max_denominator=40)


@st.composite
def markov_models(draw):
    a = draw(probs)
    b = draw(probs)
    return MeasureModel.markov([[a, 1 - a], [b, 1 - b]])


measures = st.one_of(probs.map(lambda q: MeasureModel.bernoulli([q, 1 - q])), markov_models())


def direct_first_hit(patterns, text):
    for i in range(len(text)):
        for p in patterns:
            if tuple(text[i:i + len(p)]) == p:
                return i + 1
    return None


@given(st.sets(words, min_size=1, max_size=4), st.lists(bits, max_size=40))
def test_automaton_matches_direct_search(patterns, text):
    aut = PatternAutomaton.build(set(patterns), 2)
    assert aut.first_hit(tuple(text)) == direct_first_hit(patterns, text)


def test_automaton_on_seeded_words():
    rng = random.Random(2024)
    for _ in range(1000):
        patterns = {tuple(rng.randint(0, 1) for _ in range(rng.randint(1, 6))) for _ in range(rng.randint(1, 3))}
        text = tuple(rng.randint(0, 1) for _ in range(rng.randint(0, 60)))
        assert PatternAutomaton.build(patterns, 2).first_hit(text) == direct_first_hit(patterns, text)


@given(measures, st.integers(1, 6))
def test_join_is_a_partition(mu, n):
    assert sum(cylinder_measure(mu, w) for w in enumerate_join(FULL2, n)) == 1


@given(measures, words)
def test_cylinders_nest_and_add_up(mu, w):
    assert cylinder_measure(mu, w + (0,)) + cylinder_measure(mu, w + (1,)) == cylinder_measure(mu, w)
    assert cylinder_measure(mu, w + (1,)) <= cylinder_measure(mu, w)


@given(st.sets(words, min_size=1, max_size=3), st.integers(1, 5), st.sampled_from(["left", "right"]))
def test_outer_approximation_contains_hole(ws, j, side):
    U = HoleSpec.of(*ws)
    n = U.depth
    j = min(j, n)
    outer = outer_j_approximation(U, j, side, FULL2)
    assert all(len(o) == j for o in outer)
    for x in enumerate_join(FULL2, n):
        if any(x[:len(w)] == w for w in U.words):
            # U sits inside the right union, T^(n-j) U inside the left one
            assert (x[:j] if side == "right" else x[n - j:]) in outer


@given(measures, st.sets(words, min_size=1, max_size=3))
def test_survival_is_monotone(mu, ws):
    U = HoleSpec.of(*ws)
    if len(U.words) == 2 and U.depth == 1:
        return
    S = survival_sequence(compile_hole(FULL2, mu, U), 12)
    assert S[0] == 1
    assert all(b <= a for a, b in zip(S, S[1:]))
    assert all(0 <= x <= 1 for x in S)


# odd parts of the denominators stay small so that binary periods stay short
rationals = st.builds(lambda k, m, odd: F(k % (odd << m), odd << m),
                      st.integers(0, 10 ** 6), st.integers(0, 12), st.sampled_from([1, 3, 5, 7, 9, 11, 13, 15]))
radii = st.builds(lambda k, m, odd: F(1 + k % ((odd << m) // 2 - 1), odd << m),
                  st.integers(0, 10 ** 6), st.integers(2, 12), st.sampled_from([1, 3, 5, 7]))


@given(rationals, radii, st.integers(1, 14))
def test_ball_sandwich_is_exact(z, r, n):
    assert ball_to_cylinders(Ball(z, r), n).verify()


@given(rationals, radii, st.integers(1, 10), probs)
def test_sandwich_masses_bracket_ball(z, r, n, q):
    mu = MeasureModel.bernoulli([q, 1 - q])
    pair = ball_to_cylinders(Ball(z, r), n)
    inner, outer = pair.masses(mu)
    assert inner <= ball_measure(Ball(z, r), mu) <= outer
    assert outer - inner <= 2 * max(q, 1 - q) ** n


@given(rationals, rationals, probs)
def test_coded_cdf_monotone(x, y, q):
    mu = MeasureModel.bernoulli([q, 1 - q])
    lo, hi = sorted((x, y))
    assert coded_cdf(lo, mu) <= coded_cdf(hi, mu)


@given(rationals, probs)
def test_coded_cdf_on_dyadic_cells(x, q):
    # the cell [j/2^n, (j+1)/2^n) carries the mass of its cylinder
    mu = MeasureModel.bernoulli([q, 1 - q])
    n = 6
    j = int(x * 2 ** n)
    word = tuple(int(b) for b in format(j, f"0{n}b"))
    assert coded_cdf(F(j + 1, 2 ** n), mu) - coded_cdf(F(j, 2 ** n), mu) == cylinder_measure(mu, word)
