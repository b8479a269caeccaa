import itertools

import pytest

from hitlab.symbolic import (
    CapExceededError,
    HoleSpec,
    PointSpec,
    SymbolicSystem,
    cylinder_around,
    enumerate_join,
    intersected_cylinder,
    outer_j_approximation,
    parse_word,
    period_status,
    prime_period,
)


def w(s):
    return parse_word(s)


class TestSystem:
    def test_join_full_shift(self, full2):
        assert enumerate_join(full2, 2) == [w("00"), w("01"), w("10"), w("11")]
        assert enumerate_join(full2, 1) == [w("0"), w("1")]

    def test_join_golden_mean(self, golden):
        assert enumerate_join(golden, 2) == [w("00"), w("01"), w("10")]

    def test_join_cap(self, full2):
        with pytest.raises(CapExceededError):
            enumerate_join(full2, 12, cap=1000)

    def test_reducible_rejected(self):
        with pytest.raises(ValueError):
            SymbolicSystem(2, ((1, 1), (0, 1)))

    def test_periodic_matrix_rejected(self):
        with pytest.raises(ValueError):
            SymbolicSystem(2, ((0, 1), (1, 0)))

    def test_inadmissible_word(self, golden):
        assert not golden.is_admissible(w("011"))
        with pytest.raises(ValueError):
            HoleSpec.of("11", system=golden)


class TestPoints:
    @pytest.mark.parametrize(
        "z, n, expected",
        [
            (PointSpec.periodic([0]), 3, "000"),
            (PointSpec.periodic([0, 1]), 3, "010"),
            (PointSpec.stream("thue-morse"), 4, "0110"),
        ],
    )
    def test_cylinder_around(self, z, n, expected):
        assert cylinder_around(z, n) == w(expected)

    def test_prime_period(self):
        assert prime_period(PointSpec.periodic([0]), 8) == 1
        assert prime_period(PointSpec.periodic([0, 1]), 8) == 2
        assert prime_period(PointSpec.stream("thue-morse"), 64) is None

    def test_period_canonicalized(self):
        z = PointSpec.periodic([0, 1, 0, 1])
        assert z.period == (0, 1)
        assert prime_period(z, 8) == 2

    def test_preperiodic_is_not_periodic(self):
        z = PointSpec.periodic([0], preperiod=[1])
        assert prime_period(z, 8) is None
        assert period_status(z, 8) == "preperiodic"

    def test_thue_morse_status(self):
        assert period_status(PointSpec.stream("thue-morse"), 64) == "no-period-within-bound"

    def test_iid_stream_prefix_consistent(self):
        z = PointSpec.stream("iid-uniform", seed=5)
        long = z.prefix(9000)
        assert z.prefix(100) == long[:100]
        assert PointSpec.stream("iid-uniform", seed=5).prefix(5000) == long[:5000]

    def test_iid_stream_respects_sft(self, golden):
        z = PointSpec.stream("iid-uniform", seed=3)
        assert golden.is_admissible(z.prefix(500, golden))

    @pytest.mark.parametrize(
        "z, n, p, u, expected",
        [
            (PointSpec.periodic([0]), 2, 1, 1, "000"),
            (PointSpec.periodic([0]), 2, 1, 0, "00"),
            (PointSpec.periodic([0, 1]), 3, 2, 1, "01010"),
        ],
    )
    def test_intersected_cylinder(self, z, n, p, u, expected):
        assert intersected_cylinder(z, n, p, u) == w(expected)

    def test_intersected_cylinder_bruteforce(self, full2):
        z, n, p, u = PointSpec.periodic([0, 1]), 3, 2, 1
        base = z.prefix(n)
        L = n + u * p
        inside = [x for x in itertools.product((0, 1), repeat=L) if x[:n] == base and x[p:p + n] == base]
        assert inside == [intersected_cylinder(z, n, p, u)]


class TestHoles:
    def test_prefix_free_normalization(self):
        U = HoleSpec.of("0", "01", "11")
        assert U.words == frozenset({w("0"), w("11")})
        assert U.depth == 2

    @pytest.mark.parametrize("side", ["left", "right"])
    def test_outer_full_depth(self, full2, side):
        U = HoleSpec.of("0101")
        assert outer_j_approximation(U, 4, side, full2) == {w("0101")}

    def test_outer_right(self, full2):
        assert outer_j_approximation(HoleSpec.of("0101"), 2, "right", full2) == {w("01")}

    def test_outer_left(self, full2):
        assert outer_j_approximation(HoleSpec.of("0101"), 2, "left", full2) == {w("01")}

    def test_outer_left_bruteforce(self, full2):
        # T^2 [0101] = [01]: check via membership over words of length 6
        U = HoleSpec.of("0101")
        image = {x[2:4] for x in itertools.product((0, 1), repeat=6) if x[:4] == w("0101")}
        assert image == outer_j_approximation(U, 2, "left", full2)
