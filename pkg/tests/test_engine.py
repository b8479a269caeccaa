import json
import math
from fractions import Fraction as F

import pytest

from hitlab.engine import (
    DegenerateHoleError,
    NonConvergenceError,
    PatternAutomaton,
    compile_hole,
    escape_rate,
    escape_records_json,
    log_survival,
    monte_carlo_survival,
    product_relation_residual,
    sup_distance,
    survival,
    survival_curve,
    survival_sequence,
)
from hitlab.symbolic import CapExceededError, HoleSpec, SymbolicSystem

from oracles import brute_survival


def chain(system, mu, *words):
    return compile_hole(system, mu, HoleSpec.of(*words, system=system))


class TestExactSurvival:
    def test_single_symbol_hole(self, full2, b5):
        c = chain(full2, b5, "0")
        assert c.size == 1
        assert survival_sequence(c, 6) == [F(1, 2 ** t) for t in range(7)]

    def test_avoid_00_fair(self, full2, b5):
        assert survival(chain(full2, b5, "00"), 3) == F(1, 2)

    def test_avoid_0_biased(self, full2, b3):
        assert survival(chain(full2, b3, "0"), 3) == F(343, 1000)

    def test_inclusion_exclusion(self, full2, b3):
        assert survival(chain(full2, b3, "00"), 2) == F(847, 1000)

    def test_time_zero(self, full2, markov):
        assert survival(chain(full2, markov, "01"), 0) == 1

    def test_mixed_depth_against_bruteforce(self, full2, markov):
        U = HoleSpec.of("011", "10101")
        exact = survival_sequence(compile_hole(full2, markov, U), 12)
        assert exact == brute_survival(markov, sorted(U.words), 12)

    def test_golden_mean_shift(self, golden):
        from hitlab.measures import MeasureModel

        mu = MeasureModel.markov([[F(1, 2), F(1, 2)], [F(1), F(0)]], system=golden)
        c = compile_hole(golden, mu, HoleSpec.of("00", system=golden))
        # avoiding 00 and 11 leaves only the alternating orbit
        assert survival(c, 5) == mu.stationary()[0] * F(1, 2) ** 3 + mu.stationary()[1] * F(1, 2) ** 2

    def test_degenerate_hole(self, full2, b5):
        with pytest.raises(DegenerateHoleError):
            chain(full2, b5, "0", "1")

    def test_state_cap(self, full2, b5):
        with pytest.raises(CapExceededError):
            compile_hole(full2, b5.to_float(), HoleSpec.of("0" * 12), state_cap=5)


class TestEscapeRate:
    def test_geometric(self, full2, b3):
        er = escape_rate(chain(full2, b3.to_float(), "0"))
        assert er.rho == pytest.approx(-math.log(0.7), abs=1e-10)

    def test_avoid_00(self, full2, b5):
        er = escape_rate(chain(full2, b5.to_float(), "00"))
        assert er.rho == pytest.approx(-math.log((1 + math.sqrt(5)) / 4), abs=1e-8)
        assert er.slope_check

    def test_tiny_hole(self, full2, b3):
        er = escape_rate(chain(full2, b3.to_float(), "0" * 14))
        assert er.rho / er.hole_measure == pytest.approx(0.7, abs=1e-3)

    def test_reducible_chain_reports_nonconvergence(self, full2, b5):
        # avoiding 01 leaves 1..10..0: a Jordan block, power iteration crawls
        with pytest.raises(NonConvergenceError):
            escape_rate(chain(full2, b5.to_float(), "01"), max_iter=2000)

    def test_json_record(self, full2, b3):
        rec = json.loads(escape_records_json([escape_rate(chain(full2, b3.to_float(), "0"))]))
        assert {"hole", "mu(U)", "rho", "lambda", "iterations"} <= set(rec[0])


class TestLogSurvival:
    @pytest.mark.parametrize("mname", ["b5", "b3", "markov"])
    @pytest.mark.parametrize("word", ["0", "00", "010"])
    def test_increments_converge(self, full2, mname, word, request):
        mu = request.getfixturevalue(mname).to_float()
        c = chain(full2, mu, word)
        rho = escape_rate(c).rho
        assert abs(log_survival(c, 201) - log_survival(c, 200) + rho) <= 1e-6

    def test_matches_exact(self, full2, markov):
        c_exact = chain(full2, markov, "0110")
        c_float = chain(full2, markov.to_float(), "0110")
        assert log_survival(c_float, 60) == pytest.approx(math.log(survival(c_exact, 60)), rel=1e-12)

    def test_huge_horizon(self, full2, b3):
        c = chain(full2, b3.to_float(), "0")
        assert log_survival(c, 10 ** 7) == pytest.approx(10 ** 7 * math.log(0.7), rel=1e-9)

    def test_curve_csv(self, full2, b5, tmp_path):
        curve = survival_curve(chain(full2, b5, "00"), 3)
        curve.write_csv(tmp_path / "s.csv")
        rows = (tmp_path / "s.csv").read_text().splitlines()
        assert rows[0] == "t,survival,log_survival"
        assert rows[4].startswith("3,0.5,")


class TestAutomaton:
    def test_first_hit(self):
        aut = PatternAutomaton.build({(0, 1, 1), (1, 1)}, 2)
        assert aut.first_hit((0, 0, 1, 1)) == 2
        assert aut.first_hit((0, 1, 1)) == 1
        assert aut.first_hit((0, 0, 0)) is None


class TestMonteCarlo:
    def test_single_trial_is_step(self, full2, b5):
        emp = monte_carlo_survival(full2, b5, HoleSpec.of("00"), 20, 1, master_seed=3)
        assert set(emp.survival) <= {0.0, 1.0}
        assert all(a >= b for a, b in zip(emp.survival, emp.survival[1:]))

    def test_independent_of_workers_and_blocks(self, full2, markov):
        U = HoleSpec.of("01")
        a = monte_carlo_survival(full2, markov, U, 15, 3000, master_seed=11)
        b = monte_carlo_survival(full2, markov, U, 15, 3000, master_seed=11, workers=3, block=500)
        assert a.survival == b.survival

    def test_close_to_exact(self, full2, b3):
        U = HoleSpec.of("0")
        emp = monte_carlo_survival(full2, b3, U, 20, 10_000, master_seed=1)
        assert sup_distance(emp, survival_curve(compile_hole(full2, b3, U), 20)) <= 3 / math.sqrt(10_000)


class TestProductRelation:
    def test_independent_hole_exact_zero(self, full2, b3):
        rep = product_relation_residual(chain(full2, b3, "0"), b3, s=8, k=3, Delta=2, t=12)
        assert rep.product_lhs == 0 and rep.product_holds

    def test_fair_00(self, full2, b5):
        rep = product_relation_residual(chain(full2, b5, "00"), b5, s=20, k=3, Delta=4, t=40)
        assert rep.product_holds and rep.product_rhs - rep.product_lhs > 0

    def test_markov_kfold(self, full2, markov):
        rep = product_relation_residual(chain(full2, markov, "00"), markov, s=24, k=5, Delta=4)
        assert rep.product_holds and rep.kfold_holds

    def test_preconditions(self, full2, b5):
        c = chain(full2, b5, "00")
        with pytest.raises(ValueError):
            product_relation_residual(c, b5, s=8, k=3, Delta=4)
        with pytest.raises(ValueError):
            product_relation_residual(c, b5, s=9, k=3, Delta=2)
