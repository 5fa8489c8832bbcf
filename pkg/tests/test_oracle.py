import math
from fractions import Fraction

import numpy as np
import pytest

from ctmkit import (
    DistanceToMeanMeasure,
    IdentityMeasure,
    PointMassModel,
    TableModel,
    bayes_kelly_bettor,
    bk_factor_sequences,
    cell_tree,
    cell_volume_closure,
    changepoint_model,
    evariable_expectation,
    expected_log_wealth,
    iid_model,
    initial_state,
    eprocess_step,
    markov_model,
    pushforward_kl,
    sample_betting_family,
)


class TestCellTree:
    def test_single_step(self):
        cells = cell_tree(iid_model([0.5, 0.5]), IdentityMeasure(), 1)
        assert len(cells) == 1
        cell = cells[0]
        assert cell.volume == 1.0
        assert cell.q_mass == pytest.approx(1.0, abs=1e-12)
        assert cell.bk_heights == (1.0,)

    def test_two_step_volumes(self):
        for model in (iid_model([0.5, 0.5]), changepoint_model(0.5, 0.9, 0.2)):
            cells = cell_tree(model, IdentityMeasure(), 2)
            assert len(cells) == 2
            assert [c.volume for c in cells] == [0.5, 0.5]

    def test_three_step_closure(self):
        cells = cell_tree(markov_model(0.1, 0.1), IdentityMeasure(), 3)
        assert len(cells) == 6
        assert all(c.volume == pytest.approx(1 / 6, abs=1e-16) for c in cells)
        assert math.fsum(c.q_mass for c in cells) == pytest.approx(1.0, abs=1e-10)
        assert cell_volume_closure(cells)

    def test_volume_closure_exact_rational(self):
        cells = cell_tree(changepoint_model(0.5, 0.9, 0.2), IdentityMeasure(), 5)
        total = sum(Fraction(1, math.factorial(5)) for _ in cells)
        assert total == 1

    def test_horizon_guard(self):
        with pytest.raises(ValueError):
            cell_tree(iid_model([0.5, 0.5]), IdentityMeasure(), 9)
        with pytest.raises(ValueError):
            cell_tree(iid_model([0.5, 0.5]), IdentityMeasure(), 0)

    def test_cells_sorted_by_interval_path(self):
        cells = cell_tree(markov_model(0.3, 0.2), IdentityMeasure(), 4)
        paths = [c.intervals for c in cells]
        assert paths == sorted(paths)


class TestPushforwardKl:
    def test_null_alternative_gives_zero(self):
        cells = cell_tree(iid_model([0.5, 0.5]), IdentityMeasure(), 4)
        assert pushforward_kl(cells) == pytest.approx(0.0, abs=1e-12)
        # Bayes-Kelly never bets: every height is 1
        for factors in bk_factor_sequences(cells):
            assert factors == pytest.approx([1.0] * 4, abs=1e-12)

    def test_point_mass_log_two(self):
        cells = cell_tree(PointMassModel([1, 0], alphabet_size=2), IdentityMeasure(), 2)
        assert pushforward_kl(cells) == pytest.approx(math.log(2), abs=1e-14)

    def test_nonnegative_on_random_models(self):
        rng = np.random.default_rng(41)
        for _ in range(20):
            model = TableModel.random(int(rng.integers(2, 4)),
                                      depth=int(rng.integers(1, 3)), rng=rng)
            cells = cell_tree(model, IdentityMeasure(), 3)
            assert pushforward_kl(cells) >= -1e-15


class TestExpectedLogWealth:
    def test_trivial_heights_zero(self):
        cells = cell_tree(markov_model(0.1, 0.1), IdentityMeasure(), 3)
        flat = [[1.0] * len(c.intervals) for c in cells]
        assert expected_log_wealth(cells, flat) == 0.0

    def test_bayes_kelly_attains_kl(self):
        cells = cell_tree(changepoint_model(0.5, 0.9, 0.2), IdentityMeasure(), 5)
        value = expected_log_wealth(cells, bk_factor_sequences(cells))
        assert value == pytest.approx(pushforward_kl(cells), abs=1e-9)

    def test_rivals_never_beat_bayes_kelly(self):
        cells = cell_tree(markov_model(0.1, 0.1), IdentityMeasure(), 3)
        best = expected_log_wealth(cells, bk_factor_sequences(cells))
        rng = np.random.default_rng(42)
        for _ in range(100):
            family = sample_betting_family(cells, rng)
            assert expected_log_wealth(cells, family) <= best + 1e-12

    def test_zero_factor_on_charged_cell_signals_minus_inf(self):
        cells = cell_tree(markov_model(0.1, 0.1), IdentityMeasure(), 2)
        family = [[1.0, 0.0] for _ in cells]
        assert expected_log_wealth(cells, family) == -math.inf

    def test_length_mismatch_rejected(self):
        cells = cell_tree(markov_model(0.1, 0.1), IdentityMeasure(), 2)
        with pytest.raises(ValueError):
            expected_log_wealth(cells, [[1.0]] * (len(cells) - 1))


class TestSampledFamilies:
    def test_families_are_filtration_adapted_densities(self):
        cells = cell_tree(changepoint_model(0.5, 0.9, 0.2), IdentityMeasure(), 4)
        rng = np.random.default_rng(43)
        family = sample_betting_family(cells, rng)
        by_history = {}
        for cell, factors in zip(cells, family):
            assert len(factors) == 4
            for n in range(1, 5):
                key = cell.intervals[: n - 1]
                by_history.setdefault((n, key), {})[cell.intervals[n - 1]] = factors[n - 1]
        for (n, _), heights in by_history.items():
            # one height per interval, normalized to integrate to 1
            assert set(heights) == set(range(n))
            assert math.fsum(heights.values()) / n == pytest.approx(1.0, abs=1e-12)


class TestEVariableExpectation:
    def test_constant_statistic(self):
        for theta in (0.0, 0.3, 1.0):
            assert evariable_expectation(lambda bits: 1.0, theta, 6) == pytest.approx(
                1.0, abs=1e-12
            )

    def test_fair_bet_on_first_bit(self):
        got = evariable_expectation(lambda bits: 2.0 * bits[0], 0.5, 4)
        assert got == pytest.approx(1.0, abs=1e-14)

    def test_eprocess_statistic_is_evariable(self):
        model = iid_model([0.5, 0.5])

        def statistic(bits):
            state = initial_state()
            for z in bits:
                state = eprocess_step(state, z, model)
            return state.value

        got = evariable_expectation(statistic, 0.5, 10)
        assert got <= 1.0 + 1e-12

    def test_guards(self):
        with pytest.raises(ValueError):
            evariable_expectation(lambda bits: 1.0, 0.5, 21)
        with pytest.raises(ValueError):
            evariable_expectation(lambda bits: 1.0, 1.5, 3)


class TestEngineAgreement:
    def test_heights_and_weights_along_every_cell(self):
        model = changepoint_model(0.5, 0.9, 0.2)
        measure = IdentityMeasure()
        cells = cell_tree(model, measure, 4, keep_weights=True)
        for cell in cells:
            bettor = bayes_kelly_bettor(model, measure, collapse="never")
            for n, (idx, height) in enumerate(zip(cell.intervals, cell.bk_heights), 1):
                mid = (idx + 0.5) / n
                assert bettor.next_density().evaluate(mid) == pytest.approx(
                    height, abs=1e-12
                )
                bettor.update(mid)
            engine = bettor.hypothesis_set.as_dict()
            assert set(engine) == set(cell.final_weights)
            for prefix, weight in cell.final_weights.items():
                assert engine[prefix] == pytest.approx(weight, abs=1e-12)

    def test_factor_products_telescope_to_cell_mass(self):
        model = markov_model(0.1, 0.1)
        cells = cell_tree(model, IdentityMeasure(), 4)
        for cell, factors in zip(cells, bk_factor_sequences(cells)):
            assert math.prod(factors) == pytest.approx(
                math.factorial(4) * cell.q_mass, rel=1e-10, abs=1e-12
            )
