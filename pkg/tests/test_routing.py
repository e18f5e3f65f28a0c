"""Tests for top-k selection and loss-free balancing."""

import numpy as np
import pytest

from flylora.core.errors import DimensionError, InvalidParameterError
from flylora.core.routing import (
    BalanceState,
    SelectionMode,
    coefficient_of_variation,
    record_assignments,
    select_topk,
    select_topk_batch,
    simulate_balanced_routing,
    update_balance_bias,
)
from flylora.core.linalg import SeededStream

SCORES = [0.1, -0.9, 0.5, 0.3]


def test_signed_selection():
    decision = select_topk(SCORES, np.zeros(4), 2, 'signed')
    assert set(decision.selected) == {2, 3}
    assert decision.selected == (2, 3)


def test_magnitude_selection():
    decision = select_topk(SCORES, np.zeros(4), 2, SelectionMode.MAGNITUDE)
    assert set(decision.selected) == {1, 2}


def test_k_equals_r_selects_everything():
    decision = select_topk(SCORES, np.zeros(4), 4)
    assert sorted(decision.selected) == [0, 1, 2, 3]
    np.testing.assert_array_equal(decision.mask, np.ones(4))


def test_bias_dominates():
    decision = select_topk([0.1, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0], 1)
    assert decision.selected == (0,)


def test_bias_changes_selection_but_not_scores():
    decision = select_topk([1.0, 0.5], [0.0, 1.0], 1)
    assert decision.selected == (1,)
    np.testing.assert_array_equal(decision.scores, [1.0, 0.5])


def test_ties_go_to_lowest_index():
    assert select_topk([1.0, 1.0, 1.0], np.zeros(3), 2).selected == (0, 1)


@pytest.mark.parametrize('k', [0, 5])
def test_k_out_of_range(k):
    with pytest.raises(InvalidParameterError):
        select_topk(SCORES, np.zeros(4), k)


def test_bias_length_mismatch():
    with pytest.raises(DimensionError):
        select_topk(SCORES, np.zeros(3), 2)


def test_unknown_mode():
    with pytest.raises(InvalidParameterError):
        select_topk(SCORES, np.zeros(4), 2, 'loudest')


def test_batch_matches_single(rng):
    scores = rng.standard_normal((20, 8))
    bias = rng.standard_normal(8) * 0.1
    for mode in SelectionMode:
        indices, mask = select_topk_batch(scores, bias, 3, mode)
        assert mask.sum(axis=1).tolist() == [3.0] * 20
        for row, selected in zip(scores, indices):
            assert tuple(selected) == select_topk(row, bias, 3, mode).selected


def test_update_example():
    state = BalanceState(r=2, k=1, rate=0.001, counts=[10, 2], expected=[6.0, 6.0])
    update_balance_bias(state)
    np.testing.assert_allclose(state.bias, [-0.001, 0.001])
    np.testing.assert_array_equal(state.counts, [0, 0])
    assert state.tokens == 0


def test_balanced_window_leaves_bias():
    state = BalanceState(r=2, k=1, rate=0.001, counts=[6, 6], expected=[6.0, 6.0])
    state.update()
    np.testing.assert_array_equal(state.bias, [0.0, 0.0])


def test_zero_rate_disables_updates():
    state = BalanceState(r=2, k=1, rate=0.0, counts=[10, 2], expected=[6.0, 6.0])
    assert not state.enabled
    state.update()
    np.testing.assert_array_equal(state.bias, [0.0, 0.0])


def test_negative_rate_rejected():
    with pytest.raises(InvalidParameterError):
        BalanceState(r=4, k=2, rate=-1e-3)


def test_record_single_decision():
    state = BalanceState(r=4, k=2)
    record_assignments(state, select_topk(SCORES, np.zeros(4), 2))
    np.testing.assert_array_equal(state.counts, [0, 0, 1, 1])
    np.testing.assert_allclose(state.expected, [0.5] * 4)


def test_record_rejects_other_width():
    state = BalanceState(r=4, k=2)
    with pytest.raises(DimensionError):
        state.record(select_topk([1.0, 2.0, 3.0], np.zeros(3), 2))


def test_counts_are_conserved(rng):
    state = BalanceState(r=8, k=3)
    for _ in range(50):
        state.record(select_topk(rng.standard_normal(8), state.bias, 3))
    assert state.counts.sum() == 50 * 3


def test_uniform_scores_follow_binomial():
    scores = SeededStream(11, 1).generator().standard_normal((10_000, 32))
    _, mask = select_topk_batch(scores, np.zeros(32), 8)
    state = BalanceState(r=32, k=8).record_mask(mask)
    tolerance = 5 * np.sqrt(2500 * (1 - 1 / 4))
    assert np.all(np.abs(state.counts - 2500) <= tolerance)


def test_starved_rank_bias_climbs_monotonically():
    simulation = simulate_balanced_routing(
        r=4, k=1, windows=100, tokens_per_window=16, rate=1e-3,
        score_offsets=[0.0, 0.0, 0.0, -100.0],
    )
    starved = [bias[3] for bias in simulation.bias_trace]
    np.testing.assert_allclose(starved, 1e-3 * np.arange(1, 101))
    assert simulation.counts[3] == 0


def test_coefficient_of_variation():
    assert coefficient_of_variation([5, 5, 5]) == 0.0
    assert coefficient_of_variation([0, 0]) == 0.0
    assert coefficient_of_variation([1, 3]) == pytest.approx(0.5)


def test_snapshot_is_plain():
    snapshot = BalanceState(r=2, k=1, rate=0.5).snapshot()
    assert snapshot == {'r': 2, 'k': 1, 'rate': 0.5, 'bias': [0.0, 0.0]}


@pytest.mark.slow
def test_balancing_lowers_spread():
    wins = 0
    for seed in range(5):
        balanced = simulate_balanced_routing(r=16, k=4, rate=1e-3, seed=seed)
        unbalanced = simulate_balanced_routing(r=16, k=4, rate=0.0, seed=seed)
        assert np.all(unbalanced.bias_trace[-1] == 0.0)
        wins += balanced.cv < unbalanced.cv
    assert wins >= 4


@pytest.mark.parametrize('mode', ['signed', 'magnitude'])
@pytest.mark.parametrize('scale', [1e-3, 2.5, 1e6])
def test_selection_is_scale_invariant(mode, scale):
    rng = SeededStream(5, 0).generator()
    scores = rng.standard_normal(16)
    bias = 0.3 * rng.standard_normal(16)
    reference = select_topk(scores, bias, 4, mode).selected
    scaled = select_topk(scale * scores, scale * bias, 4, mode).selected
    assert set(scaled) == set(reference)
