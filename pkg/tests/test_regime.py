from collections import Counter

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from conftest import classify_oracle, make_panel
from macrostate.errors import DimensionError, InsufficientDataError
from macrostate.regime import (
    StateSeries,
    TransitionMatrix,
    classify_panel,
    classify_states,
    simulate_chain,
    state_integral,
    transition_matrix,
)


def series(states, mask=None):
    s = np.asarray(states, dtype=np.int8)
    ok = np.ones(len(s), bool) if mask is None else np.asarray(mask, bool)
    return StateSeries("X", np.where(ok, s, 0).astype(np.int8), ok, 0.0, 0.0, 0.0)


# gdp [10, 10, 10, 0]: mean 7.5, std 4.33, threshold 3.17
GDP = [10.0, 10.0, 10.0, 0.0]


def test_branch_ascending():
    assert classify_states(GDP, [0.02, 1, 1, 1]).states[0] == 1


def test_branch_stagflation():
    assert classify_states(GDP, [1, 1, 1, 0.02]).states[3] == 3


def test_zero_inflation_is_descending():
    assert classify_states(GDP, [0.0, 1, 1, 1]).states[0] == 2


def test_hand_example():
    s = classify_states([10, 10, 0, 10], [1, -1, 1, -1])
    assert s.states.tolist() == [1, 2, 3, 2]
    assert s.mean_gdp == 7.5
    assert s.std_gdp == pytest.approx(4.330127018922194)
    assert s.threshold == s.mean_gdp - s.std_gdp


def test_threshold_equality_goes_below():
    # gdp [0, 2]: mean 1, std 1, threshold 0 -> g = 0 is not above
    s = classify_states([0.0, 2.0], [1.0, -1.0])
    assert s.threshold == 0.0
    assert s.states.tolist() == [3, 2]


def test_masking():
    s = classify_states([1.0, np.nan, 3.0, 4.0], [1.0, 1.0, np.nan, -1.0])
    assert s.available.tolist() == [True, False, False, True]
    assert s.states.tolist()[1:3] == [0, 0]
    assert s.mean_gdp == pytest.approx(8 / 3)


def test_classify_errors():
    with pytest.raises(DimensionError):
        classify_states([1, 2, 3], [1, 2])
    with pytest.raises(InsufficientDataError):
        classify_states([1.0, np.nan, np.nan], [1, 1, 1])
    with pytest.raises(InsufficientDataError):
        classify_states([1.0], [1.0])


def test_matches_oracle_with_gaps(rng):
    for _ in range(50):
        n = int(rng.integers(2, 80))
        g = rng.normal(2, 2, n)
        c = rng.normal(0.5, 1, n)
        c[rng.random(n) < 0.1] = 0.0
        g[rng.random(n) < 0.1] = np.nan
        c[rng.random(n) < 0.1] = np.nan
        if np.isfinite(g).sum() < 2:
            continue
        assert classify_states(g, c).states.tolist() == classify_oracle(g.tolist(), c.tolist())


finite = st.floats(-50, 50, allow_nan=False)


@given(st.lists(st.tuples(finite, finite), min_size=2, max_size=40),
       st.floats(0.01, 100), st.floats(-100, 100))
@settings(max_examples=150, deadline=None)
def test_affine_invariance(pairs, a, b):
    g = np.array([p[0] for p in pairs])
    c = np.array([p[1] for p in pairs])
    base = classify_states(g, c)
    # equality cases are decided by rounding, not by the rule
    assume(np.all(np.abs(g - base.threshold) > 1e-6 * (1 + np.abs(g).max())))
    assert classify_states(a * g + b, c).states.tolist() == base.states.tolist()


def test_classify_panel():
    p = make_panel({
        ("A", "cpi"): [1, -1, 1, -1], ("A", "gdp"): [10, 10, 0, 10],
        ("B", "gdp"): [1, 2, 3, 4], ("GOLD", "price"): [1, 2, 3, 4],
    })
    out = classify_panel(p)
    assert [s.country for s in out] == ["A"]
    assert out[0].states.tolist() == [1, 2, 3, 2]
    assert "date,state,masked\n1960-01,1,false\n" in out[0].to_csv()


# integral


@pytest.mark.parametrize("states,expect", [([1] * 7, 1.0), ([1, 2, 3, 4], 2.5), ([1, 1, 1, 3], 1.5)])
def test_integral_examples(states, expect):
    assert state_integral(series(states)).value == expect


def test_integral_ignores_masked():
    assert state_integral(series([1, 4, 4], [True, False, True])).value == 2.5


def test_integral_all_masked():
    with pytest.raises(InsufficientDataError):
        state_integral(series([1, 1], [False, False]))


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_integral_constant(k):
    assert state_integral(series([k] * 13)).value == k


# transitions


def enumerate_counts(states, mask):
    c = Counter()
    for t in range(len(states) - 1):
        if mask[t] and mask[t + 1]:
            c[(states[t], states[t + 1])] += 1
    return c


def test_transition_example():
    tm = transition_matrix(series([1, 1, 2]))
    assert tm.probs[0].tolist() == [0.5, 0.5, 0.0, 0.0]
    assert tm.visited.tolist() == [True, False, False, False]
    assert tm.probs[1].tolist() == [0.0] * 4


def test_transition_constant():
    tm = transition_matrix(series([3, 3, 3]))
    assert tm.probs[2].tolist() == [0, 0, 1, 0]
    assert tm.visited.tolist() == [False, False, True, False]


def test_single_contraction_then_stagflation():
    tm = transition_matrix(series([1, 1, 3, 1, 1, 4, 3]))
    assert tm.probs[3].tolist() == [0.0, 0.0, 1.0, 0.0]


def test_gap_breaks_adjacency():
    tm = transition_matrix(series([1, 2, 3, 4], [True, True, False, True]))
    assert tm.counts.sum() == 1
    assert tm.counts[0, 1] == 1


def test_transition_insufficient():
    with pytest.raises(InsufficientDataError):
        transition_matrix(series([1, 2, 3], [True, False, True]))


def test_transition_matches_enumeration(rng):
    for _ in range(100):
        n = int(rng.integers(2, 60))
        st_ = rng.integers(1, 5, n)
        mask = rng.random(n) > 0.15
        if not (mask[:-1] & mask[1:]).any():
            continue
        tm = transition_matrix(series(st_, mask))
        expect = enumerate_counts(st_.tolist(), mask.tolist())
        for j in range(4):
            for k in range(4):
                assert tm.counts[j, k] == expect.get((j + 1, k + 1), 0)
            if tm.visited[j]:
                assert abs(tm.probs[j].sum() - 1) <= 1e-12
                np.testing.assert_allclose(tm.probs[j], tm.counts[j] / tm.counts[j].sum())


def test_transition_roundtrip_json():
    tm = transition_matrix(series([1, 2, 2, 4, 3]))
    back = TransitionMatrix.from_dict(tm.to_dict())
    assert back.probs.tolist() == tm.probs.tolist()
    assert back.visited.tolist() == tm.visited.tolist()


def test_chain_reestimation():
    p = np.array([[0.9, 0.05, 0.04, 0.01], [0.3, 0.6, 0.05, 0.05], [0.2, 0.1, 0.6, 0.1], [0.1, 0.1, 0.3, 0.5]])
    path = simulate_chain(p, 100_000, np.random.default_rng(7))
    tm = transition_matrix(series(path))
    assert tm.visited.all()
    assert np.abs(tm.probs - p).sum(axis=1).max() < 0.05
