import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyadic_shifts.grid import ConfigurationError, Cube, Grid
from dyadic_shifts.weights import (
    GridFunction,
    Weight,
    ainfty,
    ainfty_with_cube,
    ap_characteristic,
    ap_two_weight,
    conjugate,
    dual_weight,
    lebesgue,
    lp_norm,
    measure,
    weighted_maximal,
)

from oracles import ainfty_brute, ap_brute, maximal_brute

G2 = Grid(1, 2)
STEP = Weight(G2, [2, 2, 1, 1])

positive_cells = st.lists(st.floats(0.01, 100.0), min_size=16, max_size=16)


def test_measure_examples():
    assert measure(lebesgue(G2), Cube(1, (0,))) == 0.5
    assert measure(STEP, Cube(1, (1,))) == 0.5
    assert STEP.measure(G2.root) == 1.5


def test_weight_rejects_nonpositive():
    with pytest.raises(ConfigurationError):
        Weight(G2, [1, 0, 1, 1])
    with pytest.raises(ConfigurationError):
        Weight(G2, [1, np.nan, 1, 1])


def test_conjugate():
    assert conjugate(2) == 2
    assert conjugate(3) == 1.5
    for bad in (1, 0.5, math.inf):
        with pytest.raises(ConfigurationError):
            conjugate(bad)


def test_dual_weight_example():
    np.testing.assert_allclose(dual_weight(STEP, 2).values, [0.5, 0.5, 1, 1])


def test_maximal_examples():
    f = GridFunction(G2, [1, 1, 0, 0])
    np.testing.assert_allclose(weighted_maximal(f).values, [1, 1, 0.5, 0.5], atol=1e-15)
    np.testing.assert_allclose(weighted_maximal(f, STEP).values, [1, 1, 2 / 3, 2 / 3], atol=1e-15)
    np.testing.assert_allclose(weighted_maximal(GridFunction(G2, [-3] * 4), STEP).values, 3)


def test_maximal_restricted_is_zero_outside():
    f = GridFunction(G2, [1, 2, 3, 4])
    out = weighted_maximal(f, restrict=Cube(1, (1,))).values
    np.testing.assert_allclose(out, [0, 0, 3.5, 4])


def test_ap_worked_value():
    value, Q = ap_two_weight(STEP, dual_weight(STEP, 2), 2)
    assert abs(value - 9 / 8) <= 1e-12
    assert Q == G2.root


def test_ainfty_worked_value():
    value, Q = ainfty_with_cube(STEP)
    assert abs(value - 7 / 6) <= 1e-12
    assert Q == G2.root
    assert ainfty(Weight(G2, [3.0] * 4)) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize("p", [1.5, 2, 3])
def test_lebesgue_characteristics_are_one(p):
    one = lebesgue(Grid(2, 3))
    assert ap_two_weight(one, one, p) == (1.0, one.grid.root)
    assert ainfty(one) == 1.0
    assert lp_norm(one, one, p) == 1.0


def test_lp_norm_example():
    assert lp_norm(GridFunction(G2, [1] * 4), lebesgue(G2), 3) == 1.0
    assert lp_norm(GridFunction(G2, [2, 0, 0, 0]), None, 2) == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(positive_cells, positive_cells, st.sampled_from([1.5, 2.0, 3.0]))
def test_ap_matches_brute_force(wv, sv, p):
    g = Grid(1, 4)
    w, s = Weight(g, wv), Weight(g, sv)
    assert ap_two_weight(w, s, p)[0] == pytest.approx(ap_brute(np.array(wv), np.array(sv), p), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(positive_cells)
def test_ainfty_matches_brute_force(wv):
    w = Weight(Grid(1, 4), wv)
    assert ainfty(w) == pytest.approx(ainfty_brute(np.array(wv)), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=16, max_size=16), positive_cells)
def test_maximal_matches_brute_force(fv, wv):
    g = Grid(1, 4)
    out = weighted_maximal(GridFunction(g, fv), Weight(g, wv)).values
    np.testing.assert_allclose(out, maximal_brute(np.array(fv), np.array(wv)), rtol=1e-12, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(positive_cells, st.sampled_from([1.5, 2.0, 3.0]), st.floats(0.1, 10))
def test_characteristic_properties(wv, p, c):
    g = Grid(2, 2)
    w = Weight(g, wv)
    ap = ap_characteristic(w, p)[0]
    assert ap >= 1 - 1e-12
    assert ainfty(w) >= 1 - 1e-12
    # A_p is invariant under scaling w by a constant
    assert ap_characteristic(Weight(g, np.array(wv) * c), p)[0] == pytest.approx(ap, rel=1e-10)
    # the dual of the dual is the original weight
    np.testing.assert_allclose(dual_weight(dual_weight(w, p), conjugate(p)).values, w.values, rtol=1e-10)


@settings(max_examples=25, deadline=None)
@given(positive_cells, st.sampled_from([1.5, 2.0, 3.0]))
def test_ainfty_bounded_by_multiple_of_ap(wv, p):
    w = Weight(Grid(1, 4), wv)
    # A_inf <= c [w]_Ap on this grid; c = 4 is comfortably above what is observed
    assert ainfty(w) <= 4 * ap_characteristic(w, p)[0]
