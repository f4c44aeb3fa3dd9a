import pytest

from spherelab.errors import BadBracket
from spherelab.ivp import DEFAULT_CONFIG
from spherelab.threshold import find_T

T_REFERENCE = 0.57735


def test_fine_bisection():
    res = find_T(tol=1e-5)
    assert res.width <= 1e-5
    assert res.t_estimate == pytest.approx(T_REFERENCE, abs=2e-5)
    lo, hi = res.bracket
    assert lo < -res.t_estimate < hi
    assert res.undetermined_count == 0


def test_stable_under_tighter_tolerance():
    a = find_T(tol=1e-5)
    b = find_T(tol=1e-5, config=DEFAULT_CONFIG.with_tol(1e-11))
    assert abs(a.t_estimate - b.t_estimate) <= 1e-5


def test_sub_critical_bracket_rejected():
    with pytest.raises(BadBracket):
        find_T(initial_bracket=(-0.5, 0.0))


def test_malformed_bracket():
    with pytest.raises(BadBracket):
        find_T(initial_bracket=(0.0, -1.0))
    with pytest.raises(ValueError):
        find_T(tol=0.0)


def test_history_records_each_midpoint():
    res = find_T(tol=1e-2)
    assert len(res.history) >= 2 + 6
    assert res.as_dict()["bracket"] == list(res.bracket)
