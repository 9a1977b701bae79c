from math import factorial

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dtmrom.errors import ConfigurationError
from dtmrom.quadrature import MAX_DEGREE, gauss_rule


def triangle_monomial(a, b):
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("degree", range(MAX_DEGREE + 1))
def test_triangle_weights_positive_and_sum(degree):
    q = gauss_rule(2, degree)
    assert np.all(q.weights > 0)
    assert abs(q.weights.sum() - 0.5) < 1e-14
    X = q.points
    assert np.all(X >= 0) and np.all(X.sum(1) <= 1 + 1e-15)


@given(st.integers(0, MAX_DEGREE), st.data())
def test_triangle_exact_to_declared_degree(degree, data):
    a = data.draw(st.integers(0, degree))
    b = data.draw(st.integers(0, degree - a))
    q = gauss_rule(2, degree)
    val = q.weights @ (q.points[:, 0] ** a * q.points[:, 1] ** b)
    assert abs(val - triangle_monomial(a, b)) < 1e-14


@given(st.integers(0, MAX_DEGREE), st.data())
def test_segment_exact_to_declared_degree(degree, data):
    a = data.draw(st.integers(0, degree))
    q = gauss_rule(1, degree)
    assert abs(q.weights @ q.points[:, 0] ** a - 1.0 / (a + 1)) < 1e-14


def test_known_integrals():
    q = gauss_rule(2, 6)
    x, y = q.points.T
    assert abs(q.weights @ x - 1 / 6) < 1e-15
    assert abs(q.weights @ (x**3 * y**3) - 1 / 1120) < 1e-14


def test_unsupported_degree():
    with pytest.raises(ConfigurationError):
        gauss_rule(2, MAX_DEGREE + 1)
    with pytest.raises(ConfigurationError):
        gauss_rule(3, 2)
