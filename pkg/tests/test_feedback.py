"""Feedback nonlinearity: hypothesis validation and the a/b coefficients."""

import math

import numpy as np
import pytest

from delaymorse import (
    FeedbackModel,
    NonNegativeB,
    coefficient_a,
    coefficient_b,
    linear_family,
    tanh_family,
    validate_feedback,
)


@pytest.fixture(scope="module")
def damped_tanh():
    # f(x, y) = -x - tanh(2 y) on M = 2
    return tanh_family(1.0, 1.0, 2.0, 2.0)


def test_model_rejects_nonzero_origin():
    with pytest.raises(ValueError):
        FeedbackModel(
            f=lambda x, y: 1.0 + x,
            d1f=lambda x, y: 1.0,
            d2f=lambda x, y: -1.0,
            M=1.0,
            L0=2.0,
        )


def test_model_rejects_positive_delayed_slope():
    with pytest.raises(ValueError):
        FeedbackModel(
            f=lambda x, y: -x + y,
            d1f=lambda x, y: -1.0,
            d2f=lambda x, y: 1.0,
            M=1.0,
            L0=2.0,
        )


def test_damped_tanh_passes_all_hypotheses(damped_tanh):
    report = validate_feedback(damped_tanh, samples=400)
    assert report.passed
    assert report.failures == []
    assert report.h2_pass and report.h3_pass


def test_positive_feedback_rejected_at_construction():
    with pytest.raises(ValueError):
        FeedbackModel(
            f=lambda x, y: math.tanh(y) - x,
            d1f=lambda x, y: -1.0,
            d2f=lambda x, y: 1.0 / math.cosh(y) ** 2,
            M=1.0,
            L0=2.0,
        )


def test_sign_flip_away_from_origin_fails_h2():
    # origin slope is negative, but y f(0, y) turns positive past 0.1
    model = FeedbackModel(
        f=lambda x, y: y * (y * y - 0.01) - x,
        d1f=lambda x, y: -1.0,
        d2f=lambda x, y: 3.0 * y * y - 0.01,
        M=1.0,
        L0=2.0,
    )
    report = validate_feedback(model, samples=400)
    assert not report.h2_pass
    assert any("(H2)" in line for line in report.failures)


def test_pure_delayed_feedback_fails_h3():
    model = linear_family(0.0, -1.0, 1.0)
    report = validate_feedback(model, samples=400)
    assert not report.h3_pass
    assert any("(H3)" in line for line in report.failures)


def test_l0_audit_flags_understated_bound():
    model = FeedbackModel(
        f=lambda x, y: -x - math.tanh(2.0 * y),
        d1f=lambda x, y: -1.0,
        d2f=lambda x, y: -2.0 / math.cosh(2.0 * y) ** 2,
        M=2.0,
        L0=1.0,  # true sup over the square is near 3
    )
    report = validate_feedback(model, samples=400)
    assert not report.l0_pass


def test_coefficient_a_constant_first_slot(damped_tanh):
    for x_val in (-1.5, -0.3, 0.0, 0.7, 2.0):
        for x_del in (-2.0, 0.0, 1.0):
            assert abs(coefficient_a(damped_tanh, x_val, x_del) + 1.0) < 1e-14


def test_coefficient_a_degenerate_at_zero_state():
    model = FeedbackModel(
        f=lambda x, y: -math.sin(x) - y,
        d1f=lambda x, y: -math.cos(x),
        d2f=lambda x, y: -1.0,
        M=2.0,
        L0=2.0,
    )
    for x_del in (-1.0, 0.0, 0.5):
        a = coefficient_a(model, 0.0, x_del)
        assert abs(a - model.d1f(0.0, x_del)) < 1e-14


def test_coefficient_a_cubic_closed_form():
    model = FeedbackModel(
        f=lambda x, y: -(x ** 3) - y,
        d1f=lambda x, y: -3.0 * x * x,
        d2f=lambda x, y: -1.0,
        M=2.0,
        L0=10.0,
    )
    # integral of -3 s^2 over [0, 1] is -1, independent of the second slot
    for x_del in (-1.0, 0.0, 2.0):
        assert abs(coefficient_a(model, 1.0, x_del) + 1.0) < 1e-12


def test_coefficient_b_examples(damped_tanh):
    assert abs(coefficient_b(damped_tanh, 0.0) + 2.0) < 1e-12
    assert abs(coefficient_b(damped_tanh, 1.0) + math.tanh(2.0)) < 1e-14
    assert abs(coefficient_b(damped_tanh, -0.5) + 2.0 * math.tanh(1.0)) < 1e-14


def test_coefficient_b_positive_raises():
    model = FeedbackModel(
        f=lambda x, y: -x - y * (1.0 - y * y),
        d1f=lambda x, y: -1.0,
        d2f=lambda x, y: -(1.0 - 3.0 * y * y),
        M=2.0,
        L0=10.0,
    )
    # f(0, y)/y = -(1 - y^2) turns positive past |y| = 1
    with pytest.raises(NonNegativeB):
        coefficient_b(model, 1.5)


def test_coefficient_b_negative_on_grid(damped_tanh):
    ys = np.linspace(-damped_tanh.M, damped_tanh.M, 10001)
    bs = np.array([coefficient_b(damped_tanh, float(y)) for y in ys])
    assert np.all(bs < 0.0)


def test_decomposition_identity_on_grid(damped_tanh):
    # a(x, y) x + b(y) y reproduces f(x, y) within quadrature tolerance
    grid = np.linspace(-damped_tanh.M, damped_tanh.M, 41)
    worst = 0.0
    for x in grid:
        for y in grid:
            a = coefficient_a(damped_tanh, float(x), float(y))
            b = coefficient_b(damped_tanh, float(y))
            worst = max(worst, abs(a * x + b * y - damped_tanh.f(x, y)))
    assert worst <= 1e-10


def test_declared_partials_match_differences(damped_tanh):
    report = validate_feedback(damped_tanh, samples=400)
    assert report.derivatives_pass


def test_tanh_family_l0_is_sup_over_square():
    model = tanh_family(0.5, 1.6, 1.0, 2.5)
    assert abs(model.L0 - (0.5 * 2.5 + 1.6 * math.tanh(2.5))) < 1e-14
