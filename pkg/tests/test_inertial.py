import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sitetracker.exceptions import DegenerateCalibration
from sitetracker.inertial import (PersonalStepModel, PersonalStepRegressor, StepModelState,
                                  StepObservation, UniversalStepModel, active_step_length,
                                  fit_personal_step_model, universal_step_length, wrap_angle)


def test_universal_examples():
    assert universal_step_length(1.75, 2.0) == pytest.approx(0.7509, abs=1e-12)
    assert universal_step_length(1.75, 0.0) == pytest.approx(0.3155, abs=1e-12)
    assert universal_step_length(1.6, 3.1, (0, 0, 0)) == 0.0


def test_noiseless_personal_fit():
    f = np.linspace(1.2, 2.6, 12)
    m = fit_personal_step_model(np.c_[0.4 * f + 0.1, f])
    assert m.slope == pytest.approx(0.4, abs=1e-12)
    assert m.intercept == pytest.approx(0.1, abs=1e-12)
    assert m.r_squared == pytest.approx(1.0)


def test_constant_step_length_explains_nothing():
    f = np.linspace(1, 2, 8)
    m = fit_personal_step_model(np.c_[np.full(8, 0.7), f])
    assert m.slope == pytest.approx(0.0, abs=1e-12) and m.r_squared == 0.0


def test_calibration_preconditions():
    with pytest.raises(DegenerateCalibration):
        fit_personal_step_model([(0.7, 1.5), (0.8, 1.9)])
    with pytest.raises(DegenerateCalibration):
        fit_personal_step_model([(0.7 + 0.01 * i, 1.8) for i in range(6)])


def test_active_step_length_switching_and_clamp():
    personal = PersonalStepModel(0.4, 0.1, 0.95)
    assert active_step_length(StepModelState(personal=personal), 2.0) == pytest.approx(0.9)
    weak = StepModelState(personal=PersonalStepModel(0.4, 0.1, 0.5))
    assert active_step_length(weak, 2.0) == pytest.approx(universal_step_length(1.78, 2.0))
    big = StepModelState(personal=PersonalStepModel(1.0, 0.3, 0.99))
    assert active_step_length(big, 2.0) == 1.5
    assert active_step_length(StepModelState(universal=UniversalStepModel(0, 0, 0)), 1.0) == 0.1
    np.testing.assert_allclose(active_step_length(big, np.array([0.0, 2.0])), [0.3, 1.5])


def test_default_state_uses_universal():
    st_ = StepModelState()
    assert not st_.uses_personal
    assert st_.universal.height == 1.78


def test_step_observation_validation():
    ob = StepObservation(1, 1, 0.7, 3 * np.pi / 2, 1.8)
    assert ob.heading == pytest.approx(-np.pi / 2)
    with pytest.raises(ValueError):
        StepObservation(1, True, -0.1, 0.0, 1.0)
    with pytest.raises(ValueError):
        StepObservation(1, True, 0.5, 0.0, 6.0)


def test_wrap_angle_range():
    t = wrap_angle(np.linspace(-20, 20, 401))
    assert np.all(t > -np.pi) and np.all(t <= np.pi)
    assert wrap_angle(-np.pi) == pytest.approx(np.pi)


def test_regressor_api():
    f = np.linspace(1.0, 2.5, 10)
    reg = PersonalStepRegressor().fit(f, 0.35 * f + 0.12)
    assert reg.coef_[0] == pytest.approx(0.35)
    assert reg.score(f, 0.35 * f + 0.12) == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 0.6), st.floats(-0.2, 0.4), st.integers(0, 10_000))
def test_refit_is_a_fixed_point(slope, intercept, seed):
    f = np.random.default_rng(seed).uniform(0.8, 3.0, 9)
    m = fit_personal_step_model(np.c_[slope * f + intercept, f])
    m2 = fit_personal_step_model(np.c_[m.predict(f), f])
    assert abs(m2.slope - m.slope) < 1e-9 and abs(m2.intercept - m.intercept) < 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 0.5))
def test_r2_in_unit_interval(seed, noise):
    rng = np.random.default_rng(seed)
    f = rng.uniform(1, 2.5, 7)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        m = fit_personal_step_model(np.c_[0.4 * f + rng.normal(0, noise + 1e-6, 7), f])
    assert 0.0 <= m.r_squared <= 1.0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 5.0))
def test_active_length_continuous(f):
    state = StepModelState(personal=PersonalStepModel(0.5, 0.05, 0.9))
    eps = 1e-7
    assert abs(active_step_length(state, f + eps) - active_step_length(state, f)) <= 0.5 * eps + 1e-12
