"""Step-length models: the height-weighted universal model and a per-person linear fit."""

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DegenerateCalibration

UNIVERSAL_PARAMS = (0.1244, 0.066, 0.2000)
DEFAULT_HEIGHT_M = 1.78
R2_THRESHOLD = 0.8
MIN_CALIBRATION_POINTS = 5
STEP_CLAMP = (0.1, 1.5)


def wrap_angle(theta):
    """Wrap to (-pi, pi]."""
    t = np.mod(np.asarray(theta, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    t = np.where(t <= -np.pi, t + 2.0 * np.pi, t)
    return float(t) if np.ndim(t) == 0 else t


@dataclass(frozen=True)
class StepObservation:
    device_id: int
    step: bool
    length: float
    heading: float
    frequency: float
    timestamp: float = 0.0

    def __post_init__(self):
        if self.length < 0:
            raise ValueError("step length must be non-negative")
        if not 0.0 <= self.frequency <= 5.0:
            raise ValueError(f"step frequency {self.frequency} outside [0, 5] Hz")
        object.__setattr__(self, "heading", wrap_angle(self.heading))
        object.__setattr__(self, "step", bool(self.step))


@dataclass(frozen=True)
class UniversalStepModel:
    a: float = UNIVERSAL_PARAMS[0]
    b: float = UNIVERSAL_PARAMS[1]
    c: float = UNIVERSAL_PARAMS[2]
    height: float = DEFAULT_HEIGHT_M

    def predict(self, f):
        return universal_step_length(self.height, f, (self.a, self.b, self.c))


@dataclass(frozen=True)
class PersonalStepModel:
    slope: float
    intercept: float
    r_squared: float
    # set when the raw R^2 was negative and got clamped
    flagged: bool = False

    def predict(self, f):
        return self.slope * np.asarray(f, dtype=float) + self.intercept


def universal_step_length(h, f, params=UNIVERSAL_PARAMS):
    """Height-weighted linear step length ``h * (a * f + b) + c``."""
    a, b, c = params
    return h * (a * np.asarray(f, dtype=float) + b) + c


def fit_personal_step_model(calibration, min_points=MIN_CALIBRATION_POINTS):
    """Ordinary least squares of visual step length on step frequency.

    Parameters
    ----------
    calibration : sequence of (visual_step_length, frequency) pairs

    Returns
    -------
    PersonalStepModel
    """
    cal = np.asarray(list(calibration), dtype=float).reshape(-1, 2)
    if len(cal) < min_points:
        raise DegenerateCalibration(f"need at least {min_points} calibration points, got {len(cal)}")
    sv, f = cal[:, 0], cal[:, 1]
    fc = f - f.mean()
    sxx = fc @ fc
    if sxx <= 1e-12 * len(f):
        raise DegenerateCalibration("step frequency is constant")
    slope = (fc @ (sv - sv.mean())) / sxx
    intercept = sv.mean() - slope * f.mean()
    resid = sv - (slope * f + intercept)
    ss_res = resid @ resid
    ss_tot = ((sv - sv.mean()) ** 2).sum()
    if ss_tot <= 1e-24:
        # nothing to explain; exact fit of a constant counts as zero explained variance
        r2 = 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    flagged = r2 < 0.0
    if flagged:
        warnings.warn("negative R^2 clamped to 0", RuntimeWarning, stacklevel=2)
    r2 = float(min(max(r2, 0.0), 1.0))
    return PersonalStepModel(float(slope), float(intercept), r2, flagged)


@dataclass
class StepModelState:
    """Per-device step model: universal default plus an optional personal fit."""

    universal: UniversalStepModel = field(default_factory=UniversalStepModel)
    personal: PersonalStepModel = None
    r2_threshold: float = R2_THRESHOLD

    @property
    def uses_personal(self):
        return self.personal is not None and self.personal.r_squared >= self.r2_threshold


def active_step_length(state, f):
    """Step length under the active model, clamped to [0.1, 1.5] m."""
    if state.uses_personal:
        v = state.personal.predict(f)
    else:
        v = state.universal.predict(f)
    return np.clip(v, *STEP_CLAMP) if np.ndim(v) else float(min(max(float(v), STEP_CLAMP[0]), STEP_CLAMP[1]))


class PersonalStepRegressor(RegressorMixin, BaseEstimator):
    """Fit ``Sv = slope * f + intercept``; ``X`` is frequency (n,) or (n, 1)."""

    def __init__(self, min_points=MIN_CALIBRATION_POINTS):
        self.min_points = min_points

    def fit(self, X, y):
        f = np.asarray(X, dtype=float).reshape(-1)
        self.model_ = fit_personal_step_model(np.c_[np.asarray(y, dtype=float), f], self.min_points)
        self.coef_ = np.array([self.model_.slope])
        self.intercept_ = self.model_.intercept
        self.r_squared_ = self.model_.r_squared
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self.model_.predict(np.asarray(X, dtype=float).reshape(-1))
