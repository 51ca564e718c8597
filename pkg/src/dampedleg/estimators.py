"""scikit-learn compatible wrappers.

``DropDissipationModel`` maps drop heights to dissipated energy and fits its
damping coefficient to a measured reference drop. ``SettlingSlopeRegressor``
is the isolated-damper rate fit, and ``MovingAverageSmoother`` the centered
moving mean, so both slot into pipelines and grid searches.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .calibration import DEFAULT_BRACKETS, MODES, DampingTarget, calibrate, damper_for
from .expdata import TimeSeries, fit_settling_slope, moving_average
from .leg import LegParams
from .simulate import DropConfig, SolverSettings, simulate_drop


class DropDissipationModel(RegressorMixin, BaseEstimator):
    """Dissipated energy [J] of a single drop as a function of drop height [m].

    ``fit`` takes exactly one reference drop ``X = [[h0]]``, ``y = [E_D0]`` and
    calibrates the coefficient for ``mode`` by bisection. ``coefficient`` can
    also be set directly and used without fitting.
    """

    def __init__(
        self,
        mode="viscous",
        coefficient=None,
        bracket=None,
        tol=5e-4,
        leg_params=None,
        solver=None,
    ):
        self.mode = mode
        self.coefficient = coefficient
        self.bracket = bracket
        self.tol = tol
        self.leg_params = leg_params
        self.solver = solver

    def _params(self):
        return self.leg_params if self.leg_params is not None else LegParams()

    def _solver(self):
        return self.solver if self.solver is not None else SolverSettings()

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_min_samples=1)
        if X.shape != (1, 1):
            raise ValueError("fit expects exactly one reference drop: X of shape (1, 1)")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        h0 = float(X[0, 0])
        target = DampingTarget(
            float(y[0]), self.mode, self.bracket or DEFAULT_BRACKETS[self.mode], self.tol
        )
        cfg = DropConfig(h=h0, h0=h0, solver=self._solver())
        self.coef_ = calibrate(self._params(), target, cfg)
        self.h0_ = h0
        self.n_features_in_ = 1
        return self

    def _coef(self):
        if self.coefficient is not None:
            return self.coefficient
        check_is_fitted(self, "coef_")
        return self.coef_

    def predict(self, X):
        coef = self._coef()
        X = check_array(X)
        if X.shape[1] != 1:
            raise ValueError("X must have a single column of drop heights")
        params = self._params()
        spec = damper_for(self.mode, coef)
        cfg = DropConfig(solver=self._solver())
        return np.array(
            [simulate_drop(params, spec, replace(cfg, h=float(h)))[1].E_D for h in X[:, 0]]
        )


class SettlingSlopeRegressor(RegressorMixin, BaseEstimator):
    """Linear force-vs-speed fit on the settling branch of an isolated damper drop.

    ``X`` is a single column of speeds, ``y`` the forces, both in time order.
    ``rate_`` is the damping rate [N s/m], ``intercept_`` the Coulomb-like
    offset [N].
    """

    def __init__(self, window=None):
        self.window = window

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        if X.shape[1] != 1:
            raise ValueError("X must have a single column of speeds")
        t = np.arange(len(y), dtype=float)
        fit = fit_settling_slope(
            TimeSeries("F_N", t, y), TimeSeries("v_mps", t, X[:, 0]), self.window
        )
        self.rate_ = fit.rate
        self.intercept_ = fit.intercept
        self.residual_rms_ = fit.residual_rms
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "rate_")
        X = check_array(X)
        return self.rate_ * np.abs(X[:, 0]) + self.intercept_


class MovingAverageSmoother(TransformerMixin, BaseEstimator):
    """Centered moving mean applied down each column (rows are samples in time)."""

    def __init__(self, span=35):
        self.span = span

    def fit(self, X, y=None):
        X = check_array(X)
        if self.span < 1 or self.span % 2 == 0:
            raise ValueError(f"span must be a positive odd integer, got {self.span}")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X)
        t = np.arange(X.shape[0], dtype=float)
        cols = [moving_average(TimeSeries("x", t, X[:, j]), self.span).values for j in range(X.shape[1])]
        return np.column_stack(cols)
