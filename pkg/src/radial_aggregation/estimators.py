"""scikit-learn style wrappers around the stationary and minimization solvers.

``fit`` takes no training data: the model is fully specified by its
parameters.  ``predict`` evaluates the fitted density at radii.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .energy_minimizer import MinimizeOptions, minimize_global, minimize_in_ball
from .nonlinear_stationary import SolverOptions, solve_stationary
from .potential import make_potential


def _radii(X) -> np.ndarray:
    r = check_array(np.asarray(X, dtype=float).reshape(-1, 1), ensure_all_finite=True)
    r = r.ravel()
    if np.any(r < 0):
        raise ValueError("radii must be nonnegative")
    return r


class _RadialDensityMixin:
    def _potential(self):
        return make_potential(self.family, self.potential_params or {"sigma": 1.0}, self.dimension)

    def predict(self, X):
        """Density at radii ``X`` (zero outside the computational ball)."""
        check_is_fitted(self, "rho_")
        shape = np.shape(X)
        return self.rho_(_radii(X)).reshape(shape)

    def score(self, X=None, y=None):
        """Negative energy, so that higher is better."""
        check_is_fitted(self, "energy_")
        return -self.energy_


class StationarySolver(_RadialDensityMixin, BaseEstimator):
    """Compact stationary state on B_R; ``epsilon_`` is determined by the fit."""

    def __init__(self, family="gaussian", potential_params=None, dimension=1, m=2.0, R=1.0,
                 n=128, angular_n=64, tol=1e-12, max_iter=20_000, damping=None):
        self.family = family
        self.potential_params = potential_params
        self.dimension = dimension
        self.m = m
        self.R = R
        self.n = n
        self.angular_n = angular_n
        self.tol = tol
        self.max_iter = max_iter
        self.damping = damping

    def fit(self, X=None, y=None):
        opts = SolverOptions(n=self.n, angular_n=self.angular_n, tol=self.tol,
                             max_iter=self.max_iter, damping=self.damping)
        res = solve_stationary(self._potential(), float(self.m), float(self.R), opts)
        self.result_ = res
        self.epsilon_ = res.epsilon
        self.rho_ = res.rho
        self.energy_ = res.energy
        self.residual_ = res.residual
        self.n_iter_ = res.iterations
        return self


class EnergyMinimizer(_RadialDensityMixin, BaseEstimator):
    """Energy minimizer at fixed epsilon; ``R_box=None`` grows the ball until saturation."""

    def __init__(self, family="gaussian", potential_params=None, dimension=1, m=2.0,
                 epsilon=0.5, R_box=None, n=256, angular_n=64, tol=1e-8, max_iter=20_000):
        self.family = family
        self.potential_params = potential_params
        self.dimension = dimension
        self.m = m
        self.epsilon = epsilon
        self.R_box = R_box
        self.n = n
        self.angular_n = angular_n
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X=None, y=None):
        opts = MinimizeOptions(n=self.n, angular_n=self.angular_n, tol=self.tol,
                               max_iter=self.max_iter)
        pot = self._potential()
        if self.R_box is None:
            res = minimize_global(pot, float(self.m), float(self.epsilon), opts)
        else:
            res = minimize_in_ball(pot, float(self.m), float(self.epsilon), float(self.R_box), opts)
        self.result_ = res
        self.rho_ = res.rho
        self.energy_ = res.energy
        self.support_radius_ = res.support_radius
        self.kkt_residual_ = res.kkt_residual
        self.n_iter_ = res.iterations
        return self
