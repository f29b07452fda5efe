"""Quadratic diffusion (m = 2): the principal eigenpair of the H operator.

For m = 2 a stationary state on B_R is rho with eps rho = G*rho - (G*rho)(R).
Differentiating in r turns this into eps u = H_R u for u = -rho', where H_R
has the kernel H(r, s).  H_R is compact and strongly positive, so its
spectral radius is a simple eigenvalue with a positive eigenfunction and
power iteration finds it.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import AggregationError, BracketFailure, NoConvergence, ZeroMass
from .functionals import energy
from .potential import RadialPotential
from .radial_grid import RadialProfile, make_grid, normalize_mass
from .shell_kernel import ShellKernels, assemble_kernels

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EigenResult:
    R: float
    epsilon: float
    u: RadialProfile = field(repr=False)
    rho: RadialProfile = field(repr=False)
    iterations: int
    residual: float

    def to_dict(self) -> dict:
        return {"R": self.R, "epsilon": self.epsilon, "iterations": self.iterations,
                "residual": self.residual}


def power_iteration(A, weights=None, x0=None, tol: float = 1e-12, res_tol: float = 1e-10,
                    max_iter: int = 100_000) -> tuple[float, np.ndarray, int, float]:
    """Dominant eigenpair of a nonnegative matrix by sup-normalized power iteration.

    ``weights`` is a positive diagonal D with D A symmetric; the Rayleigh
    quotient is taken in that inner product (plain Euclidean when omitted).
    Iteration stops once successive quotients differ by at most ``tol`` and
    the relative sup residual is at most ``res_tol``.

    Returns ``(eigenvalue, vector, iterations, residual)``.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    D = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    x = np.ones(n) if x0 is None else np.array(x0, dtype=float)
    if not np.all(x > 0):
        raise ValueError("start vector must be strictly positive")
    x /= np.abs(x).max()
    lam_old = math.nan
    y = A @ x
    for it in range(1, max_iter + 1):
        lam = float((x * D) @ y) / float((x * D) @ x)
        top = np.abs(y).max()
        if top == 0.0:
            raise NoConvergence("iteration collapsed to the zero vector")
        resid = float(np.abs(y - lam * x).max() / np.abs(x).max())
        if abs(lam - lam_old) <= tol * max(1.0, abs(lam)) and resid <= res_tol * max(1.0, abs(lam)):
            return lam, x, it, resid / max(abs(lam), 1e-300)
        lam_old = lam
        x = y / top
        y = A @ x
    raise NoConvergence(f"power iteration did not converge in {max_iter} steps "
                        f"(last change {abs(lam - lam_old):.2e}, residual {resid:.2e})")


def _principal(ker: ShellKernels, max_iter: int, x0=None):
    grid = ker.grid
    x0 = np.ones(grid.n) if x0 is None else np.maximum(np.asarray(x0, dtype=float), 1e-12)
    lam, x, its, _ = power_iteration(ker.HW, weights=grid.volume_weights, x0=x0,
                                     max_iter=max_iter)
    x = np.maximum(x, 0.0)
    resid = float(np.abs(lam * x - ker.HW @ x).max() / np.abs(x).max())
    return lam, x, its, resid


def principal_eigenpair(ker: ShellKernels, max_iter: int = 100_000,
                        x0=None) -> tuple[float, RadialProfile]:
    """Principal eigenvalue and eigenfunction u >= 0 of the collocated H operator."""
    lam, x, _, _ = _principal(ker, max_iter, x0)
    return lam, RadialProfile(ker.grid, x)


def reconstruct_density(u: RadialProfile) -> RadialProfile:
    """rho(r) = int_r^R u(s) ds, normalized to unit mass."""
    if not np.any(u.values > 0):
        raise ZeroMass("eigenfunction is identically zero")
    rho = u.grid.tail_integration_matrix @ u.values
    rho[-1] = 0.0
    # the spectral antiderivative can wiggle at rounding level; keep it monotone
    rho = np.maximum(np.minimum.accumulate(rho), 0.0)
    return normalize_mass(u.with_values(rho))


def solve_eigen(pot: RadialPotential, R: float, n: int = 128, angular_n: int = 64,
                max_iter: int = 100_000, ker: ShellKernels | None = None) -> EigenResult:
    """Eigenpair plus reconstructed density on B_R."""
    if ker is None:
        ker = assemble_kernels(pot, make_grid(pot.dimension, R, n), angular_n)
    eps, x, its, resid = _principal(ker, max_iter)
    if resid > 1e-8:
        raise NoConvergence(f"eigen residual {resid:.2e} exceeds 1e-8")
    u = RadialProfile(ker.grid, x)
    return EigenResult(float(ker.grid.R), float(eps), u, reconstruct_density(u), its, resid)


@dataclass
class CurvePoint:
    R: float
    epsilon: float = math.nan
    energy: float = math.nan
    residual: float = math.nan
    iterations: int = 0
    ok: bool = True
    error: str = ""

    def row(self) -> tuple:
        return (self.R, self.epsilon, self.energy, self.residual, self.iterations)


@dataclass
class CurveResult:
    points: list
    monotone: bool
    in_unit_interval: bool

    def __iter__(self):
        return iter((p.R, p.epsilon, p.energy) for p in self.points)

    def __len__(self):
        return len(self.points)

    @property
    def epsilons(self) -> np.ndarray:
        return np.array([p.epsilon for p in self.points])

    @property
    def all_ok(self) -> bool:
        return all(p.ok for p in self.points)


def is_strictly_increasing(values) -> bool:
    v = np.asarray(values, dtype=float)
    return bool(v.size < 2 or np.all(np.diff(v) > 0))


def _check_R_list(R_list):
    R = np.asarray(list(R_list), dtype=float)
    if R.size and (np.any(R <= 0) or np.any(np.diff(R) <= 0)):
        raise ValueError("R_list must be positive and strictly ascending")
    return R


def eigen_curve_point(pot: RadialPotential, R: float, n: int, angular_n: int) -> CurvePoint:
    try:
        ker = assemble_kernels(pot, make_grid(pot.dimension, R, n), angular_n)
        res = solve_eigen(pot, R, ker=ker)
        E = energy(res.rho, 2.0, res.epsilon, ker)
        return CurvePoint(float(R), res.epsilon, E, res.residual, res.iterations)
    except AggregationError as exc:
        log.warning("curve point R=%g failed: %s", R, exc)
        return CurvePoint(float(R), ok=False, error=f"{type(exc).__name__}: {exc}")


def epsilon_of_R_curve(pot: RadialPotential, R_list, n: int = 128,
                       angular_n: int = 64) -> CurveResult:
    """Independent eigen solves along ``R_list``; iterates as (R, epsilon, energy)."""
    R = _check_R_list(R_list)
    pts = [eigen_curve_point(pot, float(r), n, angular_n) for r in R]
    good = [p.epsilon for p in pts if p.ok]
    mono = is_strictly_increasing(good)
    unit = bool(all(0.0 < e < 1.0 for e in good))
    if not mono:
        log.error("epsilon(R) is not strictly increasing: %s", good)
    return CurveResult(pts, mono, unit)


def solve_R_for_epsilon(pot: RadialPotential, eps_target: float, tol: float = 1e-10,
                        n: int = 128, angular_n: int = 64, R_start: float | None = None,
                        R_max: float = 64.0) -> EigenResult:
    """Radius R with epsilon(R) = eps_target, by bracketing and Brent's method."""
    if not 0.0 < eps_target < 1.0:
        raise ValueError(f"eps_target must lie in (0, 1), got {eps_target}")
    cache = {}

    def eps_of(R):
        if R not in cache:
            cache[R] = solve_eigen(pot, R, n, angular_n)
        return cache[R].epsilon

    R_hi = float(R_start) if R_start else pot.length_scale
    R_hi = min(R_hi, R_max)
    while eps_of(R_hi) <= eps_target:
        if R_hi >= R_max:
            raise BracketFailure(f"epsilon({R_max:g}) = {eps_of(R_hi):.6g} is still below "
                                 f"{eps_target:g}; raise R_max or the resolution")
        R_hi = min(2.0 * R_hi, R_max)
    R_lo = R_hi / 2.0
    while eps_of(R_lo) >= eps_target:
        R_hi, R_lo = R_lo, R_lo / 2.0
        if R_lo < 1e-8 * pot.length_scale:
            raise BracketFailure("epsilon_target is below the smallest resolvable radius")
    R = brentq(lambda r: eps_of(r) - eps_target, R_lo, R_hi, xtol=1e-14 * R_hi,
               rtol=4 * np.finfo(float).eps, maxiter=200)
    res = cache.get(R) or solve_eigen(pot, R, n, angular_n)
    if abs(res.epsilon - eps_target) > tol:
        raise BracketFailure(f"root finding reached |eps - target| = "
                             f"{abs(res.epsilon - eps_target):.2e} > tol {tol:g}")
    return res
