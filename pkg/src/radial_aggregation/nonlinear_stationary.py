"""Compact stationary states for general m > 1 on a prescribed ball B_R.

Solves eps rho^(m-1) = G*rho - (G*rho)(R) on B_R with unit mass, the
coefficient eps being an unknown fixed by the mass constraint.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import AggregationError, DegenerateProfile, NoConvergence, NotApplicable
from .functionals import energy, energy_terms
from .linear_eigensolver import CurvePoint, CurveResult, _check_R_list, is_strictly_increasing
from .potential import RadialPotential
from .radial_grid import RadialProfile, make_grid, normalize_mass, resample
from .shell_kernel import ShellKernels, _check, assemble_kernels

log = logging.getLogger(__name__)

SUPPORT_ABS = 1e-12


@dataclass(frozen=True)
class SolverOptions:
    n: int = 128
    angular_n: int = 64
    tol: float = 1e-12
    max_iter: int = 20_000
    damping: float | None = None
    init: RadialProfile | None = field(default=None, repr=False)

    def damping_for(self, m: float) -> float:
        if self.damping is not None:
            if not 0.0 < self.damping <= 1.0:
                raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
            return float(self.damping)
        return 0.5 if m < 2 else 1.0


@dataclass(frozen=True)
class StationaryResult:
    m: float
    R: float
    epsilon: float
    rho: RadialProfile = field(repr=False)
    residual: float
    energy: float
    compactness_margin: float
    iterations: int
    boundary_value: float = math.nan
    lm_norm: float = math.nan
    interaction: float = math.nan

    def scalars(self) -> dict:
        keys = ("m", "R", "epsilon", "residual", "energy", "compactness_margin", "iterations",
                "boundary_value", "lm_norm", "interaction")
        return {k: getattr(self, k) for k in keys}

    def to_json(self, **kw) -> str:
        return json.dumps(self.scalars(), **kw)


def cosine_bump(grid) -> np.ndarray:
    return 1.0 + np.cos(np.pi * grid.nodes / grid.R)


def _summarize(ker: ShellKernels, m: float, eps: float, rho: np.ndarray, iterations: int):
    p = RadialProfile(ker.grid, rho)
    conv = ker.KW @ rho
    cR = float(conv[-1])
    L, I = energy_terms(p, m, ker)
    E = energy(p, m, eps, ker)
    return StationaryResult(
        m=float(m), R=float(ker.grid.R), epsilon=float(eps), rho=p,
        residual=_el_residual(ker, m, eps, rho, conv),
        energy=E, compactness_margin=float(2.0 * E - eps * (2.0 / m - 1.0) * L),
        iterations=int(iterations), boundary_value=cR, lm_norm=L, interaction=I)


def _el_residual(ker, m, eps, rho, conv) -> float:
    sup = rho > SUPPORT_ABS
    if not sup.any():
        return math.inf
    r = eps * rho[sup] ** (m - 1.0) - conv[sup] + conv[-1]
    return float(np.abs(r).max() / ker.g0)


def _fixed_point_map(ker: ShellKernels, m: float, rho: np.ndarray):
    conv = ker.KW @ rho
    w = np.maximum(conv - conv[-1], 0.0)
    w[-1] = 0.0
    hat = w ** (1.0 / (m - 1.0))
    M = float(ker.grid.volume_weights @ hat)
    if not (M > 1e-300 and math.isfinite(M)):
        raise DegenerateProfile(f"mass of the updated profile is {M:.3e}")
    return hat / M, M ** (m - 1.0)


def solve_stationary(pot: RadialPotential, m: float, R: float,
                     opts: SolverOptions | None = None,
                     ker: ShellKernels | None = None) -> StationaryResult:
    """Damped mass-normalized fixed-point iteration for (eps, rho) on B_R."""
    if not m > 1:
        raise ValueError(f"m must exceed 1, got {m}")
    opts = opts or SolverOptions()
    if ker is None:
        ker = assemble_kernels(pot, make_grid(pot.dimension, R, opts.n), opts.angular_n)
    grid = ker.grid
    lam = opts.damping_for(m)
    V = grid.volume_weights
    if opts.init is not None:
        rho = normalize_mass(resample(opts.init, grid)).values.copy()
    else:
        rho = normalize_mass(RadialProfile(grid, cosine_bump(grid))).values.copy()
    change = math.inf
    for it in range(1, opts.max_iter + 1):
        hat, eps = _fixed_point_map(ker, m, rho)
        new = (1.0 - lam) * rho + lam * hat
        new /= V @ new
        change = float(V @ np.abs(new - rho))
        rho = new
        if change <= opts.tol:
            break
    else:
        res = _finish(ker, m, rho, opts.max_iter)
        raise NoConvergence(f"fixed point not reached in {opts.max_iter} iterations "
                            f"(last L1 change {change:.2e})", result=res)
    return _finish(ker, m, rho, it)


def _finish(ker, m, rho, iterations) -> StationaryResult:
    # one undamped evaluation makes eps and rho consistent with each other
    hat, eps = _fixed_point_map(ker, m, rho)
    return _summarize(ker, m, eps, hat, iterations)


def residual_el(res: StationaryResult, ker: ShellKernels) -> float:
    """Sup over the support of |eps rho^(m-1) - G*rho + (G*rho)(R)|, relative to g(0)."""
    _check(ker, res.rho)
    rho = res.rho.values
    return _el_residual(ker, res.m, res.epsilon, rho, ker.KW @ rho)


@dataclass
class IdentityReport:
    lm_identity_error: float
    energy_form1_error: float
    energy_form2_error: float
    margin_error: float
    energy: float
    energy_negative: bool
    energy_sign_required: bool
    tol: float = 1e-6

    @property
    def identities_hold(self) -> bool:
        errs = (self.lm_identity_error, self.energy_form1_error, self.energy_form2_error,
                self.margin_error)
        return all(e <= self.tol for e in errs)

    @property
    def passed(self) -> bool:
        return self.identities_hold and (self.energy_negative or not self.energy_sign_required)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["identities_hold"] = self.identities_hold
        d["passed"] = self.passed
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def energy_identities_check(res: StationaryResult, ker: ShellKernels,
                            tol: float = 1e-6) -> IdentityReport:
    """Compare the closed forms valid at compact stationary states with direct evaluation.

    Energy errors are relative to the size of the two energy terms, so they
    stay meaningful when E itself is close to zero.
    """
    _check(ker, res.rho)
    m, eps = res.m, res.epsilon
    L, I = energy_terms(res.rho, m, ker)
    cR = float(ker.KW[-1] @ res.rho.values)
    E = energy(res.rho, m, eps, ker)
    lm_pred = (I - cR) / eps
    e1 = eps * (1.0 / m - 0.5) * L - 0.5 * cR
    e2 = (1.0 / m - 0.5) * I - cR / m
    scale = (eps / m) * L + 0.5 * I
    margin = 2.0 * E - eps * (2.0 / m - 1.0) * L
    return IdentityReport(
        lm_identity_error=abs(L - lm_pred) / L,
        energy_form1_error=abs(E - e1) / scale,
        energy_form2_error=abs(E - e2) / scale,
        margin_error=abs(margin + cR) / max(abs(cR), scale),
        energy=E,
        energy_negative=bool(E < 0),
        energy_sign_required=bool(m >= 2),
        tol=tol,
    )


def support_bound_check(res: StationaryResult) -> tuple[float, bool]:
    """(eps^(1/(m-2)), |B_R| > eps^(1/(m-2))) for m > 2."""
    if not res.m > 2:
        raise NotApplicable(f"support bound needs m > 2, got m = {res.m}")
    bound = res.epsilon ** (1.0 / (res.m - 2.0))
    return float(bound), bool(res.rho.grid.ball_volume > bound)


def stationary_curve_point(pot, m, R, opts) -> CurvePoint:
    try:
        res = solve_stationary(pot, m, R, opts)
        return CurvePoint(float(R), res.epsilon, res.energy, res.residual, res.iterations)
    except AggregationError as exc:
        log.warning("stationary solve R=%g failed: %s", R, exc)
        return CurvePoint(float(R), ok=False, error=f"{type(exc).__name__}: {exc}")


def epsilon_of_R_curve_nonlinear(pot: RadialPotential, m: float, R_list,
                                 opts: SolverOptions | None = None) -> CurveResult:
    """Independent stationary solves along ``R_list``; monotonicity is observed, not required."""
    R = _check_R_list(R_list)
    opts = replace(opts or SolverOptions(), init=None)
    pts = [stationary_curve_point(pot, m, float(r), opts) for r in R]
    good = [p.epsilon for p in pts if p.ok]
    return CurveResult(pts, is_strictly_increasing(good),
                       bool(all(0.0 < e < 1.0 for e in good)))
