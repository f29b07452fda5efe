"""Energy minimization over unit-mass radial densities and the thresholds eps0, eps1.

The energy is minimized over densities supported in a ball B_R by a
mass-preserving multiplicative descent.  Nodes where the density has
vanished but the first variation says mass should flow in are reseeded, and
a Newton solve on the active set polishes the result once the support has
settled.  Growing the ball until the support stops moving approximates the
global minimizer on R^N.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (AggregationError, NoConvergence, NoMinimizer, NotApplicable,
                     UnboundedSupport, ZeroMass)
from . import functionals as _fn
from .functionals import energy_terms
from .nonlinear_stationary import SolverOptions, solve_stationary
from .potential import RadialPotential, lp_norm_of_G
from .radial_grid import RadialProfile, make_grid, normalize_mass, resample
from .shell_kernel import ShellKernels, assemble_kernels

log = logging.getLogger(__name__)

__all__ = [
    "energy", "first_variation", "kkt_residual", "MinimizeOptions", "MinimizeResult",
    "minimize_in_ball", "minimize_global", "rayleigh_quotient", "estimate_epsilon0",
    "estimate_epsilon1", "epsilon0_upper_bound", "Epsilon0Result", "Epsilon1Report", "ThresholdReport",
    "threshold_report",
]

SUPPORT_REL = 1e-10
RESEED_REL = 1e-8
ARMIJO = 1e-4
TAU_MIN = 1e-14


@dataclass(frozen=True)
class MinimizeOptions:
    n: int = 256
    angular_n: int = 64
    tol: float = 1e-8
    max_iter: int = 20_000
    polish: bool = True
    init: RadialProfile | None = field(default=None, repr=False)
    R_start: float | None = None
    R_cap: float | None = None


@dataclass
class MinimizeResult:
    epsilon: float
    m: float
    R_box: float
    rho: RadialProfile = field(repr=False)
    energy: float
    support_radius: float
    kkt_residual: float
    iterations: int
    converged: bool = True
    initial_energy: float = math.nan
    energy_history: list = field(default_factory=list, repr=False)
    boxes: list = field(default_factory=list, repr=False)
    status: str = "ok"

    def scalars(self) -> dict:
        keys = ("epsilon", "m", "R_box", "energy", "support_radius", "kkt_residual",
                "iterations", "converged", "initial_energy", "status")
        d = {k: getattr(self, k) for k in keys}
        if self.boxes:
            d["boxes"] = self.boxes
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.scalars(), **kw)


def _check_pot(pot, ker: ShellKernels):
    if pot is not None and ker.potential is not None and pot.cache_key() != ker.potential.cache_key():
        raise ValueError("kernels were assembled for a different potential")


def energy(p: RadialProfile, pot: RadialPotential | None, m: float, epsilon: float,
           ker: ShellKernels) -> float:
    """E[rho] = (eps/m) int rho^m - 1/2 int rho (G*rho).

    The kernels already carry the potential; ``pot`` is only checked
    against them and may be None.
    """
    _check_pot(pot, ker)
    return _fn.energy(p, m, epsilon, ker)


def first_variation(p: RadialProfile, pot: RadialPotential | None, m: float, epsilon: float,
                    ker: ShellKernels) -> RadialProfile:
    """v = eps rho^(m-1) - G*rho."""
    _check_pot(pot, ker)
    return _fn.first_variation(p, m, epsilon, ker)


def support_radius(p: RadialProfile, rel: float = SUPPORT_REL) -> float:
    return p.support_radius(rel)


def _natural_residual(rho: np.ndarray, g: np.ndarray, scale: float) -> float:
    top = rho.max()
    if not top > 0:
        return math.inf
    return float(np.abs(np.minimum(rho / top, g / scale)).max())


def kkt_residual(p: RadialProfile, m: float, epsilon: float, ker: ShellKernels) -> float:
    """Natural residual of the optimality conditions on B_R, relative to g(0).

    With v the first variation and vbar its rho-weighted mean, the conditions
    are v = vbar where rho > 0 and v >= vbar where rho = 0; the residual is
    max_i |min(rho_i / max rho, (v_i - vbar) / g(0))|.
    """
    v = _fn.first_variation(p, m, epsilon, ker).values
    rho = p.values
    M = float(p.grid.volume_weights @ rho)
    if not M > 0:
        raise ZeroMass("profile has zero mass")
    vbar = float(p.grid.volume_weights @ (rho * v)) / M
    return _natural_residual(rho, v - vbar, ker.g0)


# -- generic multiplicative descent --------------------------------------

@dataclass
class _DescentState:
    rho: np.ndarray
    f: float
    grad: np.ndarray
    history: list
    iterations: int = 0
    kkt: float = math.inf
    stalled: bool = False


def _descend(obj, rho, V, scale, tol, max_iter, polish=None, polish_every=1000):
    """Minimize ``obj`` over {rho >= 0, V.rho = 1}.

    ``obj(rho)`` returns (value, gradient).  Accepted steps never increase
    the objective.  ``polish(state)`` may replace the state with a better
    one; it is tried periodically once the residual is small and at the end.
    """
    f, grad = obj(rho)
    st = _DescentState(rho, f, grad, [f])
    tau = 1.0
    for it in range(1, max_iter + 1):
        gbar = float(V @ (st.rho * st.grad))
        st.kkt = _natural_residual(st.rho, st.grad - gbar, scale)
        if st.kkt <= tol:
            return st
        if polish is not None and it % polish_every == 0 and st.kkt < 1e-3:
            if polish(st) and st.kkt <= tol:
                return st
            gbar = float(V @ (st.rho * st.grad))
        # let mass re-enter nodes that the clipping emptied
        top = st.rho.max()
        dead = (st.rho <= SUPPORT_REL * top) & (st.grad < gbar)
        if dead.any():
            trial = st.rho.copy()
            trial[dead] = np.maximum(trial[dead], RESEED_REL * top)
            trial /= V @ trial
            ft, gt = obj(trial)
            if ft <= st.f:
                st.rho, st.f, st.grad = trial, ft, gt
                gbar = float(V @ (st.rho * st.grad))
        dev = st.grad - gbar
        step = st.rho * dev
        pred = float(V @ (step * dev))
        while True:
            new = np.maximum(st.rho - tau * step, 0.0)
            new /= V @ new
            fn, gn = obj(new)
            if fn <= min(st.f, st.f - ARMIJO * tau * pred + 1e-14 * abs(st.f)):
                break
            tau *= 0.5
            if tau < TAU_MIN:
                break
        if tau < TAU_MIN:
            st.stalled = True
            break
        st.rho, st.f, st.grad = new, fn, gn
        st.history.append(fn)
        st.iterations = it
        tau = min(1.5 * tau, 1e6)
    gbar = float(V @ (st.rho * st.grad))
    st.kkt = _natural_residual(st.rho, st.grad - gbar, scale)
    if polish is not None and st.kkt > tol:
        polish(st)
    return st


def _energy_objective(ker, m, eps):
    KW, V = ker.KW, ker.grid.volume_weights

    def obj(rho):
        c = KW @ rho
        f = float((eps / m) * (V @ rho ** m) - 0.5 * (V @ (rho * c)))
        return f, eps * rho ** (m - 1.0) - c
    return obj


def _newton_polish(ker, m, eps, obj, max_outer=20, max_newton=50):
    """Active-set Newton on eps x^(m-1) - (K W x) - C = 0, V.x = 1."""
    KW, V, g0 = ker.KW, ker.grid.volume_weights, ker.g0

    def run(st: _DescentState) -> bool:
        rho = st.rho.copy()
        grad = st.grad
        gbar = float(V @ (rho * grad))
        S = (rho > SUPPORT_REL * rho.max()) | (grad < gbar)
        best = None
        for _ in range(max_outer):
            idx = np.nonzero(S)[0]
            if idx.size == 0:
                return False
            x = np.maximum(rho[idx], 1e-12 * rho.max())
            C = gbar
            A = KW[np.ix_(idx, idx)]
            Vs = V[idx]
            k = idx.size
            J = np.zeros((k + 1, k + 1))
            J[:k, :k] = -A
            J[:k, k] = -1.0
            J[k, :k] = Vs
            diag = np.arange(k)
            for _ in range(max_newton):
                with np.errstate(over="ignore", invalid="ignore"):
                    F = np.concatenate([eps * x ** (m - 1.0) - A @ x - C, [Vs @ x - 1.0]])
                if not np.all(np.isfinite(F)):
                    return False  # diverging Newton iterate: keep the descent result
                if np.abs(F).max() < 1e-15 * g0:
                    break
                J[diag, diag] = -A[diag, diag] + eps * (m - 1.0) * x ** (m - 2.0)
                try:
                    dx = np.linalg.solve(J, -F)
                except np.linalg.LinAlgError:
                    return False
                sc = 1.0
                while np.any(x + sc * dx[:k] <= 0.0) and sc > 1e-4:
                    sc *= 0.5
                x = np.maximum(x + sc * dx[:k], 1e-300)
                C += sc * dx[k]
            new = np.zeros_like(rho)
            new[idx] = x
            if not np.all(np.isfinite(new)) or not (V @ new) > 0:
                return False
            new /= V @ new
            fn, gn = obj(new)
            gb = float(V @ (new * gn))
            kn = _natural_residual(new, gn - gb, g0)
            if best is None or kn < best[2]:
                best = (new, fn, kn, gn)
            S2 = (new > SUPPORT_REL * new.max()) | (gn < gb - 1e-13 * g0)
            if np.array_equal(S2, S):
                break
            S, rho, gbar = S2, new, gb
        new, fn, kn, gn = best
        if fn <= st.f and kn < st.kkt:
            st.rho, st.f, st.grad, st.kkt = new, fn, gn, kn
            st.history.append(fn)
            st.iterations += 1
            return True
        return False
    return run


def _box_kernels(pot, R, opts) -> ShellKernels:
    return assemble_kernels(pot, make_grid(pot.dimension, R, opts.n), opts.angular_n)


def minimize_in_ball(pot: RadialPotential, m: float, epsilon: float, R_box: float,
                     opts: MinimizeOptions | None = None,
                     ker: ShellKernels | None = None) -> MinimizeResult:
    """Minimize the energy over unit-mass densities supported in B_{R_box}.

    Raises NoConvergence (carrying the best iterate) when the residual does
    not reach ``opts.tol``.
    """
    if not m > 1:
        raise ValueError(f"m must exceed 1, got {m}")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    opts = opts or MinimizeOptions()
    ker = ker or _box_kernels(pot, R_box, opts)
    grid = ker.grid
    V = grid.volume_weights
    if opts.init is not None:
        rho0 = normalize_mass(resample(opts.init, grid)).values.copy()
    else:
        rho0 = np.full(grid.n, 1.0 / float(V.sum()))
    obj = _energy_objective(ker, m, epsilon)
    polish = _newton_polish(ker, m, epsilon, obj) if opts.polish else None
    st = _descend(obj, rho0, V, ker.g0, opts.tol, opts.max_iter, polish)
    p = RadialProfile(grid, st.rho)
    res = MinimizeResult(
        epsilon=float(epsilon), m=float(m), R_box=float(grid.R), rho=p, energy=float(st.f),
        support_radius=support_radius(p), kkt_residual=float(st.kkt),
        iterations=st.iterations, converged=bool(st.kkt <= opts.tol),
        initial_energy=float(st.history[0]), energy_history=st.history,
        status="ok" if st.kkt <= opts.tol else ("stalled" if st.stalled else "max_iter"))
    if not res.converged:
        raise NoConvergence(f"box minimization stopped with residual {st.kkt:.2e} "
                            f"> tol {opts.tol:g} ({res.status})", result=res)
    return res


def _saturated(prev: MinimizeResult, cur: MinimizeResult) -> bool:
    gap = max(prev.rho.grid.local_spacing(prev.support_radius),
              cur.rho.grid.local_spacing(cur.support_radius))
    interior = prev.support_radius <= 0.9 * prev.R_box
    return interior and abs(cur.support_radius - prev.support_radius) <= gap


def _box_summary(res: MinimizeResult) -> dict:
    return {"R_box": res.R_box, "support_radius": res.support_radius, "energy": res.energy,
            "kkt_residual": res.kkt_residual, "converged": res.converged}


def _run_box(pot, m, eps, R, opts, init):
    try:
        return minimize_in_ball(pot, m, eps, R, replace(opts, init=init))
    except NoConvergence as exc:
        if exc.result is None:
            raise
        log.info("box R=%g not converged: %s", R, exc)
        return exc.result


def minimize_global(pot: RadialPotential, m: float, epsilon: float,
                    opts: MinimizeOptions | None = None) -> MinimizeResult:
    """Box minimization with doubling radius until the support saturates.

    Each box is started from the previous minimizer, extended by zero.  On
    reaching ``R_cap`` without saturation raises :class:`NoMinimizer` when
    no box produced negative energy, otherwise :class:`UnboundedSupport`.
    A saturated profile with nonnegative energy also raises
    :class:`NoMinimizer`: dilating any density sends E to 0, so it cannot be
    a global minimizer.
    """
    opts = opts or MinimizeOptions()
    ell = pot.length_scale
    R = float(opts.R_start or 2.0 * ell)
    R_cap = float(opts.R_cap or 64.0 * ell)
    if R > R_cap:
        raise ValueError("R_start exceeds R_cap")
    prev = _run_box(pot, m, epsilon, R, opts, opts.init)
    boxes = [_box_summary(prev)]
    while True:
        R_next = 2.0 * prev.R_box
        if R_next > R_cap * (1 + 1e-12):
            break
        cur = _run_box(pot, m, epsilon, R_next, opts, prev.rho)
        boxes.append(_box_summary(cur))
        if _saturated(prev, cur) and prev.converged:
            out = prev if prev.support_radius <= 0.9 * prev.R_box else cur
            out.boxes = boxes
            if out.energy >= 0.0:
                # spreading drives E to 0, so a compact state with E >= 0 is only local
                out.status = "no_minimizer"
                raise NoMinimizer(f"support saturated at {out.support_radius:.4g} but the "
                                  f"energy {out.energy:.3e} is not negative; the box "
                                  f"minimizer is a local one", result=out, history=boxes)
            return out
        prev = cur
    best_E = min(b["energy"] for b in boxes)
    prev.boxes = boxes
    msg = (f"support did not saturate up to R_cap={R_cap:g} "
           f"(last support {prev.support_radius:.4g}, best energy {best_E:.3e})")
    if best_E >= 0.0:
        prev.status = "no_minimizer"
        raise NoMinimizer(msg + "; no negative-energy profile found", result=prev,
                          history=boxes)
    prev.status = "unbounded_support"
    raise UnboundedSupport(msg, result=prev, history=boxes)


# -- eps0: the Rayleigh-type quotient -------------------------------------

def rayleigh_quotient(p: RadialProfile, m: float, ker: ShellKernels) -> float:
    """Q = (m/2) int (G*rho) rho * M^(m-2) / int rho^m, invariant under rho -> c rho.

    On unit-mass profiles this is (m/2) int (G*rho) rho / ||rho||_m^m.
    """
    L, I = energy_terms(p, m, ker)
    M = float(p.grid.volume_weights @ p.values)
    if not (L > 0 and M > 0):
        raise ZeroMass("quotient undefined for the zero profile")
    return float(0.5 * m * I * M ** (m - 2.0) / L)


def _neg_log_q(ker, m):
    KW, V = ker.KW, ker.grid.volume_weights

    def obj(rho):
        c = KW @ rho
        I = float(V @ (rho * c))
        L = float(V @ rho ** m)
        f = -math.log(0.5 * m * I / L)
        return f, -(2.0 * c / I - m * rho ** (m - 1.0) / L)
    return obj


def _initializers(grid):
    r, R = grid.nodes, grid.R
    bump = 1.0 + np.cos(np.pi * r / R)
    return {
        "bump": bump,
        "uniform": np.ones_like(r),
        "two_scale": np.exp(-(r / (0.2 * R)) ** 2) + 0.3 * bump,
    }


@dataclass
class Epsilon0Result:
    epsilon0: float
    maximizer: RadialProfile = field(repr=False)
    R_box: float
    support_radius: float
    kkt_residual: float
    starts: dict = field(default_factory=dict)
    boxes: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.epsilon0, self.maximizer))


def _ascend_box(pot, m, ker, rho0, tol, max_iter):
    V = ker.grid.volume_weights
    st = _descend(_neg_log_q(ker, m), rho0 / (V @ rho0), V, 1.0, tol, max_iter)
    p = RadialProfile(ker.grid, st.rho)
    return math.exp(-st.f), p, st.kkt


def estimate_epsilon0(pot: RadialPotential, m: float, opts: MinimizeOptions | None = None,
                      tol: float = 1e-10) -> Epsilon0Result:
    """Supremum of the quotient over compactly supported profiles, by box growth."""
    if not 1.0 < m < 2.0:
        raise NotApplicable(f"eps0 is defined for 1 < m < 2, got m = {m}")
    opts = opts or MinimizeOptions()
    ell = pot.length_scale
    R = float(opts.R_start or 2.0 * ell)
    R_cap = float(opts.R_cap or 64.0 * ell)
    ker = _box_kernels(pot, R, opts)
    starts = {}
    best = None
    for name, rho0 in _initializers(ker.grid).items():
        q, p, kkt = _ascend_box(pot, m, ker, rho0, tol, opts.max_iter)
        starts[name] = q
        if best is None or q > best[0]:
            best = (q, p, kkt)
    boxes = [{"R_box": R, "epsilon0": best[0], "support_radius": best[1].support_radius(SUPPORT_REL)}]
    while True:
        R_next = 2.0 * R
        if R_next > R_cap * (1 + 1e-12):
            raise UnboundedSupport(f"quotient maximizer support did not saturate up to "
                                   f"R_cap={R_cap:g}; increase the resolution", history=boxes)
        ker_n = _box_kernels(pot, R_next, opts)
        init = normalize_mass(resample(best[1], ker_n.grid)).values
        cur = _ascend_box(pot, m, ker_n, init, tol, opts.max_iter)
        s_prev, s_cur = best[1].support_radius(SUPPORT_REL), cur[1].support_radius(SUPPORT_REL)
        boxes.append({"R_box": R_next, "epsilon0": cur[0], "support_radius": s_cur})
        gap = max(best[1].grid.local_spacing(s_prev), cur[1].grid.local_spacing(s_cur))
        if s_prev <= 0.9 * R and abs(s_cur - s_prev) <= gap:
            q, p, kkt = best
            return Epsilon0Result(q, p, R, s_prev, kkt, starts, boxes)
        best, R = cur, R_next


def epsilon0_upper_bound(pot: RadialPotential, m: float) -> float:
    """(m/2) ||G||_{L^(1/(m-1))}, above which no global minimizer exists."""
    return 0.5 * m * lp_norm_of_G(pot, 1.0 / (m - 1.0))


@dataclass
class Epsilon1Report:
    m: float
    epsilon1_empirical: float | None
    epsilon1_ceiling: float | None
    attained: list = field(default_factory=list)
    failed: list = field(default_factory=list)
    all_below_ceiling: bool | None = None
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error

    def to_dict(self) -> dict:
        return {"m": self.m, "epsilon1_empirical": self.epsilon1_empirical,
                "epsilon1_ceiling": self.epsilon1_ceiling, "attained": self.attained,
                "failed": self.failed, "all_below_ceiling": self.all_below_ceiling,
                "error": self.error}


def default_sweep(pot: RadialPotential) -> list:
    return [f * pot.length_scale for f in (0.5, 1.0, 2.0, 4.0, 8.0, 16.0)]


def stationary_sweep(pot, m, R_list, solver_opts=None) -> tuple[list, list]:
    attained, failed = [], []
    for R in R_list:
        try:
            res = solve_stationary(pot, m, float(R), solver_opts)
            attained.append((float(R), res.epsilon))
        except AggregationError as exc:
            failed.append((float(R), f"{type(exc).__name__}: {exc}"))
    return attained, failed


def summarize_epsilon1(m, attained, failed, epsilon0) -> Epsilon1Report:
    ceiling = None if epsilon0 is None else 2.0 / m * epsilon0
    if not attained:
        return Epsilon1Report(m, None, ceiling, [], failed, None,
                              error="empty sweep: no stationary state computed")
    eps1 = max(e for _, e in attained)
    below = None if ceiling is None else all(e < ceiling for _, e in attained)
    if below is False:
        log.error("attained eps %.6g reaches the ceiling %.6g", eps1, ceiling)
    return Epsilon1Report(m, eps1, ceiling, attained, failed, below)


def estimate_epsilon1(pot: RadialPotential, m: float, opts: MinimizeOptions | None = None,
                      R_list=None, epsilon0: float | None = None,
                      solver_opts: SolverOptions | None = None) -> Epsilon1Report:
    """Largest eps attained by compact stationary states over a sweep of radii.

    This is an empirical lower estimate; the report also carries the
    ceiling (2/m) eps0 that no stationary state may reach.
    """
    if not 1.0 < m < 2.0:
        raise NotApplicable(f"eps1 is defined for 1 < m < 2, got m = {m}")
    R_list = default_sweep(pot) if R_list is None else list(R_list)
    if epsilon0 is None and R_list:
        epsilon0 = estimate_epsilon0(pot, m, opts).epsilon0
    attained, failed = stationary_sweep(pot, m, R_list, solver_opts)
    return summarize_epsilon1(m, attained, failed, epsilon0)


@dataclass
class ThresholdReport:
    m: float
    epsilon0: float
    epsilon0_upper_bound: float
    epsilon1_empirical: float | None
    epsilon1_ceiling: float
    epsilon0_support_radius: float = math.nan
    attained: list = field(default_factory=list)

    @property
    def orderings_hold(self) -> bool:
        ok0 = self.epsilon0 <= self.epsilon0_upper_bound + 1e-8
        ok1 = self.epsilon1_empirical is not None and self.epsilon1_empirical < self.epsilon1_ceiling
        return bool(ok0 and ok1)

    def to_dict(self) -> dict:
        return {"m": self.m, "epsilon0": self.epsilon0,
                "epsilon0_upper_bound": self.epsilon0_upper_bound,
                "epsilon1_empirical": self.epsilon1_empirical,
                "epsilon1_ceiling": self.epsilon1_ceiling,
                "epsilon0_support_radius": self.epsilon0_support_radius,
                "attained": [list(a) for a in self.attained],
                "orderings_hold": self.orderings_hold}


def threshold_report(pot: RadialPotential, m: float, opts: MinimizeOptions | None = None,
                     R_list=None, solver_opts: SolverOptions | None = None) -> ThresholdReport:
    e0 = estimate_epsilon0(pot, m, opts)
    e1 = estimate_epsilon1(pot, m, opts, R_list, e0.epsilon0, solver_opts)
    return ThresholdReport(m, e0.epsilon0, epsilon0_upper_bound(pot, m), e1.epsilon1_empirical,
                           2.0 / m * e0.epsilon0, e0.support_radius, e1.attained)
