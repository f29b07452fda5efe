"""Energy and first variation of radial profiles, shared by the solvers."""
from __future__ import annotations

import numpy as np

from .radial_grid import RadialProfile
from .shell_kernel import ShellKernels, _check


def _validate_m(m: float):
    if not m > 1:
        raise ValueError(f"m must exceed 1, got {m}")


def energy(p: RadialProfile, m: float, epsilon: float, ker: ShellKernels) -> float:
    """E = (eps/m) int rho^m - 1/2 int rho (G*rho), by the grid quadrature."""
    _check(ker, p)
    _validate_m(m)
    V = p.grid.volume_weights
    rho = p.values
    return float((epsilon / m) * (V @ np.abs(rho) ** m) - 0.5 * (V @ (rho * (ker.KW @ rho))))


def energy_terms(p: RadialProfile, m: float, ker: ShellKernels) -> tuple[float, float]:
    """(int rho^m, int rho (G*rho)) for reuse across several epsilon values."""
    _check(ker, p)
    V = p.grid.volume_weights
    rho = p.values
    return float(V @ np.abs(rho) ** m), float(V @ (rho * (ker.KW @ rho)))


def first_variation(p: RadialProfile, m: float, epsilon: float, ker: ShellKernels) -> RadialProfile:
    """v = eps rho^(m-1) - G*rho, the L2(volume) gradient of the energy."""
    _check(ker, p)
    _validate_m(m)
    rho = np.abs(p.values)
    return p.with_values(epsilon * rho ** (m - 1.0) - ker.KW @ p.values)
