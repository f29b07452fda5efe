"""Spherical-shell kernels K(r, s), H(r, s) and the radial convolution operators.

For N >= 2 a shell integral of a radial function F over the sphere of
radius s, seen from the point r*e1, reduces to one angle:

    int_{|y|=s} F(|r e1 - y|) dsigma(y)
        = omega_{N-1} s^{N-1} int_0^pi F(sqrt(r^2 + s^2 - 2 r s cos t)) sin(t)^{N-2} dt.

Write y = s (cos t, sin t * z) with z on the unit sphere of R^{N-1}; the
distance depends only on t and the surface element is
s^{N-1} sin(t)^{N-2} dt dsigma_{N-1}(z), which integrates to omega_{N-1}.
H carries the extra factor y.e1/|y| = cos t.  In one dimension the shell is
the two points {s, -s}, so K = g(|r-s|) + g(r+s) and H = g(|r-s|) - g(r+s).

The integrand depends on the angle only through r^2 + s^2 - 2rs cos t, and
both shipped potentials are analytic in the squared distance, so
Gauss--Legendre in t converges spectrally; it only needs more nodes when
rs / l^2 is large and the integrand peaks sharply at t = 0.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, GridMismatch, QuadratureUnderResolved
from .potential import RadialPotential, unit_sphere_area
from .radial_grid import CSV_FLOAT, RadialGrid, RadialProfile

log = logging.getLogger(__name__)

CACHE_ENV = "AGGR_CACHE_DIR"
CACHE_VERSION = 1
CAUCHY_TOL = 1e-8
FAIL_TOL = 1e-6
MAX_ANGULAR = 4096
_CHUNK_BUDGET = 2_000_000  # rows * cols * angles evaluated at once


@dataclass(frozen=True, eq=False)
class ShellKernels:
    grid: RadialGrid
    K: np.ndarray = field(repr=False)
    H: np.ndarray = field(repr=False)
    potential: RadialPotential
    angular_n: int = 0

    @cached_property
    def KW(self) -> np.ndarray:
        """K with the quadrature weights folded into the columns."""
        return self.K * self.grid.quad_weights[None, :]

    @cached_property
    def HW(self) -> np.ndarray:
        return self.H * self.grid.quad_weights[None, :]

    @property
    def g0(self) -> float:
        return self.potential.g0

    def to_csv(self, path=None) -> str:
        r = self.grid.nodes
        lines = ["i,j,r,s,K,H"]
        for i in range(self.grid.n):
            for j in range(self.grid.n):
                lines.append(f"{i},{j},{CSV_FLOAT % r[i]},{CSV_FLOAT % r[j]},"
                             f"{CSV_FLOAT % self.K[i, j]},{CSV_FLOAT % self.H[i, j]}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def _legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    t, w = np.polynomial.legendre.leggauss(n)
    return (t + 1.0) * (np.pi / 2.0), w * (np.pi / 2.0)


def _angular_block(pot, r, s, N, na):
    """Unscaled angular integrals for rows r and columns s at ``na`` nodes."""
    th, wt = _legendre(na)
    cos_t = np.cos(th)
    wk = wt * np.sin(th) ** (N - 2)
    wh = wk * cos_t
    rs = r[:, None] * s[None, :]
    r2s2 = r[:, None] ** 2 + s[None, :] ** 2
    d2 = np.maximum(r2s2[:, :, None] - 2.0 * rs[:, :, None] * cos_t, 0.0)
    gv = pot.g(np.sqrt(d2))
    return gv @ wk, gv @ wh


def kernel_matrices(pot: RadialPotential, r_eval, s_nodes, N: int | None = None,
                    angular_n: int = 64) -> tuple[np.ndarray, np.ndarray, int]:
    """K(r_i, s_j) and H(r_i, s_j) at arbitrary radii.

    Returns ``(K, H, angular_n_used)``.  The angular rule is doubled, one
    block of rows at a time, until successive K and H agree entrywise to
    1e-8 of the block's largest entry.
    """
    N = pot.dimension if N is None else int(N)
    if N != pot.dimension:
        raise DimensionMismatch(f"potential has N={pot.dimension}, asked for N={N}")
    r = np.atleast_1d(np.asarray(r_eval, dtype=float))
    s = np.atleast_1d(np.asarray(s_nodes, dtype=float))
    if N == 1:
        a, b = pot.g(np.abs(r[:, None] - s[None, :])), pot.g(r[:, None] + s[None, :])
        return a + b, a - b, 0
    if angular_n < 16:
        raise ValueError(f"angular_n must be >= 16 for N >= 2, got {angular_n}")
    scale = unit_sphere_area(N - 1) * s ** (N - 1)
    K = np.empty((r.size, s.size))
    H = np.empty((r.size, s.size))
    used = angular_n
    # rows sorted so large radii (which need the finest rule) are grouped
    order = np.argsort(r, kind="stable")
    na = int(angular_n)
    start = 0
    while start < r.size:
        rows_per = max(1, _CHUNK_BUDGET // max(1, s.size * 2 * na))
        idx = order[start:start + rows_per]
        rb = r[idx]
        k0, h0 = _angular_block(pot, rb, s, N, na)
        while True:
            k1, h1 = _angular_block(pot, rb, s, N, 2 * na)
            top = max(np.abs(k1).max(), 1e-300)
            diff = max(np.abs(k1 - k0).max(), np.abs(h1 - h0).max()) / top
            if diff <= CAUCHY_TOL:
                break
            if 2 * na >= MAX_ANGULAR:
                if diff > FAIL_TOL:
                    raise QuadratureUnderResolved(
                        f"angular rule still changes entries by {diff:.2e} at {2 * na} nodes "
                        f"(r up to {rb.max():.4g})")
                log.warning("angular rule at cap %d, Cauchy change %.2e", 2 * na, diff)
                break
            na *= 2
            k0, h0 = k1, h1
        K[idx] = k1 * scale
        H[idx] = h1 * scale
        used = max(used, 2 * na)
        start += idx.size
    # exact constant-shell values at the origin
    at0 = r == 0.0
    if at0.any():
        K[at0] = unit_sphere_area(N) * s ** (N - 1) * pot.g(s)
        H[at0] = 0.0
    return K, H, used


def _cache_path(cache_dir, pot: RadialPotential, grid: RadialGrid, angular_n: int) -> Path:
    key = json.dumps({"family": pot.family, "params": sorted(pot.params.items()),
                      "amplitude": pot.amplitude, "N": grid.N, "R": repr(grid.R),
                      "n": grid.n, "angular_n": angular_n, "version": CACHE_VERSION},
                     sort_keys=True)
    digest = hashlib.sha256(key.encode()).hexdigest()[:32]
    return Path(cache_dir) / f"kernels-{digest}.npz"


def assemble_kernels(pot: RadialPotential, grid: RadialGrid, angular_n: int = 64,
                     cache_dir: str | os.PathLike | None = None) -> ShellKernels:
    """Dense K and H on the grid nodes.

    ``cache_dir`` (default: the ``AGGR_CACHE_DIR`` environment variable, no
    caching when unset) stores assembled matrices as ``.npz`` files keyed by
    a hash of the potential, grid and angular resolution.
    """
    if pot.dimension != grid.N:
        raise DimensionMismatch(f"potential dimension {pot.dimension} != grid dimension {grid.N}")
    if grid.N >= 2 and angular_n < 16:
        raise ValueError(f"angular_n must be >= 16 for N >= 2, got {angular_n}")
    if cache_dir is None:
        cache_dir = os.environ.get(CACHE_ENV) or None
    path = _cache_path(cache_dir, pot, grid, angular_n) if cache_dir else None
    if path is not None and path.exists():
        with np.load(path) as data:
            K, H, used = data["K"], data["H"], int(data["angular_n"])
        log.debug("kernel cache hit %s", path.name)
    else:
        K, H, used = kernel_matrices(pot, grid.nodes, grid.nodes, grid.N, angular_n)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp.npz")
            np.savez(tmp, K=K, H=H, angular_n=used)
            os.replace(tmp, path)
    K.setflags(write=False)
    H.setflags(write=False)
    return ShellKernels(grid, K, H, pot, used)


def _check(ker: ShellKernels, p: RadialProfile):
    if not ker.grid.same_as(p.grid):
        raise GridMismatch("profile and kernels live on different grids")


def convolve(ker: ShellKernels, p: RadialProfile) -> RadialProfile:
    """Radial representative of G*rho at the grid nodes."""
    _check(ker, p)
    return RadialProfile(ker.grid, ker.KW @ p.values)


def apply_H(ker: ShellKernels, u: RadialProfile) -> RadialProfile:
    _check(ker, u)
    return RadialProfile(ker.grid, ker.HW @ u.values)


def boundary_convolution(ker: ShellKernels, p: RadialProfile) -> float:
    """(G*rho)(R)."""
    _check(ker, p)
    return float(ker.KW[-1] @ p.values)


def convolve_at(pot: RadialPotential, p: RadialProfile, r, angular_n: int = 64) -> np.ndarray:
    """(G*rho)(r) at arbitrary radii, using fresh kernel rows at ``r``."""
    K, _, _ = kernel_matrices(pot, r, p.grid.nodes, p.grid.N, angular_n)
    return K @ (p.grid.quad_weights * p.values)
