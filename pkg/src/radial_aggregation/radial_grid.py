"""Radial grids on [0, R] and radially symmetric profiles sampled on them.

Nodes are Chebyshev--Lobatto points mapped to [0, R] with Clenshaw--Curtis
weights: both endpoints are nodes (the origin row of the kernels and the
boundary value (G*rho)(R) are needed explicitly), all weights are positive,
and the rule converges spectrally on smooth integrands.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.interpolate import PchipInterpolator

from .errors import BadResolution, DimensionMismatch, ZeroMass
from .potential import ball_volume, unit_sphere_area

CSV_FLOAT = "%.17g"


def clenshaw_curtis(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Ascending Chebyshev--Lobatto nodes on [-1, 1] and their CC weights."""
    M = n - 1
    theta = np.pi * np.arange(n) / M
    x = -np.cos(theta)
    x[0], x[-1] = -1.0, 1.0
    if n % 2 == 1:
        x[M // 2] = 0.0
    w = np.empty(n)
    v = np.ones(M - 1)
    inner = theta[1:-1]
    if M % 2 == 0:
        w[0] = w[-1] = 1.0 / (M * M - 1)
        for k in range(1, M // 2):
            v -= 2.0 * np.cos(2 * k * inner) / (4 * k * k - 1)
        v -= np.cos(M * inner) / (M * M - 1)
    else:
        w[0] = w[-1] = 1.0 / (M * M)
        for k in range(1, (M - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * inner) / (4 * k * k - 1)
    w[1:-1] = 2.0 * v / M
    return x, w


@dataclass(frozen=True, eq=False)
class RadialGrid:
    N: int
    R: float
    n: int
    nodes: np.ndarray = field(repr=False)
    quad_weights: np.ndarray = field(repr=False)
    volume_weights: np.ndarray = field(repr=False)

    def same_as(self, other: "RadialGrid") -> bool:
        return (self is other) or (
            self.N == other.N and self.n == other.n and self.R == other.R
            and np.array_equal(self.nodes, other.nodes))

    @cached_property
    def spacing(self) -> np.ndarray:
        return np.diff(self.nodes)

    def local_spacing(self, r: float) -> float:
        """Larger of the two node gaps adjacent to radius ``r``."""
        i = int(np.clip(np.searchsorted(self.nodes, r), 1, self.n - 1))
        lo = self.spacing[i - 1]
        hi = self.spacing[i] if i < self.n - 1 else lo
        return float(max(lo, hi))

    @cached_property
    def tail_integration_matrix(self) -> np.ndarray:
        """Matrix T with (T @ u)[i] = int_{r_i}^R u(s) ds for the interpolant of u."""
        x = 2.0 * self.nodes / self.R - 1.0
        V = C.chebvander(x, self.n - 1)
        Vinv = np.linalg.inv(V)
        # antiderivative of T_k with value 0 at x = 1, evaluated at the nodes
        anti = np.empty((self.n, self.n))
        for k in range(self.n):
            e = np.zeros(self.n)
            e[k] = 1.0
            ck = C.chebint(e, lbnd=1.0)
            anti[:, k] = C.chebval(x, ck)
        # int_{x_i}^{1} = -anti(x_i); dr = R/2 dx
        return -(self.R / 2.0) * anti @ Vinv

    @property
    def ball_volume(self) -> float:
        return ball_volume(self.N, self.R)

    def to_dict(self) -> dict:
        return {"N": self.N, "R": self.R, "n": self.n}


def make_grid(N: int, R: float, n: int) -> RadialGrid:
    """Closed Clenshaw--Curtis grid with ``n`` nodes on [0, R] for dimension ``N``."""
    if n < 8:
        raise BadResolution(f"need at least 8 nodes, got {n}")
    if N < 1:
        raise DimensionMismatch(f"dimension must be >= 1, got {N}")
    if not R > 0:
        raise ValueError(f"R must be positive, got {R}")
    x, w = clenshaw_curtis(int(n))
    R = float(R)
    nodes = (x + 1.0) * (R / 2.0)
    nodes[0], nodes[-1] = 0.0, R
    quad = w * (R / 2.0)
    vol = quad * unit_sphere_area(N) * nodes ** (N - 1)
    for a in (nodes, quad, vol):
        a.setflags(write=False)
    return RadialGrid(int(N), R, int(n), nodes, quad, vol)


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Radial function sampled at the nodes of a :class:`RadialGrid`.

    Densities are nonnegative; the same container also carries derived
    fields such as G*rho or the first variation, which need not be.
    """

    grid: RadialGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    def with_values(self, values) -> "RadialProfile":
        return RadialProfile(self.grid, values)

    def is_nonincreasing(self, rtol: float = 1e-10) -> bool:
        v = self.values
        return bool(np.all(np.diff(v) <= rtol * max(abs(v).max(), 1e-300)))

    def support_radius(self, rel: float = 1e-10) -> float:
        v = self.values
        idx = np.nonzero(v > rel * v.max())[0] if v.max() > 0 else []
        return float(self.grid.nodes[idx.max()]) if len(idx) else 0.0

    def __call__(self, r):
        """Monotone cubic interpolant, zero outside [0, R]."""
        f = PchipInterpolator(self.grid.nodes, self.values, extrapolate=False)
        out = np.nan_to_num(f(np.asarray(r, dtype=float)), nan=0.0)
        return np.maximum(out, 0.0)

    # -- serialization ---------------------------------------------------
    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write("r,rho\n")
        for r, v in zip(self.grid.nodes, self.values):
            buf.write(f"{CSV_FLOAT % r},{CSV_FLOAT % v}\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_dict(self) -> dict:
        return {"grid": self.grid.to_dict(), "r": self.grid.nodes.tolist(),
                "rho": self.values.tolist()}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "RadialProfile":
        g = d["grid"]
        grid = make_grid(int(g["N"]), float(g["R"]), int(g["n"]))
        return cls(grid, np.asarray(d["rho"], dtype=float))

    @classmethod
    def from_json(cls, path) -> "RadialProfile":
        return cls.from_dict(json.loads(Path(path).read_text()))

    @classmethod
    def from_csv(cls, path, N: int) -> "RadialProfile":
        """Read an (r, rho) CSV written by :meth:`to_csv`; the nodes must form a grid."""
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        r = np.array([float(row["r"]) for row in rows])
        rho = np.array([float(row["rho"]) for row in rows])
        grid = make_grid(N, float(r[-1]), len(r))
        if not np.allclose(grid.nodes, r, rtol=1e-14, atol=1e-14 * r[-1]):
            raise ValueError("CSV radii do not match a Clenshaw-Curtis grid")
        return cls(grid, rho)


def profile_from_function(grid: RadialGrid, f) -> RadialProfile:
    return RadialProfile(grid, np.asarray(f(grid.nodes), dtype=float))


def mass(p: RadialProfile) -> float:
    return float(p.grid.volume_weights @ p.values)


def lm_norm_m(p: RadialProfile, m: float) -> float:
    """||rho||_{L^m}^m (the integral of rho^m, without any prefactor)."""
    if not m > 1:
        raise ValueError(f"m must exceed 1, got {m}")
    return float(p.grid.volume_weights @ np.abs(p.values) ** m)


def normalize_mass(p: RadialProfile) -> RadialProfile:
    M = mass(p)
    if not M > 0:
        raise ZeroMass("profile has zero mass")
    out = p.values / M
    # one correction step pushes the mass error to rounding level
    out = out / float(p.grid.volume_weights @ out)
    return p.with_values(out)


def resample(p: RadialProfile, g2: RadialGrid) -> RadialProfile:
    """Monotone cubic transfer of ``p`` onto ``g2``; zero beyond the old radius."""
    if g2.N != p.grid.N:
        raise DimensionMismatch(f"cannot resample N={p.grid.N} profile onto N={g2.N} grid")
    if g2.same_as(p.grid):
        return p
    vals = p(g2.nodes)
    vals[g2.nodes > p.grid.R * (1 + 1e-14)] = 0.0
    return RadialProfile(g2, vals)


def l1_distance(p: RadialProfile, q: RadialProfile) -> float:
    """L1(R^N) distance, evaluated on the grid of ``p`` after resampling ``q``."""
    if q.grid.R > p.grid.R and not q.grid.same_as(p.grid):
        p, q = q, p
    q = resample(q, p.grid)
    return float(p.grid.volume_weights @ np.abs(p.values - q.values))
