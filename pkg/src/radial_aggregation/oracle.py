"""Brute-force reference computations used to validate the radial fast path.

Nothing here is used by the solvers.  Cartesian fields live on a midpoint
tensor grid over [-L, L]^N (N <= 2) and every convolution is a direct
double sum; the 1-D eigen oracle builds its own matrix from g and solves
it densely.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, ResolutionTooLarge
from .potential import RadialPotential
from .radial_grid import CSV_FLOAT, RadialProfile, make_grid

MAX_CELLS_PER_AXIS = 256
_CHUNK = 1_000_000


@dataclass(frozen=True, eq=False)
class CartesianField:
    N: int
    L: float
    n_c: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.N not in (1, 2):
            raise DimensionMismatch(f"Cartesian oracle supports N in {{1, 2}}, got {self.N}")
        if self.n_c > MAX_CELLS_PER_AXIS:
            raise ResolutionTooLarge(f"n_c={self.n_c} exceeds the oracle cap {MAX_CELLS_PER_AXIS}")
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.n_c,) * self.N:
            raise ValueError(f"values must have shape {(self.n_c,) * self.N}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n_c

    @property
    def axis(self) -> np.ndarray:
        return -self.L + (np.arange(self.n_c) + 0.5) * self.h

    @property
    def points(self) -> np.ndarray:
        """Cell centres, shape (cells, N)."""
        ax = self.axis
        if self.N == 1:
            return ax[:, None]
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], axis=1)

    @property
    def radii(self) -> np.ndarray:
        return np.sqrt((self.points ** 2).sum(axis=1)).reshape(self.values.shape)

    @property
    def cell_volume(self) -> float:
        return self.h ** self.N

    def with_values(self, values) -> "CartesianField":
        return CartesianField(self.N, self.L, self.n_c, values)

    def integral(self) -> float:
        return float(self.values.sum() * self.cell_volume)

    def to_csv(self, path=None) -> str:
        pts = self.points
        cols = ["x", "y"][: self.N] + ["value"]
        lines = [",".join(cols)]
        for p, v in zip(pts, self.values.ravel()):
            lines.append(",".join(CSV_FLOAT % c for c in (*p, v)))
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def make_field(N: int, L: float, n_c: int, f=None) -> CartesianField:
    """Field with values f(|x|) at the cell centres (zero when f is None)."""
    shape = (n_c,) * N
    tmp = CartesianField(N, L, n_c, np.zeros(shape))
    if f is None:
        return tmp
    return tmp.with_values(np.asarray(f(tmp.radii), dtype=float).reshape(shape))


def radialize(p: RadialProfile, L: float, n_c: int) -> CartesianField:
    """Sample a radial profile on the Cartesian grid (monotone interpolation in r)."""
    return make_field(p.grid.N, L, n_c, p)


def full_convolution(pot: RadialPotential, f: CartesianField) -> CartesianField:
    """(G*f)(x_i) = sum_j g(|x_i - x_j|) f_j h^N by direct summation."""
    if pot.dimension != f.N:
        raise DimensionMismatch(f"potential N={pot.dimension} but field N={f.N}")
    pts = f.points
    src = f.values.ravel()
    nz = np.nonzero(src)[0]
    out = np.zeros(pts.shape[0])
    if nz.size == 0:
        return f.with_values(out.reshape(f.values.shape))
    ps, fs = pts[nz], src[nz]
    rows = max(1, _CHUNK // nz.size)
    for a in range(0, pts.shape[0], rows):
        d = pts[a:a + rows, None, :] - ps[None, :, :]
        out[a:a + rows] = pot.g(np.sqrt((d * d).sum(axis=2))) @ fs
    return f.with_values((out * f.cell_volume).reshape(f.values.shape))


def full_energy(pot: RadialPotential, f: CartesianField, m: float, epsilon: float,
                conv: CartesianField | None = None) -> float:
    """(eps/m) int f^m - 1/2 int f (G*f) on the Cartesian grid.

    ``conv`` may pass a precomputed ``full_convolution(pot, f)``.
    """
    if not m > 1:
        raise ValueError(f"m must exceed 1, got {m}")
    conv = (conv if conv is not None else full_convolution(pot, f)).values
    dv = f.cell_volume
    return float((epsilon / m) * (np.abs(f.values) ** m).sum() * dv
                 - 0.5 * (f.values * conv).sum() * dv)


def dense_spectrum(A) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues sorted by decreasing magnitude and the principal eigenvector.

    The eigenvector is real, sup-normalized and signed to be nonnegative.
    """
    ev, vec = np.linalg.eig(np.asarray(A, dtype=float))
    order = np.argsort(-np.abs(ev), kind="stable")
    ev, vec = ev[order], vec[:, order]
    u = np.real(vec[:, 0])
    u = u / u[np.argmax(np.abs(u))]
    return ev, u


def dense_eig_1d_matrix(pot: RadialPotential, L: float, n: int) -> np.ndarray:
    """Collocation matrix w_j (g(|x_i - y_j|) - g(x_i + y_j)) on the radial grid of [0, L]."""
    if pot.dimension != 1:
        raise DimensionMismatch("the dense eigen oracle is one-dimensional")
    grid = make_grid(1, L, n)
    x = grid.nodes
    return (pot.g(np.abs(x[:, None] - x[None, :])) - pot.g(x[:, None] + x[None, :])) \
        * grid.quad_weights[None, :]


def dense_eig_1d(pot: RadialPotential, L: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """All eigenvalue magnitudes (descending) and the principal eigenvector."""
    ev, u = dense_spectrum(dense_eig_1d_matrix(pot, L, n))
    return np.abs(ev), np.maximum(u, 0.0)
