"""Radial interaction potentials G(x) = g(|x|) normalized to unit L1 mass.

Two families with closed-form profiles are provided:

``gaussian``
    f(r) = exp(-r^2 / (2 sigma^2))
``inverse_multiquadric``
    f(r) = (1 + r^2 / a^2)^(-p),  p > N/2

Both are functions of r^2, so every shell integral of G is analytic in
(r, s) and the angular quadrature converges spectrally.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np
from scipy import integrate, special

from .errors import DivergentIntegral, InadmissibleParams

FAMILIES = ("gaussian", "inverse_multiquadric")
_ALIASES = {
    "gaussian": "gaussian",
    "gauss": "gaussian",
    "inverse_multiquadric": "inverse_multiquadric",
    "inversemultiquadric": "inverse_multiquadric",
    "imq": "inverse_multiquadric",
}


def unit_sphere_area(N: int) -> float:
    """Surface area of the unit sphere in R^N (2 for N = 1)."""
    return 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)


def ball_volume(N: int, R: float) -> float:
    return unit_sphere_area(N) * R**N / N


def canonical_family(family: str) -> str:
    key = str(family).replace("-", "_").replace(" ", "").lower()
    if key not in _ALIASES:
        key = key.replace("_", "")
    try:
        return _ALIASES[key]
    except KeyError:
        raise InadmissibleParams(f"unknown potential family {family!r}; expected one of {FAMILIES}")


@dataclass(frozen=True)
class RadialPotential:
    """Normalized radial potential; evaluate with :meth:`g` and its derivatives.

    ``amplitude`` multiplies the normalized profile.  It is 1 for every
    potential built by :func:`make_potential`; :meth:`scaled` exists so tests
    can probe how solutions respond to an un-normalized kernel.
    """

    family: str
    params: Mapping[str, float]
    dimension: int
    norm_const: float
    amplitude: float = 1.0

    # -- profile ---------------------------------------------------------
    @property
    def length_scale(self) -> float:
        return self.params["sigma"] if self.family == "gaussian" else self.params["a"]

    def _c(self) -> float:
        return self.norm_const * self.amplitude

    def g(self, r):
        r = np.asarray(r, dtype=float)
        if self.family == "gaussian":
            s2 = self.params["sigma"] ** 2
            return self._c() * np.exp(-0.5 * r * r / s2)
        a2, p = self.params["a"] ** 2, self.params["p"]
        return self._c() * (1.0 + r * r / a2) ** (-p)

    def g_prime(self, r):
        r = np.asarray(r, dtype=float)
        if self.family == "gaussian":
            s2 = self.params["sigma"] ** 2
            return -(r / s2) * self.g(r)
        a2, p = self.params["a"] ** 2, self.params["p"]
        return self._c() * (-2.0 * p * r / a2) * (1.0 + r * r / a2) ** (-p - 1.0)

    def g_second(self, r):
        r = np.asarray(r, dtype=float)
        if self.family == "gaussian":
            s2 = self.params["sigma"] ** 2
            return (r * r / s2**2 - 1.0 / s2) * self.g(r)
        a2, p = self.params["a"] ** 2, self.params["p"]
        x = 1.0 + r * r / a2
        return self._c() * (
            -2.0 * p / a2 * x ** (-p - 1.0) + 4.0 * p * (p + 1.0) * r * r / a2**2 * x ** (-p - 2.0)
        )

    @property
    def g0(self) -> float:
        return float(self.g(0.0))

    # -- tails -----------------------------------------------------------
    def tail_mass(self, r: float, power: float = 1.0) -> float:
        """Exact value of omega_N * int_r^inf g^power t^(N-1) dt, relative to the full integral."""
        N = self.dimension
        if self.family == "gaussian":
            s2 = self.params["sigma"] ** 2 / power
            return float(special.gammaincc(N / 2.0, r * r / (2.0 * s2)))
        a2, p = self.params["a"] ** 2, self.params["p"] * power
        T = r * r / a2
        return float(special.betaincc(N / 2.0, p - N / 2.0, T / (1.0 + T)))

    def decay_radius(self, level: float = 1e-3) -> float:
        """Radius where g(r) / g(0) drops to ``level``."""
        if self.family == "gaussian":
            return self.params["sigma"] * math.sqrt(2.0 * math.log(1.0 / level))
        a, p = self.params["a"], self.params["p"]
        return a * math.sqrt(level ** (-1.0 / p) - 1.0)

    @property
    def algebraic_tail(self) -> bool:
        return self.family == "inverse_multiquadric"

    def scaled(self, factor: float) -> "RadialPotential":
        """Copy with amplitude multiplied by ``factor`` (breaks unit normalization)."""
        return RadialPotential(self.family, dict(self.params), self.dimension, self.norm_const,
                               self.amplitude * factor)

    def to_dict(self) -> dict:
        return {"family": self.family, "params": dict(self.params), "dimension": self.dimension}

    def cache_key(self) -> tuple:
        return (self.family, tuple(sorted(self.params.items())), self.dimension, self.amplitude)


def make_potential(family: str, params: Mapping[str, float], N: int) -> RadialPotential:
    """Build a normalized potential of the given family in dimension ``N``."""
    family = canonical_family(family)
    if not isinstance(N, (int, np.integer)) or isinstance(N, bool) or N < 1:
        raise InadmissibleParams(f"dimension must be an integer >= 1, got {N!r}")
    N = int(N)
    params = {k: float(v) for k, v in dict(params).items()}
    omega = unit_sphere_area(N)
    if family == "gaussian":
        sigma = params.get("sigma")
        if sigma is None or not math.isfinite(sigma) or sigma <= 0:
            raise InadmissibleParams(f"gaussian potential needs sigma > 0, got {sigma!r}")
        params = {"sigma": sigma}
        c = (2.0 * math.pi * sigma**2) ** (-N / 2.0)
    else:
        a, p = params.get("a"), params.get("p")
        if a is None or not math.isfinite(a) or a <= 0:
            raise InadmissibleParams(f"inverse multiquadric needs a > 0, got {a!r}")
        if p is None or not math.isfinite(p) or p <= N / 2.0:
            raise InadmissibleParams(
                f"inverse multiquadric needs p > N/2 = {N / 2} for integrability, got {p!r}")
        params = {"a": a, "p": p}
        # int_0^inf (1 + r^2/a^2)^-p r^(N-1) dr = a^N B(N/2, p - N/2) / 2
        c = 2.0 / (omega * a**N * special.beta(N / 2.0, p - N / 2.0))
    return RadialPotential(family, params, N, float(c))


def potential_from_dict(d: Mapping) -> RadialPotential:
    return make_potential(d["family"], d.get("params", {}), d["dimension"])


def eval_g(pot: RadialPotential, r):
    return pot.g(r)


def eval_g_prime(pot: RadialPotential, r):
    return pot.g_prime(r)


def lp_norm_of_G(pot: RadialPotential, p: float) -> float:
    """||G||_{L^p(R^N)} by adaptive radial quadrature (``p = inf`` gives g(0))."""
    if p == math.inf:
        return pot.g0
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    N = pot.dimension
    if pot.family == "inverse_multiquadric" and 2.0 * pot.params["p"] * p <= N:
        raise DivergentIntegral(f"g^{p} r^{N - 1} is not integrable at infinity")
    omega = unit_sphere_area(N)
    ell = pot.length_scale
    # pull the constant out so the integrand is O(1) near the origin
    c = pot.g0

    def integrand(r):
        return (pot.g(r) / c) ** p * r ** (N - 1)

    split = 8.0 * ell
    head, _ = integrate.quad(integrand, 0.0, split, epsabs=0.0, epsrel=1e-13, limit=200)
    tail, _ = integrate.quad(integrand, split, math.inf, epsabs=0.0, epsrel=1e-13, limit=200)
    total = omega * (head + tail)
    if not math.isfinite(total) or total <= 0:
        raise DivergentIntegral("radial L^p integral did not converge")
    return c * total ** (1.0 / p)


@dataclass
class ValidationReport:
    positive: bool
    decreasing: bool
    concave_at_origin: bool
    decays: bool
    normalized: bool
    min_g: float
    max_g_prime: float
    g_second_origin: float
    decay_ratio: float
    normalization_residual: float
    r_max: float
    samples: int
    slow_decay: bool = False
    notes: list = field(default_factory=list)

    FLAGS = ("positive", "decreasing", "concave_at_origin", "decays", "normalized")

    @property
    def all_passed(self) -> bool:
        return all(getattr(self, f) for f in self.FLAGS)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["all_passed"] = self.all_passed
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def validate_assumptions(pot: RadialPotential, r_max: float | None = None,
                         samples: int = 256) -> ValidationReport:
    """Check positivity, strict decrease, g''(0) < 0, decay and unit mass numerically.

    Failures are reported in the flags, never raised.
    """
    if samples < 16:
        raise ValueError("samples must be >= 16")
    if r_max is None:
        r_max = 1.5 * pot.decay_radius(1e-3)
    if r_max <= 0:
        raise ValueError("r_max must be positive")
    N = pot.dimension
    r = np.linspace(0.0, r_max, samples)
    gv = np.asarray(pot.g(r), dtype=float)
    gp = np.asarray(pot.g_prime(r[1:]), dtype=float)
    g0 = float(gv[0])

    h = 1e-4 * pot.length_scale
    g2 = 2.0 * (float(pot.g(h)) - g0) / h**2

    decay_ratio = float(pot.g(r_max)) / g0 if g0 > 0 else math.inf
    omega = unit_sphere_area(N)
    head, _ = integrate.quad(lambda t: float(pot.g(t)) * t ** (N - 1), 0.0, r_max,
                             epsabs=0.0, epsrel=1e-13, limit=400)
    total = omega * head + pot.tail_mass(r_max) * pot.amplitude
    resid = abs(total - 1.0)

    notes = []
    slow = pot.algebraic_tail or pot.tail_mass(r_max) > 1e-6
    if slow:
        notes.append(f"slow decay: tail mass beyond r_max = {pot.tail_mass(r_max):.3e}")
    return ValidationReport(
        positive=bool(np.all(gv > 0)),
        decreasing=bool(np.all(gp < 0)),
        concave_at_origin=bool(g2 < -1e-10),
        decays=bool(decay_ratio < 1e-3),
        normalized=bool(resid < 1e-8),
        min_g=float(gv.min()),
        max_g_prime=float(gp.max()),
        g_second_origin=float(g2),
        decay_ratio=decay_ratio,
        normalization_residual=float(resid),
        r_max=float(r_max),
        samples=int(samples),
        slow_decay=bool(slow),
        notes=notes,
    )
