"""Catalog flux functions, their derivatives and growth majorants."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)

_DEFAULT_GROWTH = {"burgers": (1.0, 2), "linear": (1.0, 1), "cubic": (3.0, 3)}


@dataclass(frozen=True)
class FluxModel:
    """Scalar flux profile ``A(u)`` acting along a unit ``direction``.

    ``burgers``: u^2/2, ``linear``: c u, ``cubic``: u^3/3.  The growth pair
    ``(growth_C, growth_p)`` defines ``Gamma(xi, zeta) = C (1 + |xi|^{p-1} + |zeta|^{p-1})``.
    """

    name: str = "burgers"
    c: float = 1.0
    growth_C: float | None = None
    growth_p: int | None = None
    direction: tuple = (1.0,)

    def __post_init__(self):
        if self.name not in _DEFAULT_GROWTH:
            raise ValueError(f"unknown flux {self.name!r}")
        C, p = _DEFAULT_GROWTH[self.name]
        if self.growth_C is None:
            object.__setattr__(self, "growth_C", C)
        if self.growth_p is None:
            object.__setattr__(self, "growth_p", p)
        d = np.asarray(self.direction, dtype=float)
        if not math.isclose(float(np.linalg.norm(d)), 1.0, rel_tol=1e-12):
            raise ValueError("direction must be a unit vector")
        object.__setattr__(self, "direction", tuple(float(c) for c in d))

    @property
    def dim(self) -> int:
        return len(self.direction)

    def A(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.name == "burgers":
            return 0.5 * xi * xi
        if self.name == "linear":
            return self.c * xi
        return xi ** 3 / 3.0

    def a(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.name == "burgers":
            return xi.copy()
        if self.name == "linear":
            return np.full_like(xi, self.c)
        return xi * xi

    def max_speed(self, u_bound: float) -> float:
        """``max |a(u)|`` over ``|u| <= u_bound``."""
        if self.name == "linear":
            return abs(self.c)
        if self.name == "burgers":
            return float(u_bound)
        return float(u_bound) ** 2

    def gamma(self, xi, zeta):
        p = self.growth_p
        return self.growth_C * (1.0 + np.abs(xi) ** (p - 1) + np.abs(zeta) ** (p - 1))

    def to_dict(self) -> dict:
        return {"name": self.name, "params": {"c": self.c}, "growth_C": self.growth_C,
                "growth_p": self.growth_p, "direction": list(self.direction)}


def build_flux(spec: dict | None = None, dim: int = 1) -> FluxModel:
    spec = dict(spec or {})
    direction = spec.get("direction")
    if direction is None:
        direction = (1.0,) if dim == 1 else (1 / math.sqrt(2), 1 / math.sqrt(2))
    params = spec.get("params", {})
    return FluxModel(spec.get("name", "burgers"), float(params.get("c", spec.get("c", 1.0))),
                     spec.get("growth_C"), spec.get("growth_p"), tuple(direction))


def eval_A(model: FluxModel, xi):
    """Vector flux ``A(xi) d``; in 1-D the plain profile."""
    prof = model.A(xi)
    if model.dim == 1:
        return prof
    return np.stack([prof * d for d in model.direction])


def eval_a(model: FluxModel, xi):
    prof = model.a(xi)
    if model.dim == 1:
        return prof
    return np.stack([prof * d for d in model.direction])


@dataclass
class GammaReport:
    max_ratio: float
    passed: bool
    n_pairs: int


def check_gamma(model: FluxModel, lattice=None) -> GammaReport:
    """``max |a(xi)-a(zeta)| / (Gamma(xi,zeta) |xi-zeta|)`` over lattice pairs, xi != zeta."""
    if lattice is None:
        lattice = np.linspace(-5.0, 5.0, 201)
    xi, zeta = np.meshgrid(np.asarray(lattice, float), np.asarray(lattice, float), indexing="ij")
    keep = xi != zeta
    xi, zeta = xi[keep], zeta[keep]
    ratio = np.abs(model.a(xi) - model.a(zeta)) / (model.gamma(xi, zeta) * np.abs(xi - zeta))
    mr = float(ratio.max()) if ratio.size else 0.0
    return GammaReport(mr, mr <= 1.0, int(ratio.size))


# ---------------------------------------------------------------------------
# Entropies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Entropy:
    """Convex entropy with its first two derivatives."""

    name: str
    eta: Callable
    prime: Callable
    second: Callable


def make_entropy(name: str, p: float = 2.0) -> Entropy:
    if name == "linear":
        return Entropy("linear", lambda u: np.asarray(u, float) * 1.0,
                       lambda u: np.ones_like(np.asarray(u, float)),
                       lambda u: np.zeros_like(np.asarray(u, float)))
    if name == "square":
        return Entropy("square", lambda u: np.asarray(u, float) ** 2,
                       lambda u: 2.0 * np.asarray(u, float),
                       lambda u: np.full_like(np.asarray(u, float), 2.0))
    if name == "power":
        if p < 2:
            raise ValueError("power entropy needs p >= 2 to be C^2")
        return Entropy(f"power{p:g}", lambda u: np.abs(u) ** p,
                       lambda u: p * np.sign(u) * np.abs(u) ** (p - 1),
                       lambda u: p * (p - 1) * np.abs(u) ** (p - 2))
    raise ValueError(f"unknown entropy {name!r}")


def _closed_entropy_flux(model: FluxModel, entropy_name: str, u):
    if entropy_name == "linear":
        return model.A(u) - model.A(0.0)
    if entropy_name == "square":
        if model.name == "burgers":
            return 2.0 * u ** 3 / 3.0
        if model.name == "linear":
            return model.c * u ** 2
        return u ** 4 / 2.0
    return None


def entropy_flux(model: FluxModel, eta_prime, u):
    """Scalar entropy-flux profile ``q(u) = int_0^u a(xi) eta'(xi) d xi``.

    ``eta_prime`` is either an :class:`Entropy` (closed forms are used for the
    catalog pairs) or a callable; the fallback is composite Gauss-Legendre on
    ``[0, u]`` split into 8 panels.
    """
    u = np.asarray(u, dtype=float)
    if isinstance(eta_prime, Entropy):
        closed = _closed_entropy_flux(model, eta_prime.name, u)
        if closed is not None:
            return closed
        eta_prime = eta_prime.prime
    panels = 8
    out = np.zeros_like(u)
    for j in range(panels):
        lo = u * j / panels
        hi = u * (j + 1) / panels
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        nodes = mid[..., None] + half[..., None] * _GL_NODES
        out += half * np.sum(_GL_WEIGHTS * model.a(nodes) * eta_prime(nodes), axis=-1)
    return out
