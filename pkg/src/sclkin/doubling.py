"""Doubling-of-variables functionals.

Everything is built on the pair ``rho_eps(x - y) psi_delta(xi - zeta)``:

* :class:`PsiPair` holds ``psi_delta`` with its first and second
  antiderivatives ``psi1`` (0 -> 1) and ``psi2`` (convex, ~ r^+).
* :func:`doubled_integral` evaluates
  ``int int rho_eps psi_delta f1(x, xi) (1 - f2(y, zeta))`` through the chi
  expansion, each piece integrated exactly over the piecewise-constant xi bins.
* :func:`I_psi_estimate` and :func:`I_rho_estimate` return the noise and flux
  commutator terms for empirical Young measures together with their a priori
  bounds; :func:`upsilon` is the majorant used for the flux term.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .flux import FluxModel
from .grid import Mollifier, TorusGrid, GridField
from .kinetic import KineticFunction, EmpiricalYoungMeasure, chi
from .noise import NoiseModel

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(20)


# ---------------------------------------------------------------------------
# psi pair
# ---------------------------------------------------------------------------

def _tri(s):
    return np.clip(1.0 - np.abs(s), 0.0, None)


def _tri1(s):
    s = np.asarray(s, dtype=float)
    return np.where(s <= -1, 0.0, np.where(s < 0, 0.5 * (1 + s) ** 2,
                    np.where(s < 1, 1.0 - 0.5 * (1 - s) ** 2, 1.0)))


def _tri2(s):
    s = np.asarray(s, dtype=float)
    return np.where(s <= -1, 0.0, np.where(s < 0, (1 + s) ** 3 / 6.0,
                    np.where(s < 1, s + (1 - s) ** 3 / 6.0, s)))


def _bump_raw(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


@lru_cache(maxsize=1)
def _bump_tables(n: int = 20001):
    s = np.linspace(-1.0, 1.0, n)
    mass = integrate.quad(_bump_raw, -1, 1, epsabs=1e-14)[0]
    p0 = _bump_raw(s) / mass
    p1 = integrate.cumulative_simpson(p0, x=s, initial=0.0)
    p1 /= p1[-1]
    p2 = integrate.cumulative_simpson(p1, x=s, initial=0.0)
    csup = float(np.max(np.abs(s * p0)))
    return s, p0, p1, p2, csup


def _bump_base(s):
    st, p0, _, _, _ = _bump_tables()
    return np.interp(s, st, p0, left=0.0, right=0.0)


def _bump1(s):
    st, _, p1, _, _ = _bump_tables()
    return np.interp(s, st, p1, left=0.0, right=1.0)


def _bump2(s):
    st, _, _, p2, _ = _bump_tables()
    s = np.asarray(s, dtype=float)
    inner = np.interp(s, st, p2, left=0.0)
    return np.where(s >= 1.0, p2[-1] + (s - 1.0), inner)


_BASES = {
    "triangular": (_tri, _tri1, _tri2, 0.25),
    "smooth-bump": (_bump_base, _bump1, _bump2, None),
}


@dataclass(frozen=True)
class PsiPair:
    """``psi_delta(r) = delta^-1 psi(r/delta)`` with ``psi`` supported in (-1, 1)."""

    delta: float
    base: str = "triangular"

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if self.base not in _BASES:
            raise ValueError(f"unknown psi base {self.base!r}")

    def psi(self, r):
        return _BASES[self.base][0](np.asarray(r, dtype=float) / self.delta) / self.delta

    def psi1(self, r):
        return _BASES[self.base][1](np.asarray(r, dtype=float) / self.delta)

    def psi2(self, r):
        return self.delta * _BASES[self.base][2](np.asarray(r, dtype=float) / self.delta)

    @property
    def C_psi(self) -> float:
        """``sup_s |s psi(s)|`` of the unscaled base."""
        c = _BASES[self.base][3]
        return _bump_tables()[4] if c is None else c

    @property
    def sup(self) -> float:
        """``sup psi_delta``."""
        if self.base == "triangular":
            return 1.0 / self.delta
        return float(np.max(_bump_tables()[1])) / self.delta


def build_psi(delta: float, base: str = "triangular") -> PsiPair:
    return PsiPair(float(delta), base)


# ---------------------------------------------------------------------------
# doubled integral
# ---------------------------------------------------------------------------

def _rho_weights(rho, grid: TorusGrid) -> np.ndarray:
    if isinstance(rho, Mollifier):
        return rho.weights(grid)
    w = np.asarray(rho, dtype=float)
    if w.shape != grid.shape:
        raise ValueError("rho weights must have the grid shape")
    return w


def _convolve(values: np.ndarray, w: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """``(rho * v)(x) = sum_k w[k] v(x - k) dx^N`` applied to the trailing axis of
    ``values`` (shape ``(n_points, m)``) in grid layout."""
    m = values.shape[-1]
    v = values.reshape(grid.shape + (m,))
    axes = tuple(range(grid.dim))
    fw = np.fft.fftn(w, axes=axes)
    out = np.fft.ifftn(np.fft.fftn(v, axes=axes) * fw[..., None], axes=axes).real
    return out.reshape(-1, m) * grid.cell_volume


def _bin_kernel(psi: PsiPair, width: float, m: int) -> np.ndarray:
    """``K[i, j] = int_bin_i int_bin_j psi(xi - zeta)`` for uniform bins."""
    d = np.arange(-(m - 1), m) * width
    vals = psi.psi2(d + width) - 2.0 * psi.psi2(d) + psi.psi2(d - width)
    idx = np.arange(m)
    return vals[(idx[:, None] - idx[None, :]) + (m - 1)]


def doubled_integral(f1: KineticFunction, f2: KineticFunction, rho, psi: PsiPair,
                     grid: TorusGrid | None = None) -> float:
    """``int int int int rho(x - y) psi(xi - zeta) f1(x, xi) (1 - f2(y, zeta))``.

    With ``f1 = chi1 + 1_{0>xi}`` and ``1 - f2 = 1_{zeta>0} - chi2`` the
    integral is ``-<<chi1 chi2>> + int chi1 psi1 - int chi2 psi1(-.) + psi2(0)``;
    the kinetic functions are piecewise constant on the xi bins and every bin
    integral of ``psi``, ``psi1`` is taken in closed form through ``psi2``.
    ``rho`` may be a :class:`Mollifier`, an offset-weight array, or ``None``
    for a single point (``x = y``).
    """
    g1, g2 = f1.xi_grid, f2.xi_grid
    if not g1.compatible(g2):
        raise ValueError("kinetic functions live on incompatible xi grids")
    if f1.n_points != f2.n_points:
        raise ValueError("kinetic functions have different point counts")
    c1, c2 = chi(f1), chi(f2)
    h = g1.width
    lo, hi = g1.edges[:-1], g1.edges[1:]
    if rho is None:
        if f1.n_points != 1:
            raise ValueError("rho=None requires single-point kinetic functions")
        vol, conv2 = 1.0, c2
    else:
        if grid is None:
            raise ValueError("a grid is needed to apply rho")
        vol = grid.cell_volume
        conv2 = _convolve(c2, _rho_weights(rho, grid), grid)
    K = _bin_kernel(psi, h, g1.m)
    t1 = -float(np.sum((c1 @ K) * conv2) * vol)
    t2 = float(np.sum(c1 @ (psi.psi2(hi) - psi.psi2(lo))) * vol)
    t3 = -float(np.sum(c2 @ (psi.psi2(-lo) - psi.psi2(-hi))) * vol)
    return t1 + t2 + t3 + float(psi.psi2(0.0))


def contraction_functional(u1_ensemble, u2_ensemble, t: float | None = None,
                           cell_volume: float | None = None) -> tuple:
    """``E int (u1 - u2)^+ dx`` and its Monte Carlo standard error.

    Members may be arrays, :class:`GridField` s or path runs (then the
    snapshot at ``t`` is used).
    """
    def val(z):
        if hasattr(z, "snapshots"):
            return z.snapshot(t).values
        return z.values if isinstance(z, GridField) else np.asarray(z, dtype=float)

    per = []
    for a, b in zip(u1_ensemble, u2_ensemble):
        va, vb = val(a), val(b)
        vol = cell_volume if cell_volume is not None else 1.0 / va.size
        per.append(float(np.sum(np.clip(va - vb, 0.0, None)) * vol))
    per = np.array(per)
    se = float(per.std(ddof=1) / math.sqrt(per.size)) if per.size > 1 else 0.0
    return float(per.mean()), se


# ---------------------------------------------------------------------------
# commutator terms
# ---------------------------------------------------------------------------

@dataclass
class Estimate:
    value: float
    bound: float

    @property
    def passed(self) -> bool:
        return self.value <= self.bound * (1 + 1e-12) + 1e-15


def _as_young(nu, grid: TorusGrid) -> EmpiricalYoungMeasure:
    if isinstance(nu, EmpiricalYoungMeasure):
        out = nu
    elif isinstance(nu, KineticFunction):
        out = EmpiricalYoungMeasure.from_kinetic(nu)
    else:
        out = EmpiricalYoungMeasure.from_field(nu)
    if out.atoms.shape[0] != grid.size:
        raise ValueError("Young measure point count differs from grid size")
    return out


def _shifted(a: np.ndarray, grid: TorusGrid, k) -> np.ndarray:
    """Point values at ``x - k`` (flattened grid layout, trailing atom axis kept)."""
    v = a.reshape(grid.shape + a.shape[1:])
    return np.roll(v, shift=k, axis=tuple(range(grid.dim))).reshape(a.shape)


def _offsets(w: np.ndarray, grid: TorusGrid):
    for idx in np.argwhere(w != 0):
        yield tuple(int(i) for i in idx)


def I_psi_estimate(nu1, nu2, rho, psi: PsiPair, noise: NoiseModel, grid: TorusGrid,
                   t: float = 1.0) -> Estimate:
    """``t/2 int int rho(x-y) int int psi(xi-zeta) sum_k |g_k(x,xi) - g_k(y,zeta)|^2 dnu1_x dnu2_y``.

    Bound: ``t D1/2 eps^2 sup(psi_delta)``, i.e. ``t D1/2 eps^2/delta`` for the
    triangular base, plus ``t D1 C_psi h(delta)/2`` for
    multiplicative noise.
    """
    if not isinstance(rho, Mollifier):
        raise TypeError("rho must be a Mollifier (its epsilon enters the bound)")
    n1, n2 = _as_young(nu1, grid), _as_young(nu2, grid)
    w = rho.weights(grid)
    x = grid.coordinates()
    xf = [np.ravel(np.broadcast_to(c, grid.shape)) for c in x]
    eps = rho.epsilon
    bound = 0.5 * t * noise.D1 * eps ** 2 * psi.sup
    if noise.K and not noise.additive:
        bound += 0.5 * t * noise.D1 * psi.C_psi * float(noise.h(psi.delta))
    if noise.K == 0:
        return Estimate(0.0, bound)
    vol = grid.cell_volume
    A1, W1 = n1.atoms, n1.weights
    xs = xf if grid.dim == 2 else xf[0]
    # g at x for nu1 atoms: (K, P, A1)
    xb = [c[:, None] for c in xf] if grid.dim == 2 else xf[0][:, None]
    g1 = noise.g(xb, A1)
    total = 0.0
    for k in _offsets(w, grid):
        A2 = _shifted(n2.atoms, grid, k)
        W2 = _shifted(n2.weights, grid, k)
        ys = [(_shifted(c, grid, k))[:, None] for c in xf]
        g2 = noise.g(ys if grid.dim == 2 else ys[0], A2)
        diff = g1[:, :, :, None] - g2[:, :, None, :]
        sq = np.sum(diff * diff, axis=0)
        ps = psi.psi(A1[:, :, None] - A2[:, None, :])
        total += w[k] * float(np.sum(W1[:, :, None] * W2[:, None, :] * ps * sq))
    value = 0.5 * t * total * vol * vol
    return Estimate(value, bound)


def _W_atoms(u1, u2, psi: PsiPair, flux: FluxModel):
    """``int int 1_{u1>xi} 1_{zeta>u2} (a(xi) - a(zeta)) psi(xi - zeta)`` for atom pairs."""
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    d = psi.delta
    hi = np.minimum(u1 - u2, d)
    out = np.zeros(np.broadcast(u1, u2).shape)
    for a, b in ((-d, 0.0), (0.0, d)):
        lo_ = np.full_like(out, a)
        hi_ = np.clip(hi, a, b)
        half = 0.5 * (hi_ - lo_)
        mid = 0.5 * (hi_ + lo_)
        r = mid[..., None] + half[..., None] * _GL_NODES
        U1, U2 = u1[..., None], u2[..., None]
        integrand = psi.psi(r) * (flux.A(U1) - flux.A(U1 - r) - flux.A(U2 + r) + flux.A(U2))
        out += half * np.sum(_GL_WEIGHTS * integrand, axis=-1)
    return out


def I_rho_estimate(nu1, nu2, rho, psi: PsiPair, flux: FluxModel, grid: TorusGrid,
                   t: float = 1.0, C: float | None = None) -> Estimate:
    """``t int int f1 (1-f2) (a(xi) - a(zeta)) . grad rho(x-y) psi(xi-zeta)`` on atoms.

    ``value`` is the absolute value.  The bound follows the Upsilon route:
    ``t delta C int int |grad rho(x-y)| (1 + M_p(nu1_x) + M_p(nu2_y)) dx dy``
    with the flux growth pair ``(C, p)`` and the fiber p-moments of the data.
    """
    if not isinstance(rho, Mollifier):
        raise TypeError("rho must be a Mollifier")
    n1, n2 = _as_young(nu1, grid), _as_young(nu2, grid)
    C = flux.growth_C if C is None else C
    p = flux.growth_p
    gw = rho.gradient_weights(grid)
    gnorm = np.sqrt(np.sum(gw * gw, axis=0))
    dgw = sum(d * gw[j] for j, d in enumerate(flux.direction))
    vol = grid.cell_volume
    A1, W1 = n1.atoms, n1.weights
    m1 = np.sum(W1 * np.abs(A1) ** p, axis=1)
    m2 = np.sum(n2.weights * np.abs(n2.atoms) ** p, axis=1)
    value = 0.0
    bound_sum = 0.0
    for k in _offsets(gnorm, grid):
        A2 = _shifted(n2.atoms, grid, k)
        W2 = _shifted(n2.weights, grid, k)
        Wv = _W_atoms(A1[:, :, None], A2[:, None, :], psi, flux)
        value += dgw[k] * float(np.sum(W1[:, :, None] * W2[:, None, :] * Wv))
        bound_sum += gnorm[k] * float(np.sum(1.0 + m1 + _shifted(m2[:, None], grid, k)[:, 0]))
    value = abs(t * value * vol * vol)
    bound = t * psi.delta * C * bound_sum * vol * vol
    return Estimate(value, bound)


# ---------------------------------------------------------------------------
# Upsilon
# ---------------------------------------------------------------------------

def _pow_anti(z, q):
    """Antiderivative of ``|z|^q``."""
    return np.sign(z) * np.abs(z) ** (q + 1) / (q + 1)


def _gamma_inner(lo, hi, r, flux: FluxModel):
    """``int_lo^hi Gamma(z + r, z) dz`` in closed form (0 when hi <= lo)."""
    q = flux.growth_p - 1
    hi = np.maximum(hi, lo)
    val = (hi - lo) + _pow_anti(hi + r, q) - _pow_anti(lo + r, q) + _pow_anti(hi, q) - _pow_anti(lo, q)
    return flux.growth_C * val


def upsilon(xi: float, zeta: float, psi: PsiPair, flux: FluxModel) -> float:
    """``int_zeta^inf int_-inf^xi Gamma(xi', zeta') |xi'-zeta'| psi(xi'-zeta') dxi' dzeta'``.

    With ``r = xi' - zeta'`` the inner zeta'-integral over ``(zeta, xi - r)``
    is closed form; the outer r-integral is Gauss-Legendre on pieces split at
    0 and ``xi - zeta``.
    """
    d = psi.delta
    cuts = sorted({-d, 0.0, d, min(max(xi - zeta, -d), d)})
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b <= a:
            continue
        r = 0.5 * (a + b) + 0.5 * (b - a) * _GL_NODES
        inner = _gamma_inner(np.full_like(r, zeta), xi - r, r, flux)
        total += 0.5 * (b - a) * float(np.sum(_GL_WEIGHTS * np.abs(r) * psi.psi(r) * inner))
    return total


@dataclass
class UpsilonCheck:
    value: float
    bound: float

    @property
    def flagged(self) -> bool:
        return self.value > self.bound


def upsilon_check(xi: float, zeta: float, psi: PsiPair, flux: FluxModel, C: float | None = None) -> UpsilonCheck:
    """Compare Upsilon with ``C (1 + |xi|^p + |zeta|^p) delta`` (C defaults to the flux growth C)."""
    C = flux.growth_C if C is None else C
    p = flux.growth_p
    return UpsilonCheck(upsilon(xi, zeta, psi, flux), C * (1 + abs(xi) ** p + abs(zeta) ** p) * psi.delta)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def geometric_ladder(lo: float, hi: float, per_decade: int = 5) -> np.ndarray:
    """Geometric points from ``lo`` upwards with ``per_decade`` points per decade, not exceeding ``hi``."""
    n = int(math.floor(per_decade * math.log10(hi / lo) + 1e-9)) + 1
    return lo * 10.0 ** (np.arange(n) / per_decade)


def bound_sweep(nu1, nu2, grid: TorusGrid, flux: FluxModel, noise: NoiseModel,
                epsilons, deltas, t: float = 1.0, kind: str = "triangular") -> list:
    """Rows ``(epsilon, delta, term, value, bound, pass)`` for I_psi and I_rho."""
    rows = []
    for eps in epsilons:
        rho = Mollifier(kind, float(eps))
        for delta in deltas:
            psi = build_psi(float(delta))
            for name, est in (("I_psi", I_psi_estimate(nu1, nu2, rho, psi, noise, grid, t)),
                              ("I_rho", I_rho_estimate(nu1, nu2, rho, psi, flux, grid, t))):
                rows.append({"epsilon": float(eps), "delta": float(delta), "term": name,
                             "value": est.value, "bound": est.bound, "pass": est.passed})
    return rows


def remainder_ladder(nu1, nu2, grid: TorusGrid, flux: FluxModel, noise: NoiseModel,
                     epsilons, t: float = 1.0, exponent: float = 4.0 / 3.0) -> list:
    """Remainder ``r(eps, eps^exponent)`` = I_rho bound + I_psi bound along ``epsilons``.

    Each row also carries the computed ``|I_rho| + I_psi``.
    """
    rows = []
    for eps in epsilons:
        rho = Mollifier("triangular", float(eps))
        psi = build_psi(float(eps) ** exponent)
        ip = I_psi_estimate(nu1, nu2, rho, psi, noise, grid, t)
        ir = I_rho_estimate(nu1, nu2, rho, psi, flux, grid, t)
        rows.append({"epsilon": float(eps), "delta": psi.delta, "remainder": ip.bound + ir.bound,
                     "value": ip.value + ir.value})
    return rows
