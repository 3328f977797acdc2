"""Kinetic formulation layer.

Conventions
-----------
* ``XiGrid`` bins are uniform and aligned to integer multiples of the bin
  width, so ``xi = 0`` is always a bin edge.  A kinetic function is stored by
  its values on the bins; beyond the grid it is 1 below and 0 above.
* ``KineticMeasure`` is a histogram ``w[x_cell, t_bin, xi_bin]`` of a
  non-negative measure on ``T^N x [0, T] x R``.  For the viscous solver it
  receives ``eta |grad u|^2 dt dx^N`` at the bin holding ``u(x)`` (nearest bin
  deposition, no smearing).
* Test functions for weak forms are separable ``alpha(x) beta(t) gamma(xi)``.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .grid import GridField, TorusGrid, gradient_array
from .flux import FluxModel, Entropy, entropy_flux
from .noise import G2 as _G2

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


# ---------------------------------------------------------------------------
# xi discretization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class XiGrid:
    """Uniform bins ``[ (i0+j) w, (i0+j+1) w )`` for ``j = 0..m-1``."""

    width: float
    i0: int
    m: int

    def __post_init__(self):
        if self.m < 1 or not self.width > 0:
            raise ValueError("XiGrid needs m >= 1 and width > 0")

    @classmethod
    def covering(cls, lo: float, hi: float, m: int | None = None, width: float | None = None,
                 margin: float = 0.1, min_pad_bins: int = 2) -> "XiGrid":
        """Grid covering ``[lo, hi]`` widened by ``margin`` of the range and at
        least ``min_pad_bins`` bins on each side."""
        lo, hi = float(lo), float(hi)
        span = max(hi - lo, 1e-12)
        if width is None:
            width = span * (1.0 + 2.0 * margin) / max((m or 64) - 2 * min_pad_bins, 1)
        pad = max(margin * span, min_pad_bins * width)
        i0 = math.floor((lo - pad) / width)
        i1 = math.ceil((hi + pad) / width)
        return cls(float(width), int(i0), int(max(i1 - i0, 1)))

    @property
    def xi_min(self) -> float:
        return self.i0 * self.width

    @property
    def xi_max(self) -> float:
        return (self.i0 + self.m) * self.width

    @property
    def edges(self) -> np.ndarray:
        return (self.i0 + np.arange(self.m + 1)) * self.width

    @property
    def centers(self) -> np.ndarray:
        return (self.i0 + np.arange(self.m) + 0.5) * self.width

    def bin_index(self, u) -> np.ndarray:
        return np.floor(np.asarray(u, dtype=float) / self.width).astype(np.int64) - self.i0

    def contains(self, u) -> bool:
        u = np.asarray(u)
        return bool(np.all(u >= self.xi_min) and np.all(u < self.xi_max))

    def widened(self, lo: float, hi: float) -> tuple:
        """Grid with the same bins extended to cover ``[lo, hi]``; returns (grid, left_pad)."""
        i0 = min(self.i0, math.floor(lo / self.width) - 2)
        i1 = max(self.i0 + self.m, math.floor(hi / self.width) + 3)
        return XiGrid(self.width, i0, i1 - i0), self.i0 - i0

    def compatible(self, other: "XiGrid") -> bool:
        return self.width == other.width and self.i0 == other.i0 and self.m == other.m


# ---------------------------------------------------------------------------
# kinetic functions and Young measures
# ---------------------------------------------------------------------------

@dataclass
class KineticFunction:
    """Values ``f(x_i, xi_j)`` in [0, 1] on a flattened space index and ξ bins."""

    xi_grid: XiGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        if v.shape[-1] != self.xi_grid.m:
            raise ValueError("kinetic function values do not match xi grid")
        self.values = v

    @property
    def n_points(self) -> int:
        return self.values.shape[0]

    def is_valid(self, tol: float = 1e-12) -> bool:
        v = self.values
        inside = np.all(v >= -tol) and np.all(v <= 1 + tol)
        mono = np.all(np.diff(v, axis=1) <= tol)
        return bool(inside and mono)

    def young_histogram(self) -> np.ndarray:
        """Fiber masses ``-Delta_xi f`` including the tails (1 below, 0 above).

        Shape ``(n_points, m + 1)``: column j < m holds the mass assigned to
        the edge between bin j-1 and bin j... concretely mass of nu on
        ``(c_{j-1}, c_j]`` with ``c_{-1} = -inf`` and ``c_m = +inf``.
        """
        padded = np.concatenate([np.ones((self.n_points, 1)), self.values,
                                 np.zeros((self.n_points, 1))], axis=1)
        return -np.diff(padded, axis=1)


def kinetic_function(u_field, xi_grid: XiGrid) -> KineticFunction:
    """``f(x, xi_j) = 1_{u(x) > xi_j}`` with bin-centre sampling."""
    u = u_field.values.ravel() if isinstance(u_field, GridField) else np.ravel(u_field)
    return KineticFunction(xi_grid, (u[:, None] > xi_grid.centers[None, :]).astype(float))


def kinetic_function_averaged(u_field, xi_grid: XiGrid) -> KineticFunction:
    """Bin averages of ``1_{u > xi}``; exact under :func:`reconstruct_u`."""
    u = u_field.values.ravel() if isinstance(u_field, GridField) else np.ravel(u_field)
    lo = xi_grid.edges[:-1]
    return KineticFunction(xi_grid, np.clip((u[:, None] - lo[None, :]) / xi_grid.width, 0.0, 1.0))


def chi(f: KineticFunction) -> np.ndarray:
    """``chi_f = f - 1_{0 > xi}`` on the bins."""
    return f.values - (f.xi_grid.centers < 0.0)[None, :]


def reconstruct_u(f: KineticFunction, grid: TorusGrid | None = None):
    """``int chi_f d xi``: midpoint sum on the grid plus the exact tail
    contributions of the conventions f = 1 below / 0 above the grid."""
    xg = f.xi_grid
    u = chi(f).sum(axis=1) * xg.width + max(xg.xi_min, 0.0) + min(xg.xi_max, 0.0)
    if grid is not None:
        return GridField(grid, u)
    return u


@dataclass
class EmpiricalYoungMeasure:
    """Per-point atoms ``sum_a w[p, a] delta_{atoms[p, a]}`` (weights sum to 1)."""

    atoms: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        self.atoms = a
        if self.weights is None:
            self.weights = np.full(a.shape, 1.0 / a.shape[1])
        self.weights = np.asarray(self.weights, dtype=float)
        if np.any(self.weights < 0) or not np.allclose(self.weights.sum(axis=1), 1.0, atol=1e-12):
            raise ValueError("each fiber must be a probability measure")

    @classmethod
    def from_field(cls, u_field) -> "EmpiricalYoungMeasure":
        u = u_field.values.ravel() if isinstance(u_field, GridField) else np.ravel(u_field)
        return cls(u[:, None])

    @classmethod
    def from_samples(cls, samples: np.ndarray, n_cells: int) -> "EmpiricalYoungMeasure":
        """Group consecutive fine samples into ``n_cells`` fibers (local averaging)."""
        s = np.asarray(samples, dtype=float).ravel()
        if s.size % n_cells:
            raise ValueError("sample count must be a multiple of n_cells")
        return cls(s.reshape(n_cells, -1))

    @classmethod
    def from_kinetic(cls, f: KineticFunction) -> "EmpiricalYoungMeasure":
        """Histogram fibers: masses of ``-Delta f`` placed on the bin edges
        between consecutive centres (tails on the outer edges)."""
        h = f.young_histogram()
        e = f.xi_grid.edges
        return cls(np.broadcast_to(e, h.shape).copy(), np.clip(h, 0.0, None) / np.clip(h, 0.0, None).sum(axis=1, keepdims=True))

    def kinetic(self, xi_grid: XiGrid) -> KineticFunction:
        """``f(x, xi) = nu_x((xi, inf))`` at the bin centres."""
        c = xi_grid.centers
        vals = np.einsum("pa,paj->pj", self.weights, (self.atoms[:, :, None] > c[None, None, :]).astype(float))
        return KineticFunction(xi_grid, vals)


def young_moment(nu, p: float, cell_volume: float | None = None) -> float:
    """``int int |xi|^p d nu_x(xi) dx`` with uniform point weights summing to 1.

    Accepts an :class:`EmpiricalYoungMeasure`, a :class:`KineticFunction`
    (converted through its histogram) or a :class:`GridField` (atoms at u).
    """
    if isinstance(nu, GridField):
        return float(np.sum(np.abs(nu.values) ** p) * nu.grid.cell_volume)
    if isinstance(nu, KineticFunction):
        nu = EmpiricalYoungMeasure.from_kinetic(nu)
    w = 1.0 / nu.atoms.shape[0] if cell_volume is None else cell_volume
    return float(np.sum(nu.weights * np.abs(nu.atoms) ** p) * w)


def fiber_moments(nu: EmpiricalYoungMeasure, p: float) -> np.ndarray:
    return np.sum(nu.weights * np.abs(nu.atoms) ** p, axis=1)


# ---------------------------------------------------------------------------
# kinetic measure
# ---------------------------------------------------------------------------

@dataclass
class KineticMeasure:
    """Histogram ``w[x_cell, t_bin, xi_bin] >= 0``."""

    xi_grid: XiGrid
    t_edges: np.ndarray
    weights: np.ndarray

    @classmethod
    def empty(cls, n_cells: int, t_end: float, n_t_bins: int, xi_grid: XiGrid) -> "KineticMeasure":
        return cls(xi_grid, np.linspace(0.0, t_end, n_t_bins + 1), np.zeros((n_cells, n_t_bins, xi_grid.m)))

    @property
    def n_t_bins(self) -> int:
        return len(self.t_edges) - 1

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def t_bin(self, t: float) -> int:
        j = int(np.searchsorted(self.t_edges, t, side="right")) - 1
        return min(max(j, 0), self.n_t_bins - 1)

    def widen(self, lo: float, hi: float):
        new, pad = self.xi_grid.widened(lo, hi)
        w = np.zeros(self.weights.shape[:2] + (new.m,))
        w[:, :, pad:pad + self.xi_grid.m] = self.weights
        self.xi_grid, self.weights = new, w

    def deposit(self, t: float, u: np.ndarray, mass: np.ndarray):
        """Add ``mass[x]`` at ``(x, t_bin(t), bin(u[x]))``; widens on escape."""
        u = np.ravel(u)
        if not self.xi_grid.contains(u):
            lo, hi = float(u.min()), float(u.max())
            warnings.warn(f"u range [{lo:.3g}, {hi:.3g}] left the xi grid; widening", RuntimeWarning)
            self.widen(lo, hi)
        self.weights[np.arange(u.size), self.t_bin(t), self.xi_grid.bin_index(u)] += np.ravel(mass)

    def merged(self, other: "KineticMeasure") -> "KineticMeasure":
        """Sum of two histograms on a common (widened) xi grid."""
        a, b = self.copy(), other.copy()
        lo = min(a.xi_grid.xi_min, b.xi_grid.xi_min)
        hi = max(a.xi_grid.xi_max, b.xi_grid.xi_max) - 1e-12
        a.widen(lo, hi)
        b.widen(lo, hi)
        lo2 = min(a.xi_grid.xi_min, b.xi_grid.xi_min)
        hi2 = max(a.xi_grid.xi_max, b.xi_grid.xi_max) - 1e-12
        a.widen(lo2, hi2)
        b.widen(lo2, hi2)
        return KineticMeasure(a.xi_grid, a.t_edges.copy(), a.weights + b.weights)

    def copy(self) -> "KineticMeasure":
        return KineticMeasure(self.xi_grid, self.t_edges.copy(), self.weights.copy())

    def t_marginal(self) -> np.ndarray:
        return self.weights.sum(axis=(0, 2))

    def xi_marginal(self) -> np.ndarray:
        return self.weights.sum(axis=(0, 1))

    def pair(self, fn) -> float:
        """``m(phi)`` for ``phi(x_index, t_centre, xi_centre)`` vectorized."""
        tc = 0.5 * (self.t_edges[1:] + self.t_edges[:-1])
        x = np.arange(self.weights.shape[0])
        vals = fn(x[:, None, None], tc[None, :, None], self.xi_grid.centers[None, None, :])
        return float(np.sum(self.weights * vals))

    def to_csv(self, path, include_zero: bool = False):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["x_cell", "t_bin", "xi_bin", "weight"])
            idx = np.argwhere(self.weights > 0) if not include_zero else np.argwhere(np.ones_like(self.weights, bool))
            for i, j, k in idx:
                wr.writerow([int(i), int(j), int(k), repr(float(self.weights[i, j, k]))])


def accumulate_kinetic_measure(states, xi_grid: XiGrid, grid: TorusGrid, eta: float, dt: float,
                               t_end: float, n_t_bins: int = 32) -> KineticMeasure:
    """Build ``m^eta`` from a stream of pre-step states ``u_n`` (n = 0..N-1).

    Each state deposits ``eta |grad u_n|^2 dt dx^N`` in the bin of ``u_n(x)``.
    """
    m = KineticMeasure.empty(grid.size, t_end, n_t_bins, xi_grid)
    for n, u in enumerate(states):
        u = np.asarray(u, dtype=float).reshape(grid.shape)
        g2 = np.sum(gradient_array(u, grid.dx) ** 2, axis=0)
        m.deposit(n * dt, u, eta * g2 * dt * grid.cell_volume)
    return m


def measure_tail(m: KineticMeasure, R: float, p: float | None = None):
    """Mass of ``{|xi| >= R}`` (bins by centre); with ``p`` also the p-moment
    ``sum |xi_c|^p w`` over all bins."""
    c = np.abs(m.xi_grid.centers)
    per_bin = m.xi_marginal()
    tail = float(per_bin[c >= R].sum()) if R > 0 else m.total_mass
    if p is None:
        return tail
    return tail, float(np.sum(per_bin * c ** p))


# ---------------------------------------------------------------------------
# separable test functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpatialTest:
    """``offset + amplitude * {1, cos, sin}(2 pi k . x)``."""

    kind: str = "const"
    wavevector: tuple = (1,)
    amplitude: float = 1.0
    offset: float = 0.0

    def _phase(self, x):
        return sum(2.0 * math.pi * k * xi for k, xi in zip(self.wavevector, x))

    def value(self, x) -> np.ndarray:
        if self.kind == "const":
            return self.offset + self.amplitude * np.ones_like(x[0])
        f = np.cos if self.kind == "cos" else np.sin
        return self.offset + self.amplitude * f(self._phase(x))

    def grad(self, x) -> np.ndarray:
        if self.kind == "const":
            return np.zeros((len(x),) + np.shape(x[0]))
        ph = self._phase(x)
        d = -np.sin(ph) if self.kind == "cos" else np.cos(ph)
        return np.stack([self.amplitude * 2 * math.pi * k * d for k in self.wavevector])

    def laplacian(self, x) -> np.ndarray:
        if self.kind == "const":
            return np.zeros_like(x[0])
        k2 = sum(k * k for k in self.wavevector)
        return -(2 * math.pi) ** 2 * k2 * (self.value(x) - self.offset)


@dataclass(frozen=True)
class TimeTest:
    """Ramp-down with ``beta(T) = 0``: ``cos`` gives (1 + cos(pi t/T))/2, ``poly`` (1 - t/T)^2."""

    kind: str = "cos"

    def value(self, t, T):
        s = np.asarray(t, dtype=float) / T
        if self.kind == "cos":
            return 0.5 * (1.0 + np.cos(math.pi * s))
        if self.kind == "poly":
            return (1.0 - s) ** 2
        raise ValueError(f"unknown time test {self.kind!r}")


@dataclass(frozen=True)
class XiTest:
    """``one`` (xi-independent) or a compact ``bump`` centred at ``center`` with half-width ``width``."""

    kind: str = "one"
    center: float = 0.0
    width: float = 1.0

    def value(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.kind == "one":
            return np.ones_like(xi)
        s = (xi - self.center) / self.width
        out = np.zeros_like(s)
        inside = np.abs(s) < 1
        out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
        return out

    def deriv(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.kind == "one":
            return np.zeros_like(xi)
        s = (xi - self.center) / self.width
        out = np.zeros_like(s)
        inside = np.abs(s) < 1
        si = s[inside]
        out[inside] = np.exp(-1.0 / (1.0 - si ** 2)) * (-2.0 * si / (1.0 - si ** 2) ** 2) / self.width
        return out

    def _integral(self, u, weight):
        """``int_{-inf}^u weight(xi) gamma(xi) d xi`` for the bump (Gauss-Legendre, 4 panels)."""
        lo = self.center - self.width
        hi = np.clip(u, lo, self.center + self.width)
        out = np.zeros_like(hi)
        panels = 4
        for j in range(panels):
            a = lo + (hi - lo) * j / panels
            b = lo + (hi - lo) * (j + 1) / panels
            half, mid = 0.5 * (b - a), 0.5 * (b + a)
            nodes = mid[..., None] + half[..., None] * _GL_NODES
            out += half * np.sum(_GL_WEIGHTS * weight(nodes) * self.value(nodes), axis=-1)
        return out

    def antiderivative(self, u):
        """``Gamma(u) = int chi-normalised gamma``: ``u`` for ``one``."""
        u = np.asarray(u, dtype=float)
        if self.kind == "one":
            return u.copy()
        return self._integral(u, lambda z: np.ones_like(z))

    def flux_antiderivative(self, u, flux: FluxModel):
        """``Q(u)`` with ``Q' = a gamma``: ``A(u) - A(0)`` for ``one``."""
        u = np.asarray(u, dtype=float)
        if self.kind == "one":
            return flux.A(u) - flux.A(0.0)
        return self._integral(u, flux.a)


@dataclass(frozen=True)
class SeparableTest:
    alpha: SpatialTest = SpatialTest()
    beta: TimeTest = TimeTest()
    gamma: XiTest = XiTest()


def _inner(grid: TorusGrid, a, b) -> float:
    return float(np.sum(a * b) * grid.cell_volume)


def _trajectory(path) -> np.ndarray:
    if getattr(path, "trajectory", None) is None:
        raise ValueError("path was run without store_trajectory=True")
    return path.trajectory


def kinetic_weak_residual(path, phi: SeparableTest, use_histogram: bool = False) -> float:
    """LHS - RHS of the viscous kinetic formulation tested against ``phi``.

    With ``f = 1_{u > xi}``, ``nu = delta_u`` and ``m = eta |grad u|^2 delta_u``::

        sum_n (b_{n+1}-b_n) <Gam(u_n), al> + b_0 <Gam(u_0), al>
          + sum_n dt b_n [ <Q(u_n), d.grad al> + eta <Gam(u_n), lap al> ]
          + sum_n b_n sum_k <g_k(u_n) gam(u_n), al> dbeta_k^n
          + 1/2 sum_n dt b_n <gam'(u_n) G^2(u_n), al>
          - m(al b gam')

    ``Gam``/``Q`` are the xi-antiderivatives of ``gam`` and ``a gam``; time
    sums are left-point (Ito) on the path's own steps and increments.
    """
    traj = _trajectory(path)
    cfg = path.config
    grid, flux, noise = cfg.grid, cfg.flux, cfg.noise
    x = grid.coordinates()
    N = path.step_count
    dt = path.dt_used
    T = N * dt
    t = np.arange(N + 1) * dt
    b = phi.beta.value(t, T)
    al = phi.alpha.value(x)
    grad_al = phi.alpha.grad(x)
    d_grad_al = sum(d * grad_al[j] for j, d in enumerate(flux.direction))
    lap_al = phi.alpha.laplacian(x)
    gam = phi.gamma
    dbeta = path.increments
    xs = x if grid.dim == 2 else x[0]
    total = b[0] * _inner(grid, gam.antiderivative(traj[0]), al)
    m_term = 0.0
    for n in range(N):
        u = traj[n]
        Gam = gam.antiderivative(u)
        total += (b[n + 1] - b[n]) * _inner(grid, Gam, al)
        total += dt * b[n] * (_inner(grid, gam.flux_antiderivative(u, flux), d_grad_al)
                              + cfg.eta * _inner(grid, Gam, lap_al))
        gp = gam.deriv(u)
        if noise.K:
            gk = noise.g(xs, u)
            gv = gam.value(u)
            total += b[n] * float(np.sum(np.sum(gk * gv * al, axis=tuple(range(1, gk.ndim))) * dbeta[n])) * grid.cell_volume
            total += 0.5 * dt * b[n] * _inner(grid, gp * np.sum(gk * gk, axis=0), al)
        if not use_histogram:
            g2 = np.sum(gradient_array(u, grid.dx) ** 2, axis=0)
            m_term += dt * b[n] * _inner(grid, cfg.eta * g2 * gp, al)
    if use_histogram:
        m = path.kinetic_measure
        alf = al.ravel()
        m_term = m.pair(lambda xi_idx, tc, xc: alf[xi_idx] * phi.beta.value(tc, T) * gam.deriv(xc))
    return float(total - m_term)


def entropy_residual(path, entropy: Entropy, theta: SpatialTest, s: float, t: float,
                     viscous: bool = True) -> float:
    """LHS - RHS of the entropy inequality on ``[s, t]`` for a non-negative ``theta``.

    ``<eta(u_t),th> - <eta(u_s),th> - sum_n [dt <q(u_n), d.grad th>
    + dt visc <eta(u_n), lap th> + sum_k <g_k eta'(u_n), th> dbeta_k
    + dt/2 <G^2 eta''(u_n), th>]``.  The viscous term (``viscous=True``)
    accounts for the parabolic regularization, so for a viscous path the
    residual equals ``-m(theta eta'')`` up to discretization error.
    """
    traj = _trajectory(path)
    cfg = path.config
    grid, flux, noise = cfg.grid, cfg.flux, cfg.noise
    x = grid.coordinates()
    xs = x if grid.dim == 2 else x[0]
    dt = path.dt_used
    l, m_ = int(round(s / dt)), int(round(t / dt))
    if not 0 <= l <= m_ <= path.step_count:
        raise ValueError("need 0 <= s <= t <= t_end")
    th = theta.value(x)
    if np.any(th < -1e-14):
        raise ValueError("theta must be non-negative")
    grad_th = theta.grad(x)
    d_grad_th = sum(d * grad_th[j] for j, d in enumerate(flux.direction))
    lap_th = theta.laplacian(x)
    res = _inner(grid, entropy.eta(traj[m_]), th) - _inner(grid, entropy.eta(traj[l]), th)
    for n in range(l, m_):
        u = traj[n]
        rhs = dt * _inner(grid, entropy_flux(flux, entropy, u), d_grad_th)
        if viscous:
            rhs += dt * cfg.eta * _inner(grid, entropy.eta(u), lap_th)
        if noise.K:
            gk = noise.g(xs, u)
            ep = entropy.prime(u)
            rhs += float(np.sum(np.sum(gk * ep * th, axis=tuple(range(1, gk.ndim))) * path.increments[n])) * grid.cell_volume
            rhs += 0.5 * dt * _inner(grid, np.sum(gk * gk, axis=0) * entropy.second(u), th)
        res -= rhs
    return float(res)


def entropy_dissipation(path, entropy: Entropy, theta: SpatialTest, s: float, t: float) -> float:
    """``m(theta x eta'')`` restricted to the steps in ``[s, t)``."""
    traj = _trajectory(path)
    cfg = path.config
    grid = cfg.grid
    dt = path.dt_used
    th = theta.value(grid.coordinates())
    out = 0.0
    for n in range(int(round(s / dt)), int(round(t / dt))):
        u = traj[n]
        g2 = np.sum(gradient_array(u, grid.dx) ** 2, axis=0)
        out += dt * _inner(grid, cfg.eta * g2 * entropy.second(u), th)
    return out


# ---------------------------------------------------------------------------
# weak convergence and time atoms
# ---------------------------------------------------------------------------

@dataclass
class WeakConvergenceReport:
    gaps: np.ndarray  # (len(sequence), len(tests))

    @property
    def max_gap(self) -> float:
        return float(np.max(np.abs(self.gaps))) if self.gaps.size else 0.0

    @property
    def final_gap(self) -> float:
        return float(np.max(np.abs(self.gaps[-1]))) if self.gaps.size else 0.0


def pair_kinetic(f: KineticFunction, alpha_vals: np.ndarray, gamma: XiTest) -> float:
    """``int int f(x, xi) alpha(x) gamma(xi)`` with uniform point weights and midpoint ξ sums."""
    g = gamma.value(f.xi_grid.centers)
    return float(np.mean(f.values @ g * np.ravel(alpha_vals)) * f.xi_grid.width)


def weak_convergence_check(sequence: Sequence[KineticFunction], tests: Sequence[tuple],
                           limit: KineticFunction) -> WeakConvergenceReport:
    """Gaps ``<f_n, H> - <f, H>`` for separable tests ``H = (alpha_values, XiTest)``."""
    gaps = np.zeros((len(sequence), len(tests)))
    for j, (al, gam) in enumerate(tests):
        ref = pair_kinetic(limit, al, gam)
        for i, fn in enumerate(sequence):
            if not fn.xi_grid.compatible(limit.xi_grid):
                raise ValueError("sequence and limit must share the xi grid")
            gaps[i, j] = pair_kinetic(fn, al, gam) - ref
    return WeakConvergenceReport(gaps)


@dataclass
class TimeAtom:
    t_bin: int
    t_lo: float
    t_hi: float
    jump_size: float
    defect: float


def detect_time_atoms(m: KineticMeasure, f_snapshots: np.ndarray, tests: Sequence[tuple] | None = None,
                      threshold: float = 5.0, cell_volume: float | None = None) -> list:
    """Flag t-bins whose mass exceeds ``threshold`` times the median bin mass.

    ``f_snapshots[j]`` is the kinetic function (points x bins) at ``t_edges[j]``.
    For each flagged bin the identity ``<f(t+) - f(t-), phi> = -m_bin(d_xi phi)``
    is tested for ``phi = alpha(x) gamma(xi)``; the largest absolute defect is
    reported.  ``tests`` defaults to three bumps spread over the xi grid.
    """
    mass = m.t_marginal()
    if not np.any(mass > 0):
        return []
    med = float(np.median(mass))
    flagged = np.nonzero(mass > threshold * med)[0] if med > 0 else np.nonzero(mass > 0)[0]
    xg = m.xi_grid
    n_cells = m.weights.shape[0]
    vol = 1.0 / n_cells if cell_volume is None else cell_volume
    if tests is None:
        span = xg.xi_max - xg.xi_min
        tests = [(np.ones(n_cells), XiTest("bump", xg.xi_min + span * c, span * 0.3))
                 for c in (0.3, 0.5, 0.7)]
    f_snapshots = np.asarray(f_snapshots, dtype=float).reshape(m.n_t_bins + 1, n_cells, xg.m)
    out = []
    for b in flagged:
        worst = 0.0
        for al, gam in tests:
            al = np.ravel(al)
            jump = f_snapshots[b + 1] - f_snapshots[b]
            lhs = float(np.sum(jump * gam.value(xg.centers)[None, :] * al[:, None]) * xg.width * vol)
            rhs = -float(np.sum(m.weights[:, b, :] * gam.deriv(xg.centers)[None, :] * al[:, None]))
            worst = max(worst, abs(lhs - rhs))
        out.append(TimeAtom(int(b), float(m.t_edges[b]), float(m.t_edges[b + 1]), float(mass[b]), worst))
    return out


def kinetic_snapshot_csv(f: KineticFunction, x_coords: np.ndarray, path):
    """CSV with columns ``x, xi, f`` (one row per point and bin)."""
    xc = np.asarray(x_coords)
    xc = xc.reshape(f.n_points, -1)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x", "xi", "f"])
        for i in range(f.n_points):
            xs = " ".join(repr(float(c)) for c in xc[i])
            for j, c in enumerate(f.xi_grid.centers):
                wr.writerow([xs, repr(float(c)), repr(float(f.values[i, j]))])
