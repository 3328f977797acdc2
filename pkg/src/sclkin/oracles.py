"""Closed-form reference solutions.

* Transport-Collapse relaxation ``d_t f = 1_{u > xi} - f`` for a single fiber,
  whose solution is ``f(t) = e^-t f0 + (1 - e^-t) 1_{u0 > xi}``.
* The erased-interval splice of that trajectory, which carries a time atom.
* Exact Burgers solutions: Riemann problems, the periodic step, and smooth
  data before shock formation (characteristics).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .kinetic import KineticFunction, KineticMeasure, XiGrid, reconstruct_u


# ---------------------------------------------------------------------------
# Transport-Collapse
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HeavisideMixture:
    """Kinetic function ``f0(xi) = sum_i w_i 1_{v_i > xi}`` (weights sum to 1)."""

    weights: tuple
    levels: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(w) != len(self.levels) or not 1 <= len(w) <= 4:
            raise ValueError("need 1 to 4 weighted levels")
        if np.any(w < 0) or not math.isclose(float(w.sum()), 1.0, abs_tol=1e-12):
            raise ValueError("weights must be a probability vector")

    @property
    def u0(self) -> float:
        return float(np.dot(self.weights, self.levels))

    def value(self, xi):
        xi = np.asarray(xi, dtype=float)
        return sum(w * (v > xi) for w, v in zip(self.weights, self.levels)) * np.ones_like(xi)

    def bin_average(self, xi_grid: XiGrid) -> np.ndarray:
        lo = xi_grid.edges[:-1]
        return sum(w * np.clip((v - lo) / xi_grid.width, 0.0, 1.0) for w, v in zip(self.weights, self.levels))

    def M0(self, xi):
        """``int_-inf^xi (1_{u0 > z} - f0(z)) dz`` in closed form (nonnegative)."""
        xi = np.asarray(xi, dtype=float)
        return sum(w * (np.minimum(xi, self.u0) - np.minimum(xi, v)) for w, v in zip(self.weights, self.levels))

    def M0_bin_integral(self, xi_grid: XiGrid) -> np.ndarray:
        """``int_bin M0`` over every xi bin (M0 is piecewise linear)."""
        def anti(z, c):
            # antiderivative of min(z, c)
            return np.where(z <= c, 0.5 * z * z, 0.5 * c * c + c * (z - c))

        lo, hi = xi_grid.edges[:-1], xi_grid.edges[1:]
        u0 = self.u0
        out = np.zeros_like(lo)
        for w, v in zip(self.weights, self.levels):
            out += w * ((anti(hi, u0) - anti(lo, u0)) - (anti(hi, v) - anti(lo, v)))
        return out

    def kinetic(self, xi_grid: XiGrid) -> KineticFunction:
        return KineticFunction(xi_grid, self.bin_average(xi_grid))


def _indicator_avg(u: float, xi_grid: XiGrid) -> np.ndarray:
    return np.clip((u - xi_grid.edges[:-1]) / xi_grid.width, 0.0, 1.0)


def _as_fiber(f0, xi_grid: XiGrid | None):
    if isinstance(f0, HeavisideMixture):
        if xi_grid is None:
            raise ValueError("a xi grid is needed to sample a Heaviside mixture")
        return f0.bin_average(xi_grid), xi_grid, f0.u0
    vals = np.asarray(f0.values, dtype=float)
    if vals.shape[0] != 1:
        raise ValueError("collapse oracles act on a single fiber")
    return vals[0], f0.xi_grid, float(reconstruct_u(f0)[0])


def collapse_exact(f0, t: float, xi_grid: XiGrid | None = None) -> KineticFunction:
    """``f(t) = e^-t f0 + (1 - e^-t) 1_{u0 > xi}`` in bin averages (u0 conserved exactly)."""
    vals, xg, u0 = _as_fiber(f0, xi_grid)
    e = math.exp(-t)
    return KineticFunction(xg, e * vals + (1.0 - e) * _indicator_avg(u0, xg))


def collapse_numeric(f0, t: float, dt: float, xi_grid: XiGrid | None = None) -> KineticFunction:
    """Explicit Euler for the bin-averaged system, recomputing ``u = int chi`` each step."""
    vals, xg, _ = _as_fiber(f0, xi_grid)
    n = int(round(t / dt))
    if not math.isclose(n * dt, t, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError("t must be a multiple of dt")
    f = vals.copy()
    for _ in range(n):
        u = float(reconstruct_u(KineticFunction(xg, f))[0])
        f = f + dt * (_indicator_avg(u, xg) - f)
    return KineticFunction(xg, f)


def collapse_measure(f0, t: float, xi, xi_grid: XiGrid | None = None):
    """``m(t, xi) = int_-inf^xi (1_{u0 > z} - f(t, z)) dz``.

    For a :class:`HeavisideMixture` this is the closed form ``e^-t M0(xi)``
    unless ``xi_grid`` is given, in which case (as for sampled kinetic
    functions) it is the cumulative sum of bin averages evaluated at ``xi``
    by linear interpolation between edges.
    """
    xi = np.asarray(xi, dtype=float)
    if isinstance(f0, HeavisideMixture) and xi_grid is None:
        return math.exp(-t) * f0.M0(xi)
    ft = collapse_exact(f0, t, xi_grid)
    xg = ft.xi_grid
    u0 = float(reconstruct_u(ft)[0])
    diff = _indicator_avg(u0, xg) - ft.values[0]
    cum = np.concatenate([[0.0], np.cumsum(diff) * xg.width])
    return np.interp(xi, xg.edges, cum, left=0.0, right=float(cum[-1]))


@dataclass
class ErasedTrajectory:
    """Splice ``g(t) = f(t)`` on ``[0, t1]`` and ``f(t + t2 - t1)`` afterwards."""

    f0: HeavisideMixture
    t1: float
    t2: float
    xi_grid: XiGrid
    measure: KineticMeasure
    snapshots: np.ndarray  # (n_t_bins + 1, 1, m) at the measure's t edges

    def tau(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t <= self.t1, t, t + self.t2 - self.t1)

    def at(self, t: float) -> KineticFunction:
        return collapse_exact(self.f0, float(self.tau(t)), self.xi_grid)

    def atom_profile(self, xi):
        """Atom of the splice measure at ``t1``: ``(e^-t1 - e^-t2) M0(xi)``."""
        return (math.exp(-self.t1) - math.exp(-self.t2)) * self.f0.M0(xi)

    @property
    def atom_mass(self) -> float:
        return (math.exp(-self.t1) - math.exp(-self.t2)) * float(np.sum(self.f0.M0_bin_integral(self.xi_grid)))


def erased_interval_example(f0: HeavisideMixture, t1: float, t2: float, T: float = 1.5,
                            n_t_bins: int = 30, xi_grid: XiGrid | None = None) -> ErasedTrajectory:
    """Spliced trajectory and its measure histogram (smooth part plus the atom at t1).

    The smooth density ``e^-tau(t) M0(xi)`` is integrated exactly over each
    ``(t, xi)`` bin; the atom is placed in the bin ``[lo, hi)`` containing t1.
    """
    if not 0 <= t1 <= t2:
        raise ValueError("need 0 <= t1 <= t2")
    if not 0 <= t1 < T:
        raise ValueError("t1 must lie in [0, T)")
    if xi_grid is None:
        xi_grid = XiGrid.covering(min(f0.levels), max(f0.levels), m=80)
    edges = np.linspace(0.0, T, n_t_bins + 1)
    shift = t2 - t1

    def time_mass(a, b):
        # int_a^b e^-tau(t) dt, split at t1
        out = 0.0
        if a < t1:
            out += math.exp(-a) - math.exp(-min(b, t1))
        if b > t1:
            lo = max(a, t1)
            out += math.exp(-(lo + shift)) - math.exp(-(b + shift))
        return out

    Mb = f0.M0_bin_integral(xi_grid)
    w = np.zeros((1, n_t_bins, xi_grid.m))
    for j in range(n_t_bins):
        w[0, j] = time_mass(edges[j], edges[j + 1]) * Mb
    jb = min(int(np.searchsorted(edges, t1, side="right")) - 1, n_t_bins - 1)
    w[0, jb] += (math.exp(-t1) - math.exp(-t2)) * Mb
    m = KineticMeasure(xi_grid, edges, w)
    traj = ErasedTrajectory(f0, t1, t2, xi_grid, m, np.empty(0))
    traj.snapshots = np.stack([traj.at(t).values for t in edges])
    return traj


# ---------------------------------------------------------------------------
# Burgers
# ---------------------------------------------------------------------------

def burgers_riemann(uL: float, uR: float, x, t: float):
    """Entropy solution of Burgers' equation for the jump ``uL | uR`` at x = 0."""
    x = np.asarray(x, dtype=float)
    if t <= 0:
        return np.where(x < 0, uL, uR).astype(float)
    if uL > uR:
        s = 0.5 * (uL + uR)
        return np.where(x < s * t, uL, uR).astype(float)
    return np.clip(x / t, uL, uR) if uL < uR else np.full_like(x, uL)


def _wave_span(uL, uR, t):
    if uL > uR:
        s = 0.5 * (uL + uR) * t
        return s, s
    return min(uL, uR) * t, max(uL, uR) * t


def burgers_periodic_step(x, t: float, uL: float = 1.0, uR: float = 0.0, x0: float = 0.5):
    """Entropy solution on the unit torus for ``uL`` on ``[0, x0)`` and ``uR`` elsewhere.

    Superposes the two Riemann problems at ``x0`` and at ``0`` while their
    waves have not met; raises ``ValueError`` afterwards.
    """
    x = np.mod(np.asarray(x, dtype=float), 1.0)
    a_lo, a_hi = _wave_span(uL, uR, t)      # wave at x0
    b_lo, b_hi = _wave_span(uR, uL, t)      # wave at 0 (== 1)
    if x0 + a_hi >= 1.0 + b_lo or b_hi >= x0 + a_lo:
        raise ValueError("waves interact before time t; no closed form")
    ra = x - x0
    rb = np.where(x - 1.0 >= b_lo, x - 1.0, x)
    in_a = (ra >= a_lo) & (ra <= a_hi)
    in_b = (rb >= b_lo) & (rb <= b_hi) & ~in_a
    out = np.where((rb > b_hi) & (ra < a_lo), float(uL), float(uR))
    out = np.where(in_a, burgers_riemann(uL, uR, ra, t), out)
    return np.where(in_b, burgers_riemann(uR, uL, rb, t), out)


def burgers_characteristics(u0, x, t: float, tol: float = 1e-13):
    """Smooth periodic Burgers solution ``u(x, t) = u0(y)`` with ``x = y + t u0(y)``.

    ``u0`` is a callable on the torus; ``t`` must precede shock formation so
    that ``y -> y + t u0(y)`` is increasing.  Roots are bracketed in
    ``[x - t max u0, x - t min u0]``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    yy = np.linspace(0.0, 1.0, 4097)
    lo_u, hi_u = float(np.min(u0(yy))), float(np.max(u0(yy)))
    out = np.empty_like(x)
    for i, xi in enumerate(x):
        a, b = xi - t * hi_u - 1e-12, xi - t * lo_u + 1e-12
        y = optimize.brentq(lambda s: s + t * u0(s) - xi, a, b, xtol=tol)
        out[i] = u0(y)
    return out
