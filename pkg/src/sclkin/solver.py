"""Explicit Euler-Maruyama finite-volume solver for the viscous stochastic law

    du + div(A(u) d) dt - eta lap(u) dt = sum_k g_k(x, u) d beta_k

on the periodic unit torus.  The flux divergence uses the Rusanov (local
Lax-Friedrichs) interface flux, diffusion is the centred 2N+1 point stencil,
and the noise coefficients are evaluated at the pre-step state (Ito).

Time steps are dyadic: ``dt = t_end / 2^level`` with the smallest level that
satisfies the stability bound, so paths at different resolutions can share a
Brownian path through :func:`sclkin.noise.brownian_increments`.
"""
from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .flux import FluxModel, build_flux
from .grid import GridField, TorusGrid, build_grid, gradient_array, laplacian_array, shift
from .kinetic import KineticMeasure, XiGrid
from .noise import NoiseModel, build_noise_model, brownian_increments

CHECKPOINT_FORMAT = "sclkin.pathrun"
CHECKPOINT_VERSION = 1


class SolverDivergence(FloatingPointError):
    """Non-finite state; carries the step index and path seed."""

    def __init__(self, step: int, seed: int):
        super().__init__(f"non-finite state at step {step} (path_seed={seed})")
        self.step = step
        self.seed = seed


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

def initial_condition(spec: dict, grid: TorusGrid) -> np.ndarray:
    """Bounded initial data from the catalog.

    ``constant`` {value}; ``trig`` {mean, terms: [[k, a_cos, a_sin], ...]}
    along the first axis; ``riemann`` {uL, uR, x0}: uL on [0, x0) in the
    first coordinate, uR elsewhere; ``random_fourier`` {modes, amplitude,
    seed, mean}: coefficients uniform in [-amplitude/k, amplitude/k].
    """
    kind = spec.get("kind", "trig")
    x = grid.coordinates()
    x1 = x[0]
    if kind == "constant":
        return np.full(grid.shape, float(spec.get("value", 0.0)))
    if kind == "trig":
        u = np.full(grid.shape, float(spec.get("mean", 0.0)))
        for k, ac, as_ in spec.get("terms", [[1, 0.0, 1.0]]):
            u = u + ac * np.cos(2 * math.pi * k * x1) + as_ * np.sin(2 * math.pi * k * x1)
        return u
    if kind == "riemann":
        uL, uR = float(spec.get("uL", 1.0)), float(spec.get("uR", 0.0))
        return np.where(x1 < float(spec.get("x0", 0.5)), uL, uR).astype(float)
    if kind == "random_fourier":
        rng = np.random.default_rng(int(spec.get("seed", 0)))
        amp = float(spec.get("amplitude", 0.5))
        u = np.full(grid.shape, float(spec.get("mean", 0.0)))
        for k in range(1, int(spec.get("modes", 4)) + 1):
            a, b = rng.uniform(-amp / k, amp / k, size=2)
            u = u + a * np.cos(2 * math.pi * k * x1) + b * np.sin(2 * math.pi * k * x1)
        return u
    raise ValueError(f"unknown initial condition kind {kind!r}")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class SolverConfig:
    eta: float
    t_end: float
    grid: TorusGrid
    flux: FluxModel
    noise: NoiseModel = field(default_factory=NoiseModel)
    cfl_safety: float = 0.45
    snapshot_times: list = field(default_factory=list)
    initial: dict = field(default_factory=lambda: {"kind": "trig"})
    u_bound: float | None = None
    brownian_level: int | None = None
    level_offset: int = 0
    n_t_bins: int = 32
    xi_bins: int = 128
    peclet_c: float = 1.0
    store_trajectory: bool = False
    moment_powers: tuple = (2, 4)

    def __post_init__(self):
        if not self.eta >= 0:
            raise ValueError("eta must be nonnegative")
        if not 0 < self.cfl_safety < 1:
            raise ValueError("cfl_safety must lie in (0, 1)")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.flux.dim != self.grid.dim:
            raise ValueError("flux direction and grid dimension differ")

    def initial_field(self) -> np.ndarray:
        return initial_condition(self.initial, self.grid)

    def expected_bound(self, u0: np.ndarray | None = None) -> float:
        """A priori amplitude used for the CFL speed and the xi grid."""
        if self.u_bound is not None:
            return float(self.u_bound)
        u0 = self.initial_field() if u0 is None else u0
        m = float(np.max(np.abs(u0)))
        return m + 4.0 * math.sqrt(self.noise.D0 * (1.0 + m * m) * self.t_end)

    def to_dict(self) -> dict:
        return {"eta": self.eta, "t_end": self.t_end, "cfl_safety": self.cfl_safety,
                "grid": self.grid.to_dict(), "flux": self.flux.to_dict(), "noise": self.noise_spec(),
                "snapshots": list(self.snapshot_times), "initial": self.initial,
                "u_bound": self.u_bound, "brownian_level": self.brownian_level,
                "level_offset": self.level_offset, "n_t_bins": self.n_t_bins, "xi_bins": self.xi_bins,
                "store_trajectory": self.store_trajectory}

    def noise_spec(self) -> dict:
        return getattr(self.noise, "spec", None) or self.noise.to_dict()


def config_from_dict(d: dict) -> SolverConfig:
    """Build a :class:`SolverConfig` from a JSON-style block."""
    g = d.get("grid", {})
    grid = build_grid(int(g.get("dim", 1)), int(g.get("n", 128)))
    flux = build_flux(d.get("flux"), grid.dim)
    nspec = d.get("noise") or {"kind": "none"}
    if "modes" in nspec and "kind" in nspec and "decay_q" not in nspec:
        noise = _noise_from_modes(nspec)
    else:
        noise = build_noise_model(nspec, grid.dim)
        noise.spec = dict(nspec)
    return SolverConfig(
        eta=float(d.get("eta", 0.01)), t_end=float(d.get("t_end", 0.5)), grid=grid, flux=flux,
        noise=noise, cfl_safety=float(d.get("cfl_safety", 0.45)),
        snapshot_times=[float(t) for t in d.get("snapshots", [])],
        initial=d.get("initial", {"kind": "trig"}), u_bound=d.get("u_bound"),
        brownian_level=d.get("brownian_level"), level_offset=int(d.get("level_offset", 0)),
        n_t_bins=int(d.get("n_t_bins", 32)), xi_bins=int(d.get("xi_bins", 128)),
        store_trajectory=bool(d.get("store_trajectory", False)))


def _noise_from_modes(d: dict) -> NoiseModel:
    from .noise import Mode
    modes = [Mode(tuple(m["wavevector"]), float(m["coefficient"]), m.get("shape"), float(m.get("clamp_M", 1.0)))
             for m in d["modes"]]
    return NoiseModel(modes, float(d.get("D0", 0.0)), float(d.get("D1", 0.0)), float(d.get("alpha", 1.0)),
                      float(d.get("amplitude", 0.0)), d.get("kind", "none"))


def config_hash(cfg: SolverConfig) -> str:
    return hashlib.sha256(json.dumps(cfg.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def stable_dt(config: SolverConfig, u_bound: float) -> float:
    """Largest step keeping the scheme monotone.

    ``dt = cfl / (max|a| sum_j |d_j| / dx + 2 N eta / dx^2)``.  This is the
    harmonic combination of the advective and diffusive limits: it reduces to
    ``cfl dx / max|a|`` as eta -> 0 and to ``cfl dx^2 / (2 N eta)`` without
    transport, and keeps every stencil coefficient nonnegative when both act.
    """
    g = config.grid
    speed = config.flux.max_speed(u_bound) * sum(abs(d) for d in config.flux.direction)
    rate = speed / g.dx + 2.0 * g.dim * config.eta / g.dx ** 2
    if rate <= 0:
        return config.t_end
    return config.cfl_safety / rate


def flux_divergence(u: np.ndarray, flux: FluxModel, dx: float) -> np.ndarray:
    """Conservative Rusanov divergence ``sum_j (F_{i+1/2} - F_{i-1/2}) / dx``."""
    A = flux.A(u)
    sa = np.abs(flux.a(u))
    out = np.zeros_like(u)
    for j, d in enumerate(flux.direction):
        if d == 0.0:
            continue
        Ar = shift(A, 1, j)
        ur = shift(u, 1, j)
        s = np.maximum(sa, shift(sa, 1, j)) * abs(d)
        F = 0.5 * d * (A + Ar) - 0.5 * s * (ur - u)
        out += (F - shift(F, -1, j)) / dx
    return out


def _noise_term(noise: NoiseModel, grid: TorusGrid, u: np.ndarray, dbeta: np.ndarray):
    if noise.K == 0:
        return None, None
    x = grid.coordinates()
    gk = noise.g(x if grid.dim == 2 else x[0], u)
    return np.tensordot(np.asarray(dbeta, dtype=float), gk, axes=(0, 0)), gk


def step(u, dt: float, increments, config: SolverConfig):
    """One Euler-Maruyama step; ``increments`` holds the K Brownian increments."""
    arr = u.values if isinstance(u, GridField) else np.asarray(u, dtype=float)
    g = config.grid
    out = arr - dt * flux_divergence(arr, config.flux, g.dx) + dt * config.eta * laplacian_array(arr, g.dx)
    dbeta = getattr(increments, "dbeta", increments)
    term, _ = _noise_term(config.noise, g, arr, dbeta if dbeta is not None else np.zeros(0))
    if term is not None:
        out = out + term
    if isinstance(u, GridField):
        return GridField(g, out)
    return out


# ---------------------------------------------------------------------------
# path runs
# ---------------------------------------------------------------------------

@dataclass
class PathRun:
    config: SolverConfig
    path_seed: int
    level: int
    dt_used: float
    step_count: int
    snapshots: list
    energy_ledger: dict
    kinetic_measure: KineticMeasure
    increments: np.ndarray
    u0: np.ndarray
    final: np.ndarray
    trajectory: np.ndarray | None = None
    cfl_violations: int = 0

    def snapshot(self, t: float) -> GridField:
        for ts, f in self.snapshots:
            if abs(ts - t) <= 0.5 * self.dt_used:
                return f
        raise KeyError(f"no snapshot near t={t}")

    def state_at_step(self, n: int) -> np.ndarray:
        if self.trajectory is not None:
            return self.trajectory[n]
        if n == 0:
            return self.u0
        if n == self.step_count:
            return self.final
        for ts, f in self.snapshots:
            if int(round(ts / self.dt_used)) == n:
                return f.values
        raise KeyError(f"state at step {n} not stored")

    # -- checkpoint ------------------------------------------------------
    def to_json(self) -> dict:
        m = self.kinetic_measure
        return {
            "format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
            "grid": self.config.grid.to_dict(), "config": self.config.to_dict(),
            "path_seed": int(self.path_seed), "level": self.level, "dt_used": self.dt_used,
            "step_count": self.step_count, "cfl_violations": self.cfl_violations,
            "snapshots": [[t, f.values.tolist()] for t, f in self.snapshots],
            "ledger": {k: v.tolist() for k, v in self.energy_ledger.items()},
            "increments": self.increments.tolist(), "u0": self.u0.tolist(), "final": self.final.tolist(),
            "kinetic_measure": {"xi_width": m.xi_grid.width, "xi_i0": m.xi_grid.i0, "xi_m": m.xi_grid.m,
                                "t_edges": m.t_edges.tolist(), "weights": m.weights.tolist()},
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "PathRun":
        with open(path) as fh:
            d = json.load(fh)
        if d.get("format") != CHECKPOINT_FORMAT or d.get("version") != CHECKPOINT_VERSION:
            raise ValueError("not a PathRun checkpoint of a supported version")
        cfg = config_from_dict(d["config"])
        km = d["kinetic_measure"]
        m = KineticMeasure(XiGrid(km["xi_width"], km["xi_i0"], km["xi_m"]), np.array(km["t_edges"]),
                           np.array(km["weights"]))
        return cls(cfg, d["path_seed"], d["level"], d["dt_used"], d["step_count"],
                   [(t, GridField(cfg.grid, np.array(v))) for t, v in d["snapshots"]],
                   {k: np.array(v) for k, v in d["ledger"].items()}, m,
                   np.array(d["increments"]).reshape(d["step_count"], -1), np.array(d["u0"]),
                   np.array(d["final"]), None, d.get("cfl_violations", 0))


def dyadic_level(config: SolverConfig, u_bound: float) -> int:
    dt_max = stable_dt(config, u_bound)
    level = max(0, math.ceil(math.log2(config.t_end / dt_max) - 1e-12))
    return level + config.level_offset


def run_path(config: SolverConfig, path_seed: int, u0: np.ndarray | None = None,
             increments: np.ndarray | None = None) -> PathRun:
    """Integrate one path on ``[0, t_end]``.

    The result is a pure function of ``(config, path_seed)`` (and ``u0`` when
    given explicitly).  Ledger entry ``n`` describes the pre-step state u_n:
    ``l2sq`` = ||u_n||^2, ``dissipation`` = 2 eta ||grad u_n||^2 dt,
    ``noise_input`` = sum_k ||g_k(u_n)||^2 dt, ``lp{p}`` = ||u_n||_p^p and
    ``pdiss{p}`` = eta int |u_n|^{p-2} |grad u_n|^2 dx dt.
    """
    incs = None if increments is None else [increments]
    return run_paths(config, [path_seed], u0=u0, increments=incs)[0]


def run_paths(config: SolverConfig, path_seeds, u0: np.ndarray | None = None,
              increments=None) -> list:
    """Integrate several paths in lock step (one array per step for the whole batch).

    Each returned :class:`PathRun` equals what :func:`run_path` gives for its
    seed: all per-path arithmetic is elementwise or reduces along that
    path's own grid axes.
    """
    grid = config.grid
    seeds = [int(s) for s in path_seeds]
    P = len(seeds)
    u = config.initial_field() if u0 is None else np.asarray(u0, dtype=float).reshape(grid.shape).copy()
    if not np.all(np.isfinite(u)):
        raise SolverDivergence(0, seeds[0] if seeds else 0)
    bound = config.expected_bound(u)
    level = dyadic_level(config, bound)
    N = 2 ** level
    dt = config.t_end / N
    K = config.noise.K
    if increments is None:
        ref = level if config.brownian_level is None else max(level, int(config.brownian_level))
        increments = [brownian_increments(K, config.t_end, level, s, ref) if K else np.zeros((N, 0))
                      for s in seeds]
    incs = np.stack([np.asarray(i, dtype=float).reshape(N, K) for i in increments])

    speed_max = max(float(config.flux.max_speed(bound)), 1e-300) * sum(abs(d) for d in config.flux.direction)
    if config.eta < config.peclet_c * grid.dx * config.flux.max_speed(bound):
        warnings.warn("grid-Peclet condition eta >= dx max|a| fails; scheme diffusion dominates",
                      RuntimeWarning, stacklevel=2)

    # per-path xi grids (widened independently) inside one shared buffer
    xg0 = XiGrid.covering(-bound, bound, m=config.xi_bins)
    path_xg = [xg0] * P
    buf = xg0
    n_tb = config.n_t_bins
    t_edges = np.linspace(0.0, config.t_end, n_tb + 1)
    W = np.zeros((P, grid.size, n_tb, buf.m))

    snap_steps = {}
    for t in config.snapshot_times:
        n = int(round(t / dt))
        if not 0 <= n <= N:
            raise ValueError(f"snapshot time {t} outside [0, t_end]")
        snap_steps.setdefault(n, []).append(float(t))

    vol = grid.cell_volume
    powers = tuple(config.moment_powers)
    ledger = {k: np.empty((P, N)) for k in ("t", "l2sq", "dissipation", "noise_input")}
    for p in powers:
        ledger[f"lp{p:g}"] = np.empty((P, N + 1))
        ledger[f"pdiss{p:g}"] = np.empty((P, N))
    traj = np.empty((N + 1, P) + grid.shape) if config.store_trajectory else None
    snapshots = []
    violations = np.zeros(P, dtype=int)
    U = np.broadcast_to(u, (P,) + grid.shape).copy()
    u0_arr = u.copy()
    x = grid.coordinates()
    xs = x if grid.dim == 2 else x[0]
    g_fixed = config.noise.g(xs, u) if K and config.noise.additive else None
    g_fixed_sq = float(np.sum(g_fixed * g_fixed) * vol) * dt if g_fixed is not None else 0.0
    dirsum = sum(abs(d) for d in config.flux.direction)
    gax = tuple(range(1, grid.dim + 1))
    rows = np.arange(grid.size)[None, :]
    pidx = np.arange(P)[:, None]

    def total(a):
        # row-wise reduction over each path's own cells; independent of the batch size
        return np.sum(a.reshape(P, -1), axis=1)

    for n in range(N + 1):
        if traj is not None:
            traj[n] = U
        for t in snap_steps.get(n, []):
            snapshots.append((t, U.copy()))
        absu = np.abs(U)
        for p in powers:
            ledger[f"lp{p:g}"][:, n] = total(absu ** p) * vol
        if n == N:
            break
        grad = np.stack([(shift(U, 1, a) - shift(U, -1, a)) / (2.0 * grid.dx) for a in gax])
        grad2 = np.sum(grad ** 2, axis=0)
        ledger["t"][:, n] = n * dt
        ledger["l2sq"][:, n] = total(U * U) * vol
        ledger["dissipation"][:, n] = 2.0 * config.eta * (total(grad2) * vol) * dt
        for p in powers:
            ledger[f"pdiss{p:g}"][:, n] = config.eta * (total(absu ** (p - 2) * grad2) * vol) * dt
        # kinetic measure deposit
        umin = U.reshape(P, -1).min(axis=1)
        umax = U.reshape(P, -1).max(axis=1)
        for i in range(P):
            g_i = path_xg[i]
            if not (umin[i] >= g_i.xi_min and umax[i] < g_i.xi_max):
                warnings.warn(f"u range [{umin[i]:.3g}, {umax[i]:.3g}] left the xi grid; widening",
                              RuntimeWarning)
                path_xg[i] = g_i.widened(float(umin[i]), float(umax[i]))[0]
                new_lo = min(buf.i0, path_xg[i].i0)
                new_hi = max(buf.i0 + buf.m, path_xg[i].i0 + path_xg[i].m)
                if new_lo < buf.i0 or new_hi > buf.i0 + buf.m:
                    nb = XiGrid(buf.width, new_lo, new_hi - new_lo)
                    W2 = np.zeros(W.shape[:3] + (nb.m,))
                    W2[..., buf.i0 - nb.i0:buf.i0 - nb.i0 + buf.m] = W
                    buf, W = nb, W2
        tb = min(max(int(np.searchsorted(t_edges, n * dt, side="right")) - 1, 0), n_tb - 1)
        mass = (config.eta * grad2 * dt * vol).reshape(P, -1)
        bins = buf.bin_index(U.reshape(P, -1))
        W[pidx, rows, tb, bins] += mass
        for i, m in enumerate(absu.reshape(P, -1).max(axis=1)):
            if config.flux.max_speed(float(m)) * dirsum > speed_max * (1 + 1e-12):
                violations[i] += 1
        lap = np.zeros_like(U)
        for a in gax:
            lap += shift(U, 1, a) - 2.0 * U + shift(U, -1, a)
        lap /= grid.dx ** 2
        U_next = U - dt * _flux_div_batch(U, config.flux, grid.dx) + dt * config.eta * lap
        if g_fixed is not None:
            ledger["noise_input"][:, n] = g_fixed_sq
            U_next = U_next + _combine(incs[:, n], g_fixed[:, None])
        elif K:
            gk = config.noise.g(xs, U)           # (K, P, ...)
            ledger["noise_input"][:, n] = total(np.moveaxis(gk * gk, 1, 0)) * vol * dt
            U_next = U_next + _combine(incs[:, n], gk)
        else:
            ledger["noise_input"][:, n] = 0.0
        if not np.all(np.isfinite(U_next)):
            bad = int(np.argmax(~np.all(np.isfinite(U_next.reshape(P, -1)), axis=1)))
            raise SolverDivergence(n + 1, seeds[bad])
        U = U_next

    snapshots.sort(key=lambda s: s[0])
    out = []
    for i in range(P):
        g_i = path_xg[i]
        off = g_i.i0 - buf.i0
        km = KineticMeasure(g_i, t_edges.copy(), W[i, :, :, off:off + g_i.m].copy())
        snaps = [(t, GridField(grid, a[i].copy())) for t, a in snapshots]
        led = {k: v[i].copy() for k, v in ledger.items()}
        tr = traj[:, i].copy() if traj is not None else None
        out.append(PathRun(config, seeds[i], level, dt, N, snaps, led, km, incs[i].copy(),
                           u0_arr.copy(), U[i].copy(), tr, int(violations[i])))
    return out


def _combine(db: np.ndarray, gk: np.ndarray) -> np.ndarray:
    """``sum_k db[p, k] gk[k, p]`` accumulated in mode order (batch-size independent)."""
    shape = (db.shape[0],) + (1,) * (gk.ndim - 2)
    out = db[:, 0].reshape(shape) * gk[0]
    for k in range(1, gk.shape[0]):
        out = out + db[:, k].reshape(shape) * gk[k]
    return out


def _flux_div_batch(U: np.ndarray, flux: FluxModel, dx: float) -> np.ndarray:
    """Rusanov divergence for a batch of fields (leading axis = path)."""
    A = flux.A(U)
    sa = np.abs(flux.a(U))
    out = np.zeros_like(U)
    for j, d in enumerate(flux.direction):
        if d == 0.0:
            continue
        ax = j + 1
        Ar = shift(A, 1, ax)
        ur = shift(U, 1, ax)
        s = np.maximum(sa, shift(sa, 1, ax)) * abs(d)
        F = 0.5 * d * (A + Ar) - 0.5 * s * (ur - U)
        out += (F - shift(F, -1, ax)) / dx
    return out


# ---------------------------------------------------------------------------
# ledger checks
# ---------------------------------------------------------------------------

@dataclass
class EnergyReport:
    times: np.ndarray
    margins: np.ndarray      # (paths, times)
    mean: np.ndarray
    stderr: np.ndarray

    @property
    def max_margin(self) -> float:
        return float(np.max(self.mean)) if self.mean.size else 0.0

    def passes(self, tol: float = 0.0, n_se: float = 3.0) -> bool:
        return bool(np.all(self.mean <= n_se * self.stderr + tol))


def energy_margins(path: PathRun) -> tuple:
    """Per snapshot: ``||u_m||^2 + sum_{n<m} diss_n - ||u_0||^2 - sum_{n<m} noise_n``."""
    L = path.energy_ledger
    cd = np.concatenate([[0.0], np.cumsum(L["dissipation"])])
    cn = np.concatenate([[0.0], np.cumsum(L["noise_input"])])
    l2 = L["lp2"] if "lp2" in L else None
    times, out = [], []
    for t, f in path.snapshots:
        m = int(round(t / path.dt_used))
        um2 = float(l2[m]) if l2 is not None else float(np.sum(f.values ** 2) * path.config.grid.cell_volume)
        times.append(t)
        out.append(um2 + cd[m] - L["l2sq"][0] - cn[m] if path.step_count else 0.0)
    return np.array(times), np.array(out)


def energy_check(paths) -> EnergyReport:
    """Energy-inequality margins per snapshot, averaged over an ensemble."""
    if isinstance(paths, PathRun):
        paths = [paths]
    rows = []
    times = None
    for p in paths:
        times, m = energy_margins(p)
        rows.append(m)
    M = np.array(rows)
    mean = M.mean(axis=0)
    se = M.std(axis=0, ddof=1) / math.sqrt(len(rows)) if len(rows) > 1 else np.zeros_like(mean)
    return EnergyReport(times, M, mean, se)


@dataclass
class MomentReport:
    p: float
    sup_moment: float
    sup_moment_se: float
    dissipation: float
    dissipation_se: float
    per_path_sup: np.ndarray
    per_path_diss: np.ndarray

    def bounded_by(self, c_sup: float, c_diss: float) -> bool:
        return self.sup_moment <= c_sup and self.dissipation <= c_diss


def moment_check(ensemble, p: float) -> MomentReport:
    """``E sup_t ||u(t)||_p^p`` and ``E eta int int |u|^{p-2} |grad u|^2`` from the ledgers."""
    if isinstance(ensemble, PathRun):
        ensemble = [ensemble]
    key = f"{p:g}"
    sups = np.array([float(np.max(r.energy_ledger[f"lp{key}"])) for r in ensemble])
    diss = np.array([float(np.sum(r.energy_ledger[f"pdiss{key}"])) for r in ensemble])
    n = len(ensemble)

    def se(a):
        return float(a.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0

    return MomentReport(p, float(sups.mean()), se(sups), float(diss.mean()), se(diss), sups, diss)


def weak_residual(path: PathRun, alpha, beta) -> float:
    """Direct weak residual of the PDE for ``phi = alpha(x) beta(t)``, ``beta(T) = 0``.

    ``sum_n (b_{n+1}-b_n) <u_n, al> + b_0 <u_0, al> + sum_n dt b_n [<A(u_n), d.grad al>
    + eta <u_n, lap al>] + sum_n b_n sum_k <g_k(u_n), al> dbeta_k^n``.
    """
    if path.trajectory is None:
        raise ValueError("path was run without store_trajectory=True")
    cfg = path.config
    grid = cfg.grid
    x = grid.coordinates()
    xs = x if grid.dim == 2 else x[0]
    N, dt = path.step_count, path.dt_used
    T = N * dt
    b = beta.value(np.arange(N + 1) * dt, T)
    al = alpha.value(x)
    ga = alpha.grad(x)
    dga = sum(d * ga[j] for j, d in enumerate(cfg.flux.direction))
    la = alpha.laplacian(x)
    vol = grid.cell_volume
    total = b[0] * float(np.sum(path.trajectory[0] * al) * vol)
    for n in range(N):
        u = path.trajectory[n]
        total += (b[n + 1] - b[n]) * float(np.sum(u * al) * vol)
        total += dt * b[n] * (float(np.sum(cfg.flux.A(u) * dga) * vol) + cfg.eta * float(np.sum(u * la) * vol))
        if cfg.noise.K:
            gk = cfg.noise.g(xs, u)
            total += b[n] * float(np.sum(np.sum(gk * al, axis=tuple(range(1, gk.ndim))) * path.increments[n])) * vol
    return float(total)
