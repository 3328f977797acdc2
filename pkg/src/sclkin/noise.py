"""Finite-mode stochastic forcing ``sum_k g_k(x, u) d beta_k``.

Mode catalog (closed forms only)::

    additive        g_k(x)    = a_k cos(2 pi k . x)
    multiplicative  g_k(x, u) = a_k cos(2 pi k . x) s(u),  s in {sin, rational, clamp}

with ``a_k = amplitude * max(k, 1)^-q`` and ``rational(u) = u / (1 + u^2)``.
Every catalog mode is globally Lipschitz in ``u``, so no further regularization
of the diffusion coefficient is needed before time stepping.

Brownian increments come from a counter-based stream: mode ``k`` of path
``seed`` owns the Philox4x64 stream with key ``(seed, k)``; the ``j``-th raw
64-bit word of that stream is mapped to a standard normal by
``ndtri(((w >> 11) + 0.5) * 2^-53)`` and scaled by ``sqrt(dt)``.  The draw for
``(seed, step, k)`` is therefore a pure function of the key.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from .grid import GridField, TorusGrid, torus_distance

_MASK64 = (1 << 64) - 1

# shape -> (sup|s|, Lipschitz constant, sup s^2/(1+u^2))
_SHAPES = {
    "sin": (1.0, 1.0, 1.0),
    "rational": (0.5, 1.0, 0.25),
    "clamp": (None, 1.0, 1.0),
}


def _shape_fn(shape: str, clamp_M: float):
    if shape == "sin":
        return np.sin
    if shape == "rational":
        return lambda u: u / (1.0 + u * u)
    if shape == "clamp":
        return lambda u: np.clip(u, -clamp_M, clamp_M)
    raise ValueError(f"unknown multiplicative shape {shape!r}")


@dataclass(frozen=True)
class Mode:
    wavevector: tuple
    coefficient: float
    shape: str | None = None  # None = additive
    clamp_M: float = 1.0

    def spatial(self, x: Sequence[np.ndarray]) -> np.ndarray:
        phase = sum(2.0 * math.pi * k * xi for k, xi in zip(self.wavevector, x))
        return self.coefficient * np.cos(phase)

    def __call__(self, x, u):
        xs = x if isinstance(x, (tuple, list)) else (x,)
        base = self.spatial([np.asarray(xi, dtype=float) for xi in xs])
        if self.shape is None:
            return base * np.ones_like(np.asarray(u, dtype=float))
        return base * _shape_fn(self.shape, self.clamp_M)(np.asarray(u, dtype=float))

    @property
    def x_lipschitz(self) -> float:
        return 2.0 * math.pi * math.sqrt(sum(k * k for k in self.wavevector))

    @property
    def s_bounds(self) -> tuple:
        S, L, c0 = _SHAPES[self.shape]
        return (self.clamp_M if S is None else S), L, c0


@dataclass
class NoiseModel:
    modes: list = field(default_factory=list)
    D0: float = 0.0
    D1: float = 0.0
    alpha: float = 1.0
    amplitude: float = 0.0
    kind: str = "none"

    @property
    def K(self) -> int:
        return len(self.modes)

    @property
    def additive(self) -> bool:
        return all(m.shape is None for m in self.modes)

    def h(self, r):
        """Modulus ``h(r) = r^alpha`` of the u-dependence."""
        return np.abs(np.asarray(r, dtype=float)) ** self.alpha

    def g(self, x, u) -> np.ndarray:
        """All mode values, shape ``(K,) + broadcast(x, u).shape``."""
        u = np.asarray(u, dtype=float)
        if self.K == 0:
            return np.zeros((0,) + u.shape)
        return np.stack([m(x, u) for m in self.modes])

    def lipschitz_u(self) -> float:
        """Constant L with ``sum_k |g_k(x,u) - g_k(x,v)|^2 <= L^2 |u-v|^2``."""
        tot = 0.0
        for m in self.modes:
            if m.shape is not None:
                tot += (m.coefficient * m.s_bounds[1]) ** 2
        return math.sqrt(tot)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "K": self.K, "amplitude": self.amplitude, "alpha": self.alpha,
                "D0": self.D0, "D1": self.D1,
                "modes": [{"wavevector": list(m.wavevector), "coefficient": m.coefficient,
                           "shape": m.shape, "clamp_M": m.clamp_M} for m in self.modes]}


def declared_constants(modes: Sequence[Mode], alpha: float) -> tuple:
    """Closed-form (D0, D1) valid for the catalog modes with ``h(r) = r^alpha``."""
    D0 = D1 = 0.0
    for m in modes:
        a2 = m.coefficient ** 2
        lx = m.x_lipschitz
        if m.shape is None:
            D0 += a2
            D1 += a2 * lx ** 2
            continue
        S, L, c0 = m.s_bounds
        D0 += a2 * c0
        # |s(u)-s(v)|^2 <= min(L r, 2S)^2 <= c_h r^{1+alpha}
        c_h = L ** 2 if alpha >= 1.0 else max(L ** 2, 4.0 * S ** 2)
        if lx == 0.0:
            D1 += a2 * c_h
        else:
            D1 += 2.0 * a2 * max((lx * S) ** 2, c_h)
    return D0, D1


def build_noise_model(spec: dict | None = None, dim: int = 1) -> NoiseModel:
    """Build a catalog model from a config block.

    Recognized keys: ``kind`` (none|additive|multiplicative), ``K``,
    ``amplitude``, ``decay_q``, ``shape_s``, ``alpha``, ``k0`` (first
    wavenumber, 0 gives a spatially uniform first mode), ``clamp_M``,
    ``wavevectors`` (explicit list, overrides ``k0``) and optional declared
    ``D0``/``D1`` which are verified before being accepted.
    """
    spec = dict(spec or {})
    kind = spec.get("kind", "none" if not spec.get("K") else "additive")
    K = int(spec.get("K", 0)) if kind != "none" else 0
    alpha = float(spec.get("alpha", 1.0))
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    amplitude = float(spec.get("amplitude", 1.0 if K else 0.0))
    q = float(spec.get("decay_q", 1.0))
    if K and q < 1.0:
        raise ValueError("decay_q must be >= 1")
    k0 = int(spec.get("k0", 1))
    shape = spec.get("shape_s", "sin") if kind == "multiplicative" else None
    clamp_M = float(spec.get("clamp_M", 1.0))
    if kind not in ("none", "additive", "multiplicative"):
        raise ValueError(f"unknown noise kind {kind!r}")
    wvs = spec.get("wavevectors")
    modes = []
    for j in range(K):
        if wvs is not None:
            wv = tuple(int(c) for c in wvs[j])
        else:
            wv = (k0 + j,) + (0,) * (dim - 1)
        kk = math.sqrt(sum(c * c for c in wv))
        modes.append(Mode(wv, amplitude * max(kk, 1.0) ** (-q), shape, clamp_M))
    D0, D1 = declared_constants(modes, alpha)
    model = NoiseModel(modes, D0, D1, alpha, amplitude, kind)
    if "D0" in spec or "D1" in spec:
        model.D0 = float(spec.get("D0", D0))
        model.D1 = float(spec.get("D1", D1))
        r0 = verify_D0(model)
        r1 = verify_D1(model, d1_lattice(model, dim))
        if not (r0.passed and r1.passed):
            raise ValueError(f"declared noise constants fail verification: {r0}, {r1}")
    return model


def G2(model: NoiseModel, x, u) -> np.ndarray:
    """``sum_k |g_k(x, u)|^2``."""
    if model.K == 0:
        xs = x if isinstance(x, (tuple, list)) else (x,)
        return np.zeros(np.broadcast(*[np.asarray(a) for a in xs], np.asarray(u)).shape)
    g = model.g(x, u)
    return np.sum(g * g, axis=0)


@dataclass
class BoundReport:
    max_ratio: float
    constant: float
    passed: bool
    n_checked: int

    @property
    def normalized(self) -> float:
        return self.max_ratio / self.constant if self.constant > 0 else (0.0 if self.max_ratio == 0 else math.inf)


def _x_samples(dim: int, n: int = 64):
    x = np.arange(n) / n
    if dim == 1:
        return (x,)
    return tuple(np.meshgrid(x, x, indexing="ij"))


def verify_D0(model: NoiseModel, u_range=(-10.0, 10.0), n_samples: int = 401, dim: int | None = None) -> BoundReport:
    """Sweep ``G^2(x,u) / (1+u^2)`` over an (x, u) lattice."""
    if dim is None:
        dim = len(model.modes[0].wavevector) if model.modes else 1
    u = np.linspace(u_range[0], u_range[1], n_samples)
    xs = _x_samples(dim, 32 if dim == 2 else 64)
    xb = tuple(xi[..., None] for xi in xs)
    ratio = G2(model, xb if dim == 2 else xb[0], u) / (1.0 + u ** 2)
    mr = float(np.max(ratio)) if model.K else 0.0
    return BoundReport(mr, model.D0, mr <= model.D0 * (1 + 1e-12), int(np.size(ratio)))


def d1_lattice(model: NoiseModel, dim: int = 1, n_x: int = 12, u_values=None, seed: int = 0):
    """Documented verification lattice of pairs ``(x, u, y, v)``.

    Full cartesian product of ``n_x`` points per axis for x and y, and the
    default u/v values ``{-4, -2, -1, -0.5, -0.1, 0, 0.05, 0.3, 1, 2.5, 5}``,
    plus 2000 random pairs (fixed seed) at small separations.
    """
    if u_values is None:
        u_values = np.array([-4, -2, -1, -0.5, -0.1, 0, 0.05, 0.3, 1, 2.5, 5.0])
    u_values = np.asarray(u_values, dtype=float)
    pts = np.arange(n_x) / n_x
    if dim == 1:
        X = pts[:, None]
    else:
        X = np.stack(np.meshgrid(pts, pts, indexing="ij"), -1).reshape(-1, 2)
    xi, yi, ui, vi = np.meshgrid(np.arange(len(X)), np.arange(len(X)),
                                 np.arange(len(u_values)), np.arange(len(u_values)), indexing="ij")
    x = X[xi.ravel()]
    y = X[yi.ravel()]
    u = u_values[ui.ravel()]
    v = u_values[vi.ravel()]
    rng = np.random.default_rng(seed)
    m = 2000
    xr = rng.random((m, dim))
    yr = (xr + rng.normal(scale=1e-2, size=(m, dim))) % 1.0
    ur = rng.uniform(-3, 3, m)
    vr = ur + rng.normal(scale=1e-2, size=m)
    return (np.concatenate([x, xr]), np.concatenate([u, ur]),
            np.concatenate([y, yr]), np.concatenate([v, vr]))


def verify_D1(model: NoiseModel, sample_pairs) -> BoundReport:
    """Max over pairs of ``sum_k |g_k(x,u)-g_k(y,v)|^2 / (|x-y|^2 + |u-v| h(|u-v|))``.

    ``sample_pairs = (x, u, y, v)`` with x, y of shape ``(m, dim)`` or ``(m,)``.
    Pairs with ``(x,u) == (y,v)`` are skipped.
    """
    x, u, y, v = (np.asarray(a, dtype=float) for a in sample_pairs)
    if x.ndim == 1:
        x, y = x[:, None], y[:, None]
    d = torus_distance(x, y) if x.shape[1] > 1 else torus_distance(x[:, 0], y[:, 0])
    r = np.abs(u - v)
    denom = d ** 2 + r * model.h(r)
    keep = denom > 0
    if model.K == 0 or not np.any(keep):
        return BoundReport(0.0, model.D1, True, int(keep.sum()))
    xs = tuple(x[keep, i] for i in range(x.shape[1]))
    ys = tuple(y[keep, i] for i in range(y.shape[1]))
    diff = model.g(xs, u[keep]) - model.g(ys, v[keep])
    ratio = np.sum(diff * diff, axis=0) / denom[keep]
    mr = float(ratio.max())
    return BoundReport(mr, model.D1, mr <= model.D1 * (1 + 1e-12), int(keep.sum()))


# ---------------------------------------------------------------------------
# Brownian increments
# ---------------------------------------------------------------------------

@dataclass
class IncrementBatch:
    dt: float
    dbeta: np.ndarray
    path_seed: int
    step_index: int


def _words_to_normal(words: np.ndarray) -> np.ndarray:
    u = ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    return ndtri(u)


def standard_normals(path_seed: int, mode: int, start: int, count: int) -> np.ndarray:
    """Normals for steps ``start .. start+count-1`` of mode ``mode`` of ``path_seed``."""
    bg = np.random.Philox(key=[int(path_seed) & _MASK64, int(mode)])
    bg.advance(start // 4)
    words = bg.random_raw(start % 4 + count)[start % 4:]
    return _words_to_normal(np.asarray(words, dtype=np.uint64))


def sample_increments(model: NoiseModel, dt: float, path_seed: int, step_index: int) -> IncrementBatch:
    if not dt > 0:
        raise ValueError("dt must be positive")
    z = np.array([standard_normals(path_seed, k, step_index, 1)[0] for k in range(model.K)])
    return IncrementBatch(dt, math.sqrt(dt) * z.reshape(model.K), int(path_seed), int(step_index))


def brownian_increments(K: int, t_end: float, level: int, path_seed: int,
                        ref_level: int | None = None) -> np.ndarray:
    """Increments over the dyadic partition of ``[0, t_end]`` into ``2^level`` steps.

    Draws live on the finer ``ref_level`` partition and are summed in blocks,
    so runs at different levels sharing ``(path_seed, ref_level)`` see the
    same Brownian path.  Returns shape ``(2^level, K)``.
    """
    ref_level = level if ref_level is None else ref_level
    if ref_level < level:
        raise ValueError("ref_level must be >= level")
    n_ref = 2 ** ref_level
    dt_ref = t_end / n_ref
    out = np.empty((2 ** level, K))
    block = 2 ** (ref_level - level)
    for k in range(K):
        z = standard_normals(path_seed, k, 0, n_ref) * math.sqrt(dt_ref)
        out[:, k] = z.reshape(2 ** level, block).sum(axis=1)
    return out


def diffusion_apply(model: NoiseModel, u: GridField) -> list:
    """``[g_k(., u(.))]`` as a list of K grid fields."""
    x = u.grid.coordinates()
    vals = model.g(x if u.grid.dim == 2 else x[0], u.values)
    return [GridField(u.grid, vals[k]) for k in range(model.K)]
