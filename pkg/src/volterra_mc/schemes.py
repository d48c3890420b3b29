"""K-discrete and K-integrated Euler schemes for stochastic Volterra equations

    X_t = X_0 + int_0^t K1(t,s) b(s, X_s) ds + int_0^t K2(t,s) sigma(s, X_s) dW_s

on the regular grid t_k = kT/n, plus their continuous-time extension, the
companion processes, and the piecewise-affine interpolation of grid paths.

State arrays are laid out as ``(num_paths, n + 1, d)``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _accel, engine
from .errors import DimensionError, DomainError, NumericalBlowupError
from .grid import TimeGrid
from .kernels import (
    DIFFUSION, DRIFT, K_DISCRETE, K_INTEGRATED, SCHEMES, ConstantKernel, GridCellIntegrals,
    Kernel, PowerKernel, build_cov_matrices, build_drift_weights, kernel_table,
)
from .matrixlab import SymFactor, factor_psd

BLOWUP_CAP = 1e12


# --------------------------------------------------------------------------
# coefficients and initial conditions


@dataclass(frozen=True)
class CoefficientSet:
    """Drift ``b(t, x) -> (P, d)`` and diffusion ``sigma(t, x) -> (P, d, q)``.

    Both callables receive ``x`` with shape ``(P, d)``.  ``mu``/``nu`` are set
    when the drift is affine, ``b(t, x) = mu(t) + nu(t) x``.
    ``scalar_monotone_convex`` marks d = q = 1 coefficients whose drift and
    ``|sigma|`` are convex and monotone ("nondecreasing" / "nonincreasing").
    """

    dim_d: int
    dim_q: int
    b: Callable
    sigma: Callable
    mu: Optional[Callable] = None
    nu: Optional[Callable] = None
    scalar_monotone_convex: Optional[str] = None
    meta: dict = field(default_factory=dict)

    @property
    def affine_drift(self) -> bool:
        return self.mu is not None and self.nu is not None

    def drift(self, t: float, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.dim_d)
        out = np.asarray(self.b(t, x), dtype=float)
        return np.broadcast_to(out, x.shape)

    def diffusion(self, t: float, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, self.dim_d)
        out = np.asarray(self.sigma(t, x), dtype=float)
        return np.broadcast_to(out, (x.shape[0], self.dim_d, self.dim_q))

    @classmethod
    def scalar(cls, b: Callable, sigma: Callable, mu=None, nu=None, scalar_monotone_convex=None,
               meta=None) -> "CoefficientSet":
        """d = q = 1 coefficients from ``b(t, x)`` and ``sigma(t, x)`` on 1-d arrays."""

        def b_vec(t, x):
            return np.asarray(b(t, x[:, 0]), dtype=float).reshape(-1, 1)

        def s_vec(t, x):
            return np.asarray(sigma(t, x[:, 0]), dtype=float).reshape(-1, 1, 1)

        mu_v = None if mu is None else (lambda t: np.atleast_1d(np.asarray(mu(t), dtype=float)))
        nu_v = None if nu is None else (lambda t: np.atleast_2d(np.asarray(nu(t), dtype=float)))
        return cls(1, 1, b_vec, s_vec, mu_v, nu_v, scalar_monotone_convex, dict(meta or {}))

    @classmethod
    def affine(cls, mu, nu, sigma: Callable, dim_q: int, meta=None) -> "CoefficientSet":
        """Affine drift with constant (or callable) ``mu`` and ``nu``."""
        mu_f = mu if callable(mu) else (lambda t, m=np.atleast_1d(np.asarray(mu, float)): m)
        nu_f = nu if callable(nu) else (lambda t, m=np.atleast_2d(np.asarray(nu, float)): m)
        d = np.atleast_1d(mu_f(0.0)).shape[0]
        if np.shape(nu_f(0.0)) != (d, d):
            raise DimensionError("nu must be a d x d matrix")

        def b(t, x):
            return mu_f(t)[None, :] + x @ np.asarray(nu_f(t)).T

        return cls(d, dim_q, b, sigma, mu_f, nu_f, None, dict(meta or {}))

    def check_affine(self, T: float = 1.0, num: int = 64, seed: int = 0, atol: float = 1e-12) -> bool:
        """Verify ``b = mu + nu x`` on random points."""
        if not self.affine_drift:
            return False
        rng = engine.generator(seed)
        for t in rng.uniform(0, T, size=8):
            x = rng.normal(scale=3.0, size=(num, self.dim_d))
            expect = self.mu(t)[None, :] + x @ np.asarray(self.nu(t)).T
            got = self.drift(t, x)
            if not np.allclose(got, expect, rtol=0, atol=atol * (1 + np.abs(expect).max())):
                return False
        return True


class PointMass:
    def __init__(self, value):
        self.value = np.atleast_1d(np.asarray(value, dtype=float))

    def sample(self, master_seed: int, path_indices, d: int) -> np.ndarray:
        v = np.broadcast_to(self.value, (d,))
        return np.tile(v, (len(path_indices), 1))

    def to_spec(self):
        return {"type": "point", "value": self.value.tolist() if self.value.size > 1 else float(self.value[0])}


class GaussianInit:
    """Independent N(mean_i, std_i^2) coordinates."""

    def __init__(self, mean=0.0, std=1.0):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.std = np.atleast_1d(np.asarray(std, dtype=float))
        if np.any(self.std < 0):
            raise DomainError("std must be non-negative")

    def sample(self, master_seed, path_indices, d):
        z = engine.normals_matrix(master_seed, path_indices, d, stream=engine.STREAM_INIT)
        return np.broadcast_to(self.mean, (d,)) + np.broadcast_to(self.std, (d,)) * z

    def to_spec(self):
        return {"type": "gaussian", "mean": self.mean.tolist(), "std": self.std.tolist()}


class UniformInit:
    def __init__(self, low=0.0, high=1.0):
        self.low = np.atleast_1d(np.asarray(low, dtype=float))
        self.high = np.atleast_1d(np.asarray(high, dtype=float))
        if np.any(self.high < self.low):
            raise DomainError("need low <= high")

    def sample(self, master_seed, path_indices, d):
        out = np.empty((len(path_indices), d))
        for row, p in enumerate(path_indices):
            raw = engine.substream(master_seed, p, engine.STREAM_INIT).random_raw(d)
            out[row] = engine.uniforms_from_raw(np.asarray(raw, dtype=np.uint64))
        lo = np.broadcast_to(self.low, (d,))
        return lo + (np.broadcast_to(self.high, (d,)) - lo) * out

    def to_spec(self):
        return {"type": "uniform", "low": self.low.tolist(), "high": self.high.tolist()}


# --------------------------------------------------------------------------
# noise


def noise_size(scheme: str, n: int, q: int) -> int:
    """Raw standard normals consumed per path."""
    if scheme == K_DISCRETE:
        return n * q
    if scheme == K_INTEGRATED:
        return q * n * (n + 1) // 2
    raise DomainError(f"unknown scheme {scheme!r}")


@dataclass
class NoisePlan:
    """Per-path driving noise of one scheme on one grid.

    ``increments[p, l-1]`` holds W_{t_l} - W_{t_{l-1}} (K-discrete).
    ``blocks[l-1][p, a]`` holds ``int_{t_{l-1}}^{t_l} K2(t_{l+a}, s) dW_s`` (K-integrated).
    """

    scheme: str
    grid: TimeGrid
    dim_q: int
    increments: Optional[np.ndarray] = None
    blocks: Optional[list] = None

    @property
    def num_paths(self) -> int:
        return self.increments.shape[0] if self.increments is not None else self.blocks[0].shape[0]

    def block_component(self, l: int, k: int) -> np.ndarray:
        """``int_{t_{l-1}}^{t_l} K2(t_k, s) dW_s`` for all paths, shape (P, q)."""
        return self.blocks[l - 1][:, k - l, :]

    @staticmethod
    def concat(plans: list["NoisePlan"]) -> "NoisePlan":
        first = plans[0]
        if first.increments is not None:
            return NoisePlan(first.scheme, first.grid, first.dim_q,
                             increments=np.concatenate([p.increments for p in plans]))
        blocks = [np.concatenate([p.blocks[i] for p in plans]) for i in range(len(first.blocks))]
        return NoisePlan(first.scheme, first.grid, first.dim_q, blocks=blocks)


_FACTOR_CACHE: dict = {}


def integrated_noise_factors(kernel2: Kernel, grid: TimeGrid, tol: float = 1e-10) -> list[SymFactor]:
    """Factors T^(l) with T^(l) T^(l)* = Sigma^(l), l = 1..n (list index l-1)."""
    key = None
    if isinstance(kernel2, (PowerKernel, ConstantKernel)):
        key = (repr(kernel2), grid.n, grid.T, tol)
        if key in _FACTOR_CACHE:
            return _FACTOR_CACHE[key]
    mats = build_cov_matrices(kernel2, grid)
    factors = None
    if kernel2.stationary:
        base = factor_psd(mats[0], tol)
        if base.method == "cholesky":
            # leading blocks of a Cholesky factor factor the leading sub-matrices
            factors = [SymFactor(m.shape[0], base.factor[: m.shape[0], : m.shape[0]], "cholesky",
                                 base.reconstruction_error) for m in mats]
    if factors is None:
        factors = [factor_psd(m, tol) for m in mats]
    if key is not None:
        _FACTOR_CACHE[key] = factors
    return factors


def make_noise(scheme: str, grid: TimeGrid, normals: np.ndarray, dim_q: int,
               factors: Optional[list[SymFactor]] = None) -> NoisePlan:
    """Turn raw per-path normals ``(P, noise_size)`` into a NoisePlan."""
    n, P = grid.n, normals.shape[0]
    if normals.shape[1] != noise_size(scheme, n, dim_q):
        raise DimensionError("raw normal count does not match the scheme layout")
    if scheme == K_DISCRETE:
        return NoisePlan(scheme, grid, dim_q, increments=math.sqrt(grid.h) * normals.reshape(P, n, dim_q))
    blocks = []
    pos = 0
    for l in range(1, n + 1):
        m = n - l + 1
        z = normals[:, pos: pos + m * dim_q].reshape(P, dim_q, m)
        pos += m * dim_q
        y = z @ factors[l - 1].factor.T  # (P, q, m)
        blocks.append(np.ascontiguousarray(y.transpose(0, 2, 1)))
    return NoisePlan(scheme, grid, dim_q, blocks=blocks)


# --------------------------------------------------------------------------
# scheme tables and the recursion


@dataclass(frozen=True)
class SchemeContext:
    """Everything needed to run one scheme on one grid, computed once."""

    scheme: str
    coeffs: CoefficientSet
    k1: Kernel
    k2: Kernel
    grid: TimeGrid
    weights: GridCellIntegrals
    k2_table: Optional[np.ndarray] = None
    factors: Optional[list] = None

    @classmethod
    def build(cls, scheme: str, coeffs: CoefficientSet, k1: Kernel, k2: Kernel, grid: TimeGrid,
              tol: float = 1e-10) -> "SchemeContext":
        if scheme not in SCHEMES:
            raise DomainError(f"unknown scheme {scheme!r}")
        k1.validate_role(DRIFT)
        k2.validate_role(DIFFUSION)
        weights = build_drift_weights(k1, grid, scheme)
        if scheme == K_DISCRETE:
            return cls(scheme, coeffs, k1, k2, grid, weights, k2_table=kernel_table(k2, grid))
        return cls(scheme, coeffs, k1, k2, grid, weights, factors=integrated_noise_factors(k2, grid, tol))

    def make_noise(self, normals: np.ndarray) -> NoisePlan:
        return make_noise(self.scheme, self.grid, normals, self.coeffs.dim_q, self.factors)

    def draw_noise(self, master_seed: int, path_indices) -> NoisePlan:
        size = noise_size(self.scheme, self.grid.n, self.coeffs.dim_q)
        return self.make_noise(engine.normals_matrix(master_seed, path_indices, size))


def _check_state(x: np.ndarray, k: int, cap: float) -> None:
    if not np.all(np.isfinite(x)) or (x.size and np.abs(x).max() > cap):
        raise NumericalBlowupError(f"state magnitude exceeded {cap:g} at step {k}")


# paths advanced together inside run_recursion; small enough to stay in cache
RECURSION_BLOCK = 128


def apply_sigma(s: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``sigma . y`` summed over driver coordinates in ascending order.

    ``s`` has shape (P, d, q); ``y`` has shape (..., P, q) and the result
    (..., P, d).  Shared by the scheme and the companion recursion so both use
    the same floating-point operations.
    """
    out = s[:, :, 0] * y[..., 0:1]
    for r in range(1, s.shape[2]):
        out = out + s[:, :, r] * y[..., r:r + 1]
    return out


def run_recursion(ctx: SchemeContext, x0: np.ndarray, noise: NoisePlan, cap: float = BLOWUP_CAP) -> np.ndarray:
    """Grid values ``(P, n+1, d)`` of the scheme driven by ``noise``.

    After step l is known, its increment ``b w[k][l] + sigma . noise(l, k)`` is
    pushed onto every later target time k.  Each X_{t_k} is therefore
    accumulated in ascending l, starting from X0, which is the summation order
    of the companion recursion.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1, ctx.coeffs.dim_d)
    P = x0.shape[0]
    compiled = _accel.AVAILABLE and ctx.coeffs.dim_d == 1 and ctx.coeffs.dim_q == 1
    block = RECURSION_BLOCK
    if compiled:
        # column l of the weight tables as contiguous rows, shared by all blocks
        W1T = np.ascontiguousarray(ctx.weights.drift_weights.T)
        K2T = np.ascontiguousarray(ctx.k2_table.T) if ctx.scheme == K_DISCRETE else None
    out = np.empty((P, ctx.grid.n + 1, ctx.coeffs.dim_d))
    for a in range(0, P, block):
        b = min(a + block, P)
        if compiled:
            out[a:b] = _recursion_compiled(ctx, x0[a:b], noise, a, b, cap, W1T, K2T)
        else:
            out[a:b] = _recursion_block(ctx, x0[a:b], noise, a, b, cap)
    return out


def _recursion_block(ctx, x0, noise, a, b, cap):
    grid, coeffs = ctx.grid, ctx.coeffs
    n, d = grid.n, coeffs.dim_d
    if d == 1 and coeffs.dim_q == 1:
        return _recursion_block_scalar(ctx, x0, noise, a, b, cap)
    t = grid.times
    P = b - a
    W1 = ctx.weights.drift_weights
    # A[k] accumulates X_{t_k}; rows k < l are final once step l starts
    A = np.empty((n + 1, P, d))
    A[:] = x0[None]
    if ctx.scheme == K_DISCRETE:
        dW = noise.increments[a:b]
        K2 = ctx.k2_table
    for l in range(1, n + 1):
        x = A[l - 1]
        drift = coeffs.drift(t[l - 1], x)
        s = coeffs.diffusion(t[l - 1], x)
        inc = W1[l:, l, None, None] * drift[None]
        if ctx.scheme == K_DISCRETE:
            inc += K2[l:, l, None, None] * apply_sigma(s, dW[:, l - 1])[None]
        else:
            y = noise.blocks[l - 1][a:b].transpose(1, 0, 2)  # (n-l+1, P, q)
            inc += apply_sigma(s, y)
        A[l:] += inc
        _check_state(A[l], l, cap)
    return A.transpose(1, 0, 2)


def _recursion_block_scalar(ctx, x0, noise, a, b, cap):
    """d = q = 1 version of the block recursion with the same operation order."""
    grid, coeffs = ctx.grid, ctx.coeffs
    n = grid.n
    t = grid.times
    P = b - a
    # column l of the weight tables as contiguous rows
    W1T = np.ascontiguousarray(ctx.weights.drift_weights.T)
    A = np.empty((n + 1, P))
    A[:] = x0[:, 0][None]
    inc = np.empty((n, P))
    tmp = np.empty((n, P))
    if ctx.scheme == K_DISCRETE:
        dW = np.ascontiguousarray(noise.increments[a:b, :, 0].T)  # (n, P)
        K2T = np.ascontiguousarray(ctx.k2_table.T)
    for l in range(1, n + 1):
        m = n + 1 - l
        x = A[l - 1][:, None]
        drift = coeffs.drift(t[l - 1], x)[:, 0]
        s = coeffs.diffusion(t[l - 1], x)[:, 0, 0]
        iv, tv = inc[:m], tmp[:m]
        np.multiply(W1T[l, l:, None], drift[None], out=iv)
        if ctx.scheme == K_DISCRETE:
            np.multiply(K2T[l, l:, None], (s * dW[l - 1])[None], out=tv)
        else:
            np.multiply(s[None], noise.blocks[l - 1][a:b, :, 0].T, out=tv)
        iv += tv
        A[l:] += iv
        _check_state(A[l], l, cap)
    return A.T[:, :, None]


def _recursion_compiled(ctx, x0, noise, a, b, cap, W1T, K2T):
    """d = q = 1 recursion with the accumulation loop compiled; same operation order."""
    grid, coeffs = ctx.grid, ctx.coeffs
    n = grid.n
    t = grid.times
    P = x0.shape[0]
    # rows are paths so each path's target times are contiguous
    A = np.empty((P, n + 1))
    A[:] = x0
    if ctx.scheme == K_DISCRETE:
        dW = np.ascontiguousarray(noise.increments[a:b, :, 0].T)  # (n, P)
    for l in range(1, n + 1):
        x = A[:, l - 1:l]
        drift = np.ascontiguousarray(coeffs.drift(t[l - 1], x)[:, 0])
        s = np.ascontiguousarray(coeffs.diffusion(t[l - 1], x)[:, 0, 0])
        if ctx.scheme == K_DISCRETE:
            _accel.push_discrete(A, l, W1T[l, l:], drift, K2T[l, l:], s * dW[l - 1])
        else:
            _accel.push_integrated(A, l, W1T[l, l:], drift, s, noise.blocks[l - 1][a:b, :, 0])
        _check_state(A[:, l], l, cap)
    return A[:, :, None]


# --------------------------------------------------------------------------
# batches


@dataclass
class PathBatch:
    grid: TimeGrid
    dim_d: int
    paths: np.ndarray
    master_seed: int
    scheme: str
    meta: dict = field(default_factory=dict)
    noise: Optional[NoisePlan] = None
    context: Optional[SchemeContext] = None

    @property
    def num_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def initial(self) -> np.ndarray:
        return self.paths[:, 0]

    @property
    def terminal(self) -> np.ndarray:
        return self.paths[:, -1]

    def metadata(self) -> dict:
        out = {
            "grid": self.grid.to_dict(),
            "master_seed": int(self.master_seed),
            "scheme": self.scheme,
            "num_paths": self.num_paths,
            "dim_d": self.dim_d,
        }
        out.update(self.meta)
        return out

    def to_csv(self, path) -> None:
        """CSV with header ``path,k,t,x_1..x_d`` and 17 significant digits."""
        P, n1, d = self.paths.shape
        times = self.grid.times
        with open(path, "w", newline="") as fh:
            fh.write(",".join(["path", "k", "t"] + [f"x_{i + 1}" for i in range(d)]) + "\n")
            fmt = "%d,%d,%s\n"
            for p in range(P):
                vals = self.paths[p]
                fh.writelines(
                    fmt % (p, k, ",".join(format(v, ".17g") for v in (times[k], *vals[k])))
                    for k in range(n1)
                )

    def write(self, directory, stem: str = "paths") -> tuple[str, str]:
        import os

        os.makedirs(directory, exist_ok=True)
        csv_path = os.path.join(directory, f"{stem}.csv")
        json_path = os.path.join(directory, f"{stem}.json")
        self.to_csv(csv_path)
        with open(json_path, "w") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return csv_path, json_path


def read_paths_csv(path) -> np.ndarray:
    """Inverse of ``PathBatch.to_csv``: array ``(P, n+1, d)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    d = len(header) - 3
    P = int(body[:, 0].max()) + 1
    return body[:, 3:].reshape(P, -1, d)


def simulate(scheme: str, coeffs: CoefficientSet, k1: Kernel, k2: Kernel, grid: TimeGrid, init,
             num_paths: int, master_seed: int, *, threads: Optional[int] = None,
             chunk_size: int = engine.DEFAULT_CHUNK, blowup_cap: float = BLOWUP_CAP,
             keep_noise: bool = False) -> PathBatch:
    """Simulate ``num_paths`` grid paths of either scheme.

    Path p draws its noise and initial value from its own substream, so the
    batch is identical for any ``threads`` value.
    """
    num_paths = int(num_paths)
    if num_paths < 1:
        raise DomainError("num_paths must be positive")
    ctx = SchemeContext.build(scheme, coeffs, k1, k2, grid)
    d = coeffs.dim_d
    out = np.empty((num_paths, grid.n + 1, d))
    noises: list = [None] * len(engine.chunk_ranges(num_paths, chunk_size))

    def work(a, b):
        idx = range(a, b)
        noise = ctx.draw_noise(master_seed, idx)
        x0 = init.sample(master_seed, idx, d)
        out[a:b] = run_recursion(ctx, x0, noise, blowup_cap)
        if keep_noise:
            noises[a // chunk_size] = noise

    engine.run_chunks(work, num_paths, threads, chunk_size)
    meta = {
        "kernels": {"k1": k1.to_spec(), "k2": k2.to_spec()},
        "coefficients": coeffs.meta,
        "init": init.to_spec() if hasattr(init, "to_spec") else repr(init),
    }
    return PathBatch(grid, d, out, int(master_seed), scheme, meta,
                     NoisePlan.concat(noises) if keep_noise else None, ctx)


def simulate_k_discrete(coeffs, k1, k2, grid, init, num_paths, master_seed, **kwargs) -> PathBatch:
    return simulate(K_DISCRETE, coeffs, k1, k2, grid, init, num_paths, master_seed, **kwargs)


def simulate_k_integrated(coeffs, k1, k2, grid, init, num_paths, master_seed, **kwargs) -> PathBatch:
    return simulate(K_INTEGRATED, coeffs, k1, k2, grid, init, num_paths, master_seed, **kwargs)


# --------------------------------------------------------------------------
# continuous extension (diagnostics)


def _conditional_gaussian(sigma: np.ndarray, c: np.ndarray, v: float, y: np.ndarray,
                          xi: np.ndarray) -> np.ndarray:
    """Sample G with Var G = v, Cov(G, Y) = c given realised Y = y (rows)."""
    pinv = np.linalg.pinv(sigma, rcond=1e-12, hermitian=True)
    beta = pinv @ c
    var = max(v - float(c @ beta), 0.0)
    return y @ beta + math.sqrt(var) * xi


def extend_continuous(batch: PathBatch, t: float, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Continuous-time extension of the scheme at an arbitrary time t, shape (P, d).

    Grid times return the stored grid values.  Off-grid times need the batch
    to keep its noise (``keep_noise=True``): the unobserved Gaussian pieces are
    drawn conditionally on the realised noise (Brownian bridge for the
    K-discrete scheme, conditioned kernel integrals for the K-integrated one).
    """
    grid = batch.grid
    k = grid.locate(t)
    if grid.t(k) == t:
        return batch.paths[:, k].copy()
    if batch.noise is None or batch.context is None:
        raise DomainError("off-grid extension needs a batch simulated with keep_noise=True")
    ctx, noise = batch.context, batch.noise
    coeffs, k1, k2 = ctx.coeffs, ctx.k1, ctx.k2
    if rng is None:
        rng = engine.generator(batch.master_seed, 0, engine.STREAM_BRIDGE)
    tg, h = grid.times, grid.h
    P, d, q = batch.num_paths, coeffs.dim_d, coeffs.dim_q
    X = batch.paths
    out = X[:, 0].copy()
    xi = rng.standard_normal((P, q, k + 1))
    for l in range(1, k + 2):
        a, b_end = tg[l - 1], (tg[l] if l <= k else t)
        b = coeffs.drift(tg[l - 1], X[:, l - 1])
        s = coeffs.diffusion(tg[l - 1], X[:, l - 1])
        if ctx.scheme == K_DISCRETE:
            drift_w = k1(t, a) * (b_end - a)
            if l <= k:
                dw = noise.increments[:, l - 1]
            else:
                frac = (t - a) / h
                dw = frac * noise.increments[:, l - 1] + math.sqrt(h * frac * (1 - frac)) * xi[:, :, l - 1]
            g = k2(t, a) * dw
        else:
            drift_w = k1.cell_integral(t, a, b_end)
            mats = build_cov_matrices(k2, grid) if l == 1 else mats
            sig = mats[l - 1]
            c = np.array([k2.product_integral(t, tg[j], a, b_end) for j in range(l, grid.n + 1)])
            v = k2.product_integral(t, t, a, b_end)
            g = np.empty((P, q))
            for r in range(q):
                g[:, r] = _conditional_gaussian(sig, c, v, noise.blocks[l - 1][:, :, r], xi[:, r, l - 1])
        out = out + drift_w * b + np.einsum("pdq,pq->pd", s, g)
    return out


# --------------------------------------------------------------------------
# companion processes and interpolation


def companion_paths(ctx: SchemeContext, noise: NoisePlan, x0: np.ndarray) -> np.ndarray:
    """Companion table ``C[p, k, l] = X^k_{t_l}`` for l <= k (NaN above).

    Evaluated by the explicit two-index recursion, independently of
    ``run_recursion``; the diagonal reproduces the scheme.
    """
    grid, coeffs = ctx.grid, ctx.coeffs
    n, d = grid.n, coeffs.dim_d
    t = grid.times
    x0 = np.asarray(x0, dtype=float).reshape(-1, d)
    P = x0.shape[0]
    C = np.full((P, n + 1, n + 1, d), np.nan)
    for k in range(n + 1):
        C[:, k, 0] = x0
    W1 = ctx.weights.drift_weights
    for l in range(n):
        diag = C[:, l, l]
        b = coeffs.drift(t[l], diag)
        s = coeffs.diffusion(t[l], diag)
        for k in range(l + 1, n + 1):
            inc = W1[k, l + 1] * b
            if ctx.scheme == K_DISCRETE:
                inc += ctx.k2_table[k, l + 1] * apply_sigma(s, noise.increments[:, l])
            else:
                inc += apply_sigma(s, noise.block_component(l + 1, k))
            C[:, k, l + 1] = C[:, k, l] + inc
    return C


def interpolate(values, grid: TimeGrid, t):
    """Piecewise-affine interpolation of grid values ``(n+1,)`` or ``(n+1, d)`` at t."""
    vals = np.asarray(values, dtype=float)
    if vals.shape[0] != grid.n + 1:
        raise DimensionError("values must have n + 1 rows")
    tt = np.asarray(t, dtype=float)
    if np.any(tt < 0) or np.any(tt > grid.T):
        raise DomainError(f"interpolation time outside [0, {grid.T}]")
    if vals.ndim == 1:
        return np.interp(tt, grid.times, vals)
    return np.stack([np.interp(tt, grid.times, vals[:, i]) for i in range(vals.shape[1])], axis=-1)


@dataclass(frozen=True)
class VolterraProcess:
    """Coefficients, kernel pair and initial law of one Volterra equation."""

    coeffs: CoefficientSet
    k1: Kernel
    k2: Kernel
    init: object

    def simulate(self, scheme: str, grid: TimeGrid, num_paths: int, master_seed: int, **kwargs) -> PathBatch:
        return simulate(scheme, self.coeffs, self.k1, self.k2, grid, self.init, num_paths, master_seed, **kwargs)
