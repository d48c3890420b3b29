"""Two-time Volterra kernels and the grid-cell integrals used by the Euler schemes.

A kernel ``K(t, s)`` is defined for ``0 <= s < t``.  Power kernels
``(t - s)**alpha`` carry closed forms for the drift weights and for the
diagonal / first-row covariance entries of the kernel-integrated noise;
every other integral falls back to quadrature.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special

from .errors import DomainError, QuadratureError
from .grid import TimeGrid

K_DISCRETE = "k-discrete"
K_INTEGRATED = "k-integrated"
SCHEMES = (K_DISCRETE, K_INTEGRATED)

DRIFT = "drift"
DIFFUSION = "diffusion"

GL_ORDER = 64
QUAD_RTOL = 1e-9


@lru_cache(maxsize=None)
def gauss_legendre_01(order: int = GL_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return (x + 1.0) / 2.0, w / 2.0


@lru_cache(maxsize=None)
def _gauss_jacobi_01(alpha: float, order: int = GL_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Nodes/weights for int_0^1 u^alpha f(u) du."""
    x, w = special.roots_jacobi(order, 0.0, alpha)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1.0)


def quad(func: Callable[[float], float], a: float, b: float, **kwargs) -> float:
    """Adaptive Gauss-Kronrod quadrature that raises instead of warning."""
    if b <= a:
        return 0.0
    kwargs.setdefault("epsrel", QUAD_RTOL)
    kwargs.setdefault("epsabs", 0.0)
    kwargs.setdefault("limit", 200)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        out = integrate.quad(func, a, b, full_output=1, **kwargs)
    if len(out) == 4:
        raise QuadratureError(f"quadrature on [{a}, {b}] did not converge: {out[3].splitlines()[0]}")
    return float(out[0])


def _check_order(t, s):
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(s >= t):
        raise DomainError("kernel K(t, s) is only defined for s < t")
    return t, s


class Kernel:
    """Base class.  Subclasses implement ``_eval`` on arrays with s < t."""

    stationary = False
    name = "kernel"

    def __call__(self, t, s):
        t, s = _check_order(t, s)
        out = self._eval(t, s)
        return float(out) if np.ndim(out) == 0 else out

    def _eval(self, t: np.ndarray, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def validate_role(self, role: str) -> None:
        """Raise DomainError if the kernel is not admissible as drift/diffusion kernel."""

    def cell_integral(self, t: float, a: float, b: float) -> float:
        """``int_a^b K(t, s) ds`` for ``a <= b <= t``."""
        if b > t:
            raise DomainError("cell integral needs b <= t")
        return quad(lambda s: float(self._eval(np.float64(t), np.float64(s))), a, b)

    def product_integral(self, t1: float, t2: float, a: float, b: float) -> float:
        """``int_a^b K(t1, s) K(t2, s) ds`` for ``a <= b <= min(t1, t2)``."""
        if b > min(t1, t2):
            raise DomainError("product integral needs b <= min(t1, t2)")
        f = lambda s: float(self._eval(np.float64(t1), np.float64(s)) * self._eval(np.float64(t2), np.float64(s)))
        return quad(f, a, b)

    def to_spec(self) -> dict:
        return {"type": self.name}


class PowerKernel(Kernel):
    """``K(t, s) = (t - s)**alpha``; alpha > -1 (drift) or > -1/2 (diffusion)."""

    stationary = True
    name = "power"

    def __init__(self, alpha: float):
        alpha = float(alpha)
        if not alpha > -1.0:
            raise DomainError(f"power kernel exponent must exceed -1, got {alpha}")
        self.alpha = alpha

    def __repr__(self):
        return f"PowerKernel(alpha={self.alpha!r})"

    def _eval(self, t, s):
        return (t - s) ** self.alpha

    def validate_role(self, role):
        if role == DIFFUSION and not self.alpha > -0.5:
            raise DomainError(f"alpha2 must exceed -1/2 for the diffusion kernel, got {self.alpha}")
        if role == DRIFT and not self.alpha > -1.0:
            raise DomainError(f"alpha1 must exceed -1 for the drift kernel, got {self.alpha}")

    def cell_integral(self, t, a, b):
        if b > t:
            raise DomainError("cell integral needs b <= t")
        p = self.alpha + 1.0
        return ((t - a) ** p - (t - b) ** p) / p

    def product_integral(self, t1, t2, a, b):
        lo, hi = min(t1, t2), max(t1, t2)
        if b > lo:
            raise DomainError("product integral needs b <= min(t1, t2)")
        if b <= a:
            return 0.0
        al = self.alpha
        if t1 == t2:
            p = 2.0 * al + 1.0
            return ((lo - a) ** p - (lo - b) ** p) / p
        if b == lo and al < 0:
            # (lo - s)^alpha singular at the right end: algebraic weight
            return quad(lambda s: (hi - s) ** al, a, b, weight="alg", wvar=(0.0, al))
        return quad(lambda s: ((lo - s) * (hi - s)) ** al, a, b)

    def to_spec(self):
        return {"type": "power", "alpha": self.alpha}


class ConstantKernel(Kernel):
    stationary = True
    name = "constant"

    def __init__(self, value: float = 1.0):
        value = float(value)
        if not (value >= 0.0 and math.isfinite(value)):
            raise DomainError(f"constant kernel value must be finite and >= 0, got {value}")
        self.value = value

    def __repr__(self):
        return f"ConstantKernel(value={self.value!r})"

    def _eval(self, t, s):
        return np.full(np.broadcast(t, s).shape, self.value)

    def cell_integral(self, t, a, b):
        if b > t:
            raise DomainError("cell integral needs b <= t")
        return self.value * max(b - a, 0.0)

    def product_integral(self, t1, t2, a, b):
        if b > min(t1, t2):
            raise DomainError("product integral needs b <= min(t1, t2)")
        return self.value ** 2 * max(b - a, 0.0)

    def to_spec(self):
        return {"type": "constant", "value": self.value}


class CallableKernel(Kernel):
    """User kernel from an evaluation callback ``func(t, s)`` (array-aware).

    Optional ``cell_integral(t, a, b)`` / ``product_integral(t1, t2, a, b)``
    callbacks replace the adaptive quadrature fallback.  ``stationary=True``
    declares ``K(t, s) = phi(t - s)``.  Regularity is the caller's claim.
    """

    name = "callable"

    def __init__(self, func, stationary: bool = False, cell_integral=None, product_integral=None,
                 label: str = "callable"):
        self._func = func
        self.stationary = bool(stationary)
        self._cell = cell_integral
        self._prod = product_integral
        self.label = label

    def _eval(self, t, s):
        return np.asarray(self._func(t, s), dtype=float)

    def cell_integral(self, t, a, b):
        if self._cell is not None:
            return float(self._cell(t, a, b))
        return super().cell_integral(t, a, b)

    def product_integral(self, t1, t2, a, b):
        if self._prod is not None:
            return float(self._prod(t1, t2, a, b))
        return super().product_integral(t1, t2, a, b)

    def to_spec(self):
        return {"type": "callable", "label": self.label, "stationary": self.stationary}


def eval_kernel(kernel: Kernel, t: float, s: float) -> float:
    return kernel(t, s)


def kernel_from_spec(spec: dict, role: Optional[str] = None) -> Kernel:
    """Build a kernel from ``{"type": "power", "alpha": a}`` or ``{"type": "constant", "value": v}``."""
    if not isinstance(spec, dict) or "type" not in spec:
        raise DomainError(f"kernel spec must be an object with a 'type' key, got {spec!r}")
    kind = spec["type"]
    extra = set(spec) - {"type", "alpha", "value"}
    if extra:
        raise DomainError(f"unknown kernel keys: {sorted(extra)}")
    if kind == "power":
        if "alpha" not in spec:
            raise DomainError("power kernel needs 'alpha'")
        alpha = float(spec["alpha"])
        if role == DIFFUSION and not alpha > -0.5:
            raise DomainError(f"alpha2 must exceed -1/2 (got {alpha})")
        if not alpha > -1.0:
            raise DomainError(f"alpha1 must exceed -1 (got {alpha})")
        k = PowerKernel(alpha)
    elif kind == "constant":
        k = ConstantKernel(float(spec.get("value", 1.0)))
    else:
        raise DomainError(f"unknown kernel type {kind!r}")
    if role is not None:
        k.validate_role(role)
    return k


# --------------------------------------------------------------------------
# regularity metadata


@dataclass(frozen=True)
class KernelRegularity:
    beta: float
    theta: float
    theta_hat: float
    theta_underline: Optional[float] = None
    theta_hat_underline: Optional[float] = None
    theta_check: Optional[float] = None

    def __post_init__(self):
        if not self.beta > 1.0:
            raise DomainError("beta must exceed 1")
        for name in ("theta", "theta_hat", "theta_underline", "theta_hat_underline", "theta_check"):
            v = getattr(self, name)
            if v is not None and not 0.0 < v <= 1.0:
                raise DomainError(f"{name} must lie in (0, 1], got {v}")

    def rate(self, gamma: float = 1.0, scheme: str = K_INTEGRATED) -> float:
        """Strong-rate exponent guaranteed at fixed times for the given scheme."""
        exps = [gamma, self.theta, self.theta_hat]
        if scheme == K_DISCRETE:
            exps += [e for e in (self.theta_underline, self.theta_hat_underline, self.theta_check) if e is not None]
        return min(exps)


def beta_upper_bound(alpha1: float, alpha2: float) -> float:
    """Supremum of admissible beta for power kernels (may be infinite)."""
    neg1 = max(-(2.0 * alpha1 + 1.0), 0.0)
    neg2 = max(-alpha2, 0.0)
    b1 = math.inf if neg1 == 0 else 1.0 / neg1
    b2 = math.inf if neg2 == 0 else 1.0 / (2.0 * neg2)
    return min(b1, b2)


def power_regularity(alpha1: float, alpha2: float, beta: Optional[float] = None) -> KernelRegularity:
    """Regularity exponents of the pair ((t-s)^alpha1, (t-s)^alpha2).

    ``beta`` only matters for theoretical rates; when omitted a representative
    inside the admissible interval is stored (midpoint, capped at 2).
    """
    if not alpha1 > -1.0:
        raise DomainError("alpha1 must exceed -1")
    if not alpha2 > -0.5:
        raise DomainError("alpha2 must exceed -1/2")
    upper = beta_upper_bound(alpha1, alpha2)
    if beta is None:
        beta = min(2.0, 0.5 * (1.0 + upper))
    if not 1.0 < beta < upper:
        raise DomainError(f"beta must lie in (1, {upper}), got {beta}")
    theta = min(alpha1 + 1.0, alpha2 + 0.5, 1.0)
    return KernelRegularity(beta, theta, theta, theta, theta, theta)


# --------------------------------------------------------------------------
# closed forms for power kernels


def drift_weight_power(alpha1: float, h: float, i) -> float | np.ndarray:
    """``int_{t_{l-1}}^{t_l} (t_{l+i} - s)^alpha1 ds`` on a uniform grid of step h."""
    if not alpha1 > -1.0:
        raise DomainError("alpha1 must exceed -1")
    if not h > 0:
        raise DomainError("step h must be positive")
    i = np.asarray(i, dtype=float)
    if np.any(i < 0):
        raise DomainError("offset i must be non-negative")
    p = alpha1 + 1.0
    out = h ** p * ((i + 1.0) ** p - i ** p) / p
    return float(out) if out.ndim == 0 else out


def _cov_row_power(alpha2: float, h: float, i: int, js: np.ndarray) -> np.ndarray:
    """Covariance entries (i, j) for all j in ``js`` (each j >= i)."""
    u, w = gauss_legendre_01()
    scale = h ** (2.0 * alpha2 + 1.0)
    js = np.asarray(js, dtype=float)
    out = np.empty(js.shape)
    diag = js == i
    if np.any(diag):
        p = 2.0 * alpha2 + 1.0
        out[diag] = ((i + 1.0) ** p - float(i) ** p) / p
    off = ~diag
    if np.any(off):
        jo = js[off]
        if i == 0 and alpha2 <= 0:
            # v = u^(alpha2+1) removes the u^alpha2 endpoint singularity
            a1 = alpha2 + 1.0
            v = u ** (1.0 / a1)
            vals = (jo[:, None] + v[None, :]) ** alpha2 @ w / a1
        elif i == 0:
            # for alpha2 > 0 the substituted integrand has a v^(1/(alpha2+1)) cusp;
            # Gauss-Jacobi absorbs the u^alpha2 factor into the weight instead
            x, wj = _gauss_jacobi_01(alpha2)
            vals = (jo[:, None] + x[None, :]) ** alpha2 @ wj
        else:
            vals = ((i + u[None, :]) * (jo[:, None] + u[None, :])) ** alpha2 @ w
        out[off] = vals
    return scale * out


def cov_entry_power(alpha2: float, h: float, i: int, j: int) -> float:
    """Covariance between components i and j of a kernel-integrated noise block.

    Equals ``h^(2 alpha2 + 1) int_0^1 ((i+u)(j+u))^alpha2 du`` for 0 <= i <= j.
    """
    if not alpha2 > -0.5:
        raise DomainError(f"alpha2 must exceed -1/2, got {alpha2}")
    if not h > 0:
        raise DomainError("step h must be positive")
    if i < 0 or i > j:
        raise DomainError(f"need 0 <= i <= j, got i={i}, j={j}")
    return float(_cov_row_power(alpha2, h, int(i), np.array([j]))[0])


# --------------------------------------------------------------------------
# grid tables


@dataclass(frozen=True)
class GridCellIntegrals:
    """Lower-triangular drift weights ``w[k, l]`` (1 <= l <= k <= n); zero elsewhere."""

    grid: TimeGrid
    drift_weights: np.ndarray
    mode: str

    def row(self, k: int) -> np.ndarray:
        """Weights ``w[k, 1..k]``."""
        return self.drift_weights[k, 1:k + 1]


def _lower_mask(n: int) -> np.ndarray:
    k = np.arange(n + 1)[:, None]
    l = np.arange(n + 1)[None, :]
    return (l >= 1) & (l <= k)


def kernel_table(kernel: Kernel, grid: TimeGrid) -> np.ndarray:
    """``M[k, l] = K(t_k, t_{l-1})`` for 1 <= l <= k <= n, zero elsewhere."""
    n = grid.n
    t = grid.times
    mask = _lower_mask(n)
    kk, ll = np.nonzero(mask)
    out = np.zeros((n + 1, n + 1))
    out[kk, ll] = kernel(t[kk], t[ll - 1])
    return out


def _stationary_table(values: np.ndarray, n: int) -> np.ndarray:
    """Fill ``M[k, l] = values[k - l]`` on the lower triangle."""
    out = np.zeros((n + 1, n + 1))
    kk, ll = np.nonzero(_lower_mask(n))
    out[kk, ll] = values[kk - ll]
    return out


def build_drift_weights(kernel1: Kernel, grid: TimeGrid, mode: str) -> GridCellIntegrals:
    kernel1.validate_role(DRIFT)
    n, h = grid.n, grid.h
    t = grid.times
    if mode == K_DISCRETE:
        w = kernel_table(kernel1, grid) * h
    elif mode == K_INTEGRATED:
        if isinstance(kernel1, PowerKernel):
            w = _stationary_table(drift_weight_power(kernel1.alpha, h, np.arange(n)), n)
        elif isinstance(kernel1, ConstantKernel):
            w = _stationary_table(np.full(n, kernel1.value * h), n)
        elif kernel1.stationary:
            vals = np.array([kernel1.cell_integral(t[i + 1], 0.0, t[1]) for i in range(n)])
            w = _stationary_table(vals, n)
        else:
            w = np.zeros((n + 1, n + 1))
            for k in range(1, n + 1):
                for l in range(1, k + 1):
                    w[k, l] = kernel1.cell_integral(t[k], t[l - 1], t[l])
    else:
        raise DomainError(f"unknown scheme mode {mode!r}")
    if not np.all(np.isfinite(w)):
        raise DomainError("drift weights are not finite")
    w.setflags(write=False)
    return GridCellIntegrals(grid, w, mode)


def build_cov_matrices(kernel2: Kernel, grid: TimeGrid) -> list[np.ndarray]:
    """Covariance matrices of the noise blocks Y^(l), l = 1..n (list index l-1).

    Entry ``[a, b]`` of block l is ``int_0^h K2(t_{l+a}, t_{l-1}+u) K2(t_{l+b}, t_{l-1}+u) du``.
    Stationary kernels on a uniform grid share one matrix: block l is the
    leading (n-l+1) principal sub-matrix of block 1.
    """
    kernel2.validate_role(DIFFUSION)
    n, h = grid.n, grid.h
    t = grid.times
    if kernel2.stationary:
        base = np.empty((n, n))
        if isinstance(kernel2, PowerKernel):
            for i in range(n):
                base[i, i:] = _cov_row_power(kernel2.alpha, h, i, np.arange(i, n))
        elif isinstance(kernel2, ConstantKernel):
            base[:] = kernel2.value ** 2 * h
        else:
            for i in range(n):
                for j in range(i, n):
                    base[i, j] = kernel2.product_integral(t[i + 1], t[j + 1], 0.0, h)
        base = np.triu(base) + np.triu(base, 1).T
        base.setflags(write=False)
        return [base[: n - l + 1, : n - l + 1] for l in range(1, n + 1)]
    mats = []
    for l in range(1, n + 1):
        m = n - l + 1
        sig = np.empty((m, m))
        for a in range(m):
            for b in range(a, m):
                sig[a, b] = sig[b, a] = kernel2.product_integral(t[l + a], t[l + b], t[l - 1], t[l])
        sig.setflags(write=False)
        mats.append(sig)
    return mats
