"""Prebuilt coefficient sets and convex path functionals.

The quadratic rough Heston auxiliary process

    Z_t = Z_0 + int_0^t (t-s)^(H-1/2) lam (f(s) - Z_s) ds
              + sigma_vol int_0^t (t-s)^(H-1/2) sqrt(a (Z_s - b)^2 + c) dW_s

and the VIX premium E sqrt((1/T) int_0^T (a (Z_t - b)^2 + c) dt).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .engine import paired_stats
from .errors import DomainError, EmptyBatchError, ParameterError
from .grid import TimeGrid
from .kernels import PowerKernel
from .schemes import CoefficientSet, PathBatch, PointMass, VolterraProcess


@dataclass(frozen=True)
class QuadraticRoughHeston:
    a: float
    b_center: float
    c: float
    H: float
    lam: float
    sigma_vol: float
    z0: float
    f: Optional[Callable[[float], float]] = None
    f_value: float = 0.1
    f_holder: float = 1.0

    def __post_init__(self):
        # a = 0 and sigma_vol = 0 are admitted as degenerate limits
        if not self.a >= 0:
            raise ParameterError(f"a must be >= 0, got {self.a}")
        if not self.b_center >= 0:
            raise ParameterError(f"b_center must be >= 0, got {self.b_center}")
        if not self.c >= 0:
            raise ParameterError(f"c must be >= 0, got {self.c}")
        if not 0 < self.H < 0.5:
            raise ParameterError(f"H must lie in (0, 1/2), got {self.H}")
        if not self.sigma_vol >= 0:
            raise ParameterError(f"sigma_vol must be >= 0, got {self.sigma_vol}")
        if not math.isfinite(self.lam):
            raise ParameterError("lambda must be finite")
        if not 0 < self.f_holder <= 1:
            raise ParameterError("Holder exponent of f must lie in (0, 1]")

    @property
    def alpha(self) -> float:
        return self.H - 0.5

    def target(self, t):
        if self.f is None:
            return np.full(np.shape(t), self.f_value) if np.ndim(t) else self.f_value
        return self.f(t)

    def vol_map(self, z):
        """``z -> sqrt(a (z - b)^2 + c)``, convex with Lipschitz constant sqrt(a)."""
        z = np.asarray(z, dtype=float)
        return np.sqrt(self.a * (z - self.b_center) ** 2 + self.c)

    def variance(self, z):
        z = np.asarray(z, dtype=float)
        return self.a * (z - self.b_center) ** 2 + self.c

    def replace(self, **changes) -> "QuadraticRoughHeston":
        from dataclasses import replace

        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {"a": self.a, "b_center": self.b_center, "c": self.c, "H": self.H, "lambda": self.lam,
                "sigma_vol": self.sigma_vol, "z0": self.z0, "f_value": self.f_value}


def qrh_coefficients(model: QuadraticRoughHeston):
    """Coefficient set and kernel pair (K1 = K2 = (t-s)^(H-1/2)) of the model."""
    lam, sv = model.lam, model.sigma_vol

    def b(t, z):
        return lam * (model.target(t) - z)

    def sigma(t, z):
        return sv * model.vol_map(z)

    coeffs = CoefficientSet.scalar(
        b, sigma,
        mu=lambda t: lam * model.target(t), nu=lambda t: -lam,
        meta={"model": "quadratic-rough-heston", **model.to_dict()},
    )
    k = PowerKernel(model.alpha)
    return coeffs, k, k


def qrh_process(model: QuadraticRoughHeston) -> VolterraProcess:
    coeffs, k1, k2 = qrh_coefficients(model)
    return VolterraProcess(coeffs, k1, k2, PointMass(model.z0))


def time_average(values: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Trapezoid average over [0, T] of grid values along axis 1."""
    v = np.asarray(values, dtype=float)
    h = grid.h
    total = h * (0.5 * v[:, 0] + v[:, 1:-1].sum(axis=1) + 0.5 * v[:, -1])
    return total / grid.T


def vix_values(paths: np.ndarray, grid: TimeGrid, model: QuadraticRoughHeston) -> np.ndarray:
    z = np.asarray(paths, dtype=float)
    if z.ndim == 3:
        z = z[:, :, 0]
    return np.sqrt(time_average(model.variance(z), grid))


def vix_premium(batch: PathBatch, model: QuadraticRoughHeston) -> tuple[float, float]:
    """Monte Carlo VIX premium and its standard error."""
    if batch.num_paths == 0:
        raise EmptyBatchError("empty batch")
    vals = vix_values(batch.paths, batch.grid, model)
    if vals.size == 1:
        return float(vals[0]), float("nan")
    mean, se, _ = paired_stats(vals)
    return mean, se


# --------------------------------------------------------------------------
# convex path functionals

NONDECREASING = "nondecreasing"
NONINCREASING = "nonincreasing"


@dataclass(frozen=True)
class PathFunctional:
    """Convex, sup-norm Lipschitz functional of grid paths ``(P, n+1, d) -> (P,)``.

    Values are those of the functional applied to the piecewise-affine
    interpolation of each path.
    """

    name: str
    func: Callable[[np.ndarray, TimeGrid], np.ndarray]
    monotone: Optional[str] = None

    def __call__(self, paths: np.ndarray, grid: TimeGrid) -> np.ndarray:
        paths = np.asarray(paths, dtype=float)
        if paths.ndim == 2:
            paths = paths[:, :, None]
        return np.asarray(self.func(paths, grid), dtype=float)

    def applies_to(self, order: str) -> bool:
        if order == "cvx":
            return True
        if order == "icv":
            return self.monotone == NONDECREASING
        if order == "dcv":
            return self.monotone == NONINCREASING
        raise DomainError(f"unknown order {order!r}")


def terminal_call(strike: float, coord: int = 0) -> PathFunctional:
    return PathFunctional(f"call:{strike:g}", lambda x, g: np.maximum(x[:, -1, coord] - strike, 0.0), NONDECREASING)


def terminal_put(strike: float, coord: int = 0) -> PathFunctional:
    return PathFunctional(f"put:{strike:g}", lambda x, g: np.maximum(strike - x[:, -1, coord], 0.0), NONINCREASING)


def terminal_value(coord: int = 0) -> PathFunctional:
    # affine: convex, non-decreasing
    return PathFunctional("terminal", lambda x, g: x[:, -1, coord].copy(), NONDECREASING)


def negative_terminal_value(coord: int = 0) -> PathFunctional:
    return PathFunctional("neg-terminal", lambda x, g: -x[:, -1, coord], NONINCREASING)


def sup_norm() -> PathFunctional:
    # the interpolant's sup is attained at a knot
    return PathFunctional("sup", lambda x, g: np.linalg.norm(x, axis=2).max(axis=1))


def running_max(coord: int = 0) -> PathFunctional:
    return PathFunctional("max", lambda x, g: x[:, :, coord].max(axis=1), NONDECREASING)


def square_integral() -> PathFunctional:
    """``int_0^T |i_n x(t)|^2 dt``, exact for the piecewise-affine interpolant."""

    def f(x, g):
        a, b = x[:, :-1], x[:, 1:]
        return (g.h / 3.0) * (a * a + a * b + b * b).sum(axis=(1, 2))

    return PathFunctional("int_x2", f)


def vix_functional(model: QuadraticRoughHeston) -> PathFunctional:
    return PathFunctional("vix", lambda x, g: vix_values(x, g, model))


@dataclass
class ConvexFunctionalFamily:
    members: list = field(default_factory=list)

    def filter(self, order: str) -> list[PathFunctional]:
        return [m for m in self.members if m.applies_to(order)]

    def names(self) -> list[str]:
        return [m.name for m in self.members]

    @classmethod
    def default(cls) -> "ConvexFunctionalFamily":
        return cls([terminal_call(0.0), terminal_call(0.5), terminal_call(1.0), sup_norm(), square_integral()])

    @classmethod
    def from_names(cls, names, model: Optional[QuadraticRoughHeston] = None) -> "ConvexFunctionalFamily":
        return cls([functional_from_name(n, model) for n in names])


def functional_from_name(name: str, model: Optional[QuadraticRoughHeston] = None) -> PathFunctional:
    """Parse ``call:K``, ``put:K``, ``terminal``, ``neg-terminal``, ``sup``, ``max``, ``int_x2``, ``vix``."""
    head, _, arg = name.partition(":")
    try:
        if head == "call":
            return terminal_call(float(arg))
        if head == "put":
            return terminal_put(float(arg))
    except ValueError:
        raise DomainError(f"bad strike in functional {name!r}") from None
    simple = {"terminal": terminal_value, "neg-terminal": negative_terminal_value, "sup": sup_norm,
              "max": running_max, "int_x2": square_integral}
    if head in simple and not arg:
        return simple[head]()
    if head == "vix" and model is not None:
        return vix_functional(model)
    raise DomainError(f"unknown functional {name!r}")
