"""Dataclass run configurations for the command-line tool.

Every section is a dataclass; ``from_dict`` rejects unknown keys and
``to_dict`` writes all defaults explicitly, so a printed configuration
re-ingests to the same hash.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .errors import ConfigError, DomainError
from .grid import TimeGrid
from .kernels import DIFFUSION, DRIFT, SCHEMES, K_INTEGRATED, kernel_from_spec
from .models import ConvexFunctionalFamily, QuadraticRoughHeston, qrh_process
from .schemes import CoefficientSet, GaussianInit, PointMass, UniformInit, VolterraProcess

COMMANDS = ("simulate", "price-vix", "check-order", "check-hypotheses", "rate")


def _from_dict(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, f in names.items():
        if name not in data:
            if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                raise ConfigError(f"{where}: missing required key {name!r}")
            continue
        value = data[name]
        sub = _SECTION_TYPES.get((cls.__name__, name))
        if sub is not None and value is not None:
            value = _from_dict(sub, value, f"{where}.{name}")
        kwargs[name] = value
    obj = cls(**kwargs)
    validate = getattr(obj, "validate", None)
    if validate is not None:
        validate(where)
    return obj


def _to_dict(obj) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        out[f.name] = _to_dict(v) if dataclasses.is_dataclass(v) else v
    return out


@dataclass
class GridConfig:
    n: int
    T: float = 1.0

    def validate(self, where):
        try:
            self.build()
        except DomainError as exc:
            raise ConfigError(f"{where}: {exc}") from exc

    def build(self) -> TimeGrid:
        return TimeGrid(int(self.n), float(self.T))


@dataclass
class CoefficientsConfig:
    """Coefficients ``b`` and ``sigma``.

    drift: ``{"type": "affine", "mu": [...], "nu": [[...]]}`` (time-constant)
    or ``{"type": "expr", "expr": "-x"}`` (d = 1, sympy syntax in t and x).
    diffusion: ``{"type": "constant", "value": [[...]]}`` (d x q matrix) or
    ``{"type": "expr", "expr": "0.4 + 0.2*sin(x)"}`` (d = q = 1).
    """

    dim_d: int = 1
    dim_q: int = 1
    drift: dict = field(default_factory=lambda: {"type": "affine", "mu": [0.0], "nu": [[0.0]]})
    diffusion: dict = field(default_factory=lambda: {"type": "constant", "value": [[1.0]]})

    def validate(self, where):
        if int(self.dim_d) < 1 or int(self.dim_q) < 1:
            raise ConfigError(f"{where}: dimensions must be positive")

    def build(self) -> CoefficientSet:
        d, q = int(self.dim_d), int(self.dim_q)
        drift, mu, nu = _build_drift(self.drift, d)
        sigma = _build_diffusion(self.diffusion, d, q)
        meta = {"drift": self.drift, "diffusion": self.diffusion}
        return CoefficientSet(d, q, drift, sigma, mu=mu, nu=nu, meta=meta)


def _scalar_expr(text: str, name: str):
    import sympy

    t, x = sympy.symbols("t x")
    try:
        expr = sympy.sympify(text, locals={"t": t, "x": x})
    except (sympy.SympifyError, TypeError, SyntaxError) as exc:
        raise ConfigError(f"{name}: cannot parse expression {text!r}") from exc
    free = expr.free_symbols - {t, x}
    if free:
        raise ConfigError(f"{name}: unknown symbols {sorted(map(str, free))}")
    f = sympy.lambdify((t, x), expr, modules="numpy")

    def vec(tt, xx):
        xx = np.asarray(xx, dtype=float)
        return np.broadcast_to(np.asarray(f(tt, xx), dtype=float), xx.shape)

    return vec, expr, x


def _check_keys(spec: dict, allowed: set, name: str) -> None:
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigError(f"{name}: expected an object with a 'type' key")
    extra = set(spec) - allowed - {"type"}
    if extra:
        raise ConfigError(f"{name}: unknown keys {sorted(extra)}")


def _build_drift(spec: dict, d: int):
    _check_keys(spec, {"mu", "nu", "expr"}, "drift")
    if spec["type"] == "affine":
        mu = np.asarray(spec.get("mu", [0.0] * d), dtype=float).reshape(-1)
        nu = np.asarray(spec.get("nu", np.zeros((d, d)).tolist()), dtype=float)
        if mu.shape != (d,) or nu.shape != (d, d):
            raise ConfigError(f"drift: mu must have length {d} and nu shape ({d}, {d})")
        return (lambda t, x: mu[None, :] + x @ nu.T), (lambda t: mu), (lambda t: nu)
    if spec["type"] == "expr":
        if d != 1:
            raise ConfigError("drift: expression coefficients need d = 1")
        f, expr, x = _scalar_expr(spec.get("expr", ""), "drift")
        mu = nu = None
        if expr.is_polynomial(x) and expr.as_poly(x) is not None and expr.as_poly(x).degree() <= 1:
            import sympy

            c0, c1 = expr.subs(x, 0), sympy.diff(expr, x)
            if not c1.free_symbols and not c0.free_symbols:
                m0, n0 = float(c0), float(c1)
                mu, nu = (lambda t: np.array([m0])), (lambda t: np.array([[n0]]))
        return (lambda t, xx: f(t, xx)), mu, nu
    raise ConfigError(f"drift: unknown type {spec['type']!r}")


def _build_diffusion(spec: dict, d: int, q: int):
    _check_keys(spec, {"value", "expr"}, "diffusion")
    if spec["type"] == "constant":
        val = np.asarray(spec.get("value", np.eye(d, q).tolist()), dtype=float)
        if val.ndim == 0:
            val = np.full((d, q), float(val))
        if val.shape != (d, q):
            raise ConfigError(f"diffusion: value must have shape ({d}, {q})")
        return lambda t, x: np.broadcast_to(val, (x.shape[0], d, q))
    if spec["type"] == "expr":
        if d != 1 or q != 1:
            raise ConfigError("diffusion: expression coefficients need d = q = 1")
        f, _, _ = _scalar_expr(spec.get("expr", ""), "diffusion")
        return lambda t, x: f(t, x).reshape(x.shape[0], 1, 1)
    raise ConfigError(f"diffusion: unknown type {spec['type']!r}")


def build_init(spec: dict):
    _check_keys(spec, {"value", "mean", "std", "low", "high"}, "init")
    kind = spec["type"]
    try:
        if kind == "point":
            return PointMass(spec.get("value", 0.0))
        if kind == "gaussian":
            return GaussianInit(spec.get("mean", 0.0), spec.get("std", 1.0))
        if kind == "uniform":
            return UniformInit(spec.get("low", 0.0), spec.get("high", 1.0))
    except DomainError as exc:
        raise ConfigError(f"init: {exc}") from exc
    raise ConfigError(f"init: unknown type {kind!r}")


@dataclass
class ModelConfig:
    """Quadratic rough Heston parameters (f is the constant ``f_value``)."""

    a: float = 0.384
    b_center: float = 0.095
    c: float = 0.0025
    H: float = 0.1
    lam: float = 1.2
    sigma_vol: float = 0.1
    z0: float = 0.1
    f_value: float = 0.1

    def build(self) -> QuadraticRoughHeston:
        try:
            return QuadraticRoughHeston(self.a, self.b_center, self.c, self.H, self.lam, self.sigma_vol,
                                        self.z0, f_value=self.f_value)
        except DomainError as exc:
            raise ConfigError(f"model: {exc}") from exc

    def validate(self, where):
        self.build()


@dataclass
class ProcessConfig:
    """Either a generic SVE (kernels, coefficients, init) or a prebuilt ``model``."""

    k1: dict = field(default_factory=lambda: {"type": "constant", "value": 1.0})
    k2: dict = field(default_factory=lambda: {"type": "constant", "value": 1.0})
    coefficients: CoefficientsConfig = field(default_factory=CoefficientsConfig)
    init: dict = field(default_factory=lambda: {"type": "point", "value": 0.0})
    model: Optional[ModelConfig] = None

    def validate(self, where):
        try:
            self.build()
        except DomainError as exc:
            raise ConfigError(f"{where}: {exc}") from exc

    def build(self) -> VolterraProcess:
        if self.model is not None:
            return qrh_process(self.model.build())
        k1 = kernel_from_spec(self.k1, DRIFT)
        k2 = kernel_from_spec(self.k2, DIFFUSION)
        return VolterraProcess(self.coefficients.build(), k1, k2, build_init(self.init))


@dataclass
class SamplerConfig:
    num_samples: int = 200
    j_max: int = 6
    radius: float = 3.0
    seed: int = 0


def _check_scheme(scheme, where):
    if scheme not in SCHEMES:
        raise ConfigError(f"{where}: scheme must be one of {list(SCHEMES)}, got {scheme!r}")


def _check_paths(n, where, minimum=1):
    if not isinstance(n, int) or n < minimum:
        raise ConfigError(f"{where}: num_paths must be an integer >= {minimum}, got {n!r}")


@dataclass
class SimulateConfig:
    grid: GridConfig
    process: ProcessConfig = field(default_factory=ProcessConfig)
    scheme: str = K_INTEGRATED
    num_paths: int = 1000
    master_seed: int = 0
    chunk_size: int = 2048
    out: str = "out"

    def validate(self, where):
        _check_scheme(self.scheme, where)
        _check_paths(self.num_paths, where)


@dataclass
class VixConfig:
    grid: GridConfig = field(default_factory=lambda: GridConfig(128, 0.25))
    model: ModelConfig = field(default_factory=ModelConfig)
    scheme: str = K_INTEGRATED
    num_paths: int = 50_000
    master_seed: int = 0
    sigma_vol_sweep: list = field(default_factory=list)
    chunk_size: int = 2048
    out: str = "out"

    def validate(self, where):
        _check_scheme(self.scheme, where)
        _check_paths(self.num_paths, where)
        for s in self.sigma_vol_sweep:
            dataclasses.replace(self.model, sigma_vol=s).validate(where)


@dataclass
class OrderConfig:
    grid: GridConfig
    x: ProcessConfig
    y: ProcessConfig
    order: str = "cvx"
    scheme: str = K_INTEGRATED
    family: list = field(default_factory=lambda: ConvexFunctionalFamily.default().names())
    num_paths: int = 10_000
    master_seed: int = 0
    z: float = 4.0
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    chunk_size: int = 2048
    out: str = "out"

    def validate(self, where):
        _check_scheme(self.scheme, where)
        _check_paths(self.num_paths, where, minimum=2)
        if self.order not in ("cvx", "icv", "dcv"):
            raise ConfigError(f"{where}: order must be cvx, icv or dcv")
        if not self.z > 0:
            raise ConfigError(f"{where}: z must be positive")
        try:
            self.build_family()
        except DomainError as exc:
            raise ConfigError(f"{where}.family: {exc}") from exc

    def build_family(self) -> ConvexFunctionalFamily:
        model = self.x.model.build() if self.x.model is not None else None
        return ConvexFunctionalFamily.from_names(self.family, model)


@dataclass
class HypothesesConfig:
    x: ProcessConfig
    y: ProcessConfig
    T: float = 1.0
    order: str = "cvx"
    scheme: str = K_INTEGRATED
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    out: str = "out"

    def validate(self, where):
        _check_scheme(self.scheme, where)
        if self.order not in ("cvx", "icv", "dcv"):
            raise ConfigError(f"{where}: order must be cvx, icv or dcv")
        if not self.T > 0:
            raise ConfigError(f"{where}: T must be positive")


@dataclass
class RateConfig:
    process: ProcessConfig
    n_list: list
    T: float = 1.0
    scheme: str = K_INTEGRATED
    p: float = 2.0
    refine: int = 4
    num_paths: int = 10_000
    master_seed: int = 0
    bootstrap: int = 200
    chunk_size: int = 1024
    out: str = "out"

    def validate(self, where):
        _check_scheme(self.scheme, where)
        _check_paths(self.num_paths, where, minimum=2)
        if not self.T > 0 or not self.p >= 1:
            raise ConfigError(f"{where}: need T > 0 and p >= 1")


_SECTION_TYPES = {
    ("SimulateConfig", "grid"): GridConfig,
    ("SimulateConfig", "process"): ProcessConfig,
    ("VixConfig", "grid"): GridConfig,
    ("VixConfig", "model"): ModelConfig,
    ("OrderConfig", "grid"): GridConfig,
    ("OrderConfig", "x"): ProcessConfig,
    ("OrderConfig", "y"): ProcessConfig,
    ("OrderConfig", "sampler"): SamplerConfig,
    ("HypothesesConfig", "x"): ProcessConfig,
    ("HypothesesConfig", "y"): ProcessConfig,
    ("HypothesesConfig", "sampler"): SamplerConfig,
    ("RateConfig", "process"): ProcessConfig,
    ("ProcessConfig", "coefficients"): CoefficientsConfig,
    ("ProcessConfig", "model"): ModelConfig,
}

CONFIG_TYPES = {
    "simulate": SimulateConfig,
    "price-vix": VixConfig,
    "check-order": OrderConfig,
    "check-hypotheses": HypothesesConfig,
    "rate": RateConfig,
}


def parse_config(command: str, data: dict):
    """Validate a raw JSON object as the configuration of ``command``."""
    if command not in CONFIG_TYPES:
        raise ConfigError(f"unknown command {command!r}")
    return _from_dict(CONFIG_TYPES[command], data, command)


def load_config(command: str, path) -> Any:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(command, data)


def config_to_dict(cfg) -> dict:
    return _to_dict(cfg)
