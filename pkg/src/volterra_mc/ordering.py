"""Convex-order hypotheses (sampled precondition checks) and their Monte Carlo
conclusions, plus strong-convergence rate estimation on nested grids.

Checkers quantify over continua, so every positive verdict is
"holds-on-sample"; a failing verdict carries a witness that can be
regenerated from ``(seed, index)``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import engine
from .errors import CouplingError, DimensionError, DomainError, GridMismatchError
from .grid import TimeGrid
from .kernels import K_DISCRETE, K_INTEGRATED, Kernel
from .matrixlab import kron, loewner_gap, loewner_leq, psd_scale, sym_sqrt
from .models import ConvexFunctionalFamily, PathFunctional
from .schemes import (
    CoefficientSet, GaussianInit, PathBatch, PointMass, SchemeContext, UniformInit, VolterraProcess,
    noise_size, run_recursion,
)

HOLDS = "holds-on-sample"
FAILS = "fails"
INCONCLUSIVE = "inconclusive"

ORDERS = ("cvx", "icv", "dcv")


@dataclass
class OrderHypothesisReport:
    condition: str
    verdict: str
    witness: Optional[dict] = None
    num_checked: int = 0
    note: str = ""

    @property
    def ok(self) -> bool:
        return self.verdict != FAILS

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class OrderReport:
    functional: str
    order: str
    delta_hat: float
    se: float
    num_paths: int
    z: float

    @property
    def verdict(self) -> str:
        return "violated" if self.delta_hat < -self.z * self.se else "consistent"

    def to_dict(self) -> dict:
        out = asdict(self)
        out["verdict"] = self.verdict
        return out


@dataclass(frozen=True)
class TupleSampler:
    """Deterministic stratified draws of time tuples ``0 <= s0 < s1 <= ... <= sj <= T`` and points.

    Sample ``i`` depends only on ``(seed, i)``; ``s0`` is stratified over
    ``[0, T)`` and ``j`` cycles through ``j_min..j_max``.
    """

    T: float = 1.0
    dim_d: int = 1
    num_samples: int = 200
    j_max: int = 6
    radius: float = 3.0
    seed: int = 0
    j_min: int = 1

    def rng(self, i: int) -> np.random.Generator:
        return engine.generator(self.seed, i, engine.STREAM_SAMPLER)

    def draw(self, i: int, j_min: Optional[int] = None) -> dict:
        rng = self.rng(i)
        lo = max(self.j_min if j_min is None else j_min, 1)
        j = lo + i % max(self.j_max - lo + 1, 1)
        s0 = self.T * (i + rng.uniform(0.0, 0.999)) / self.num_samples
        rest = np.sort(rng.uniform(0.0, 1.0, size=j))
        times = np.concatenate([[s0], s0 + (self.T - s0) * (0.001 + 0.999 * rest)])
        u = float(rng.uniform())
        return {
            "index": i,
            "j_min": lo,
            "times": times,
            "s": float(times[0] + u * (times[1] - times[0])),
            "x": rng.uniform(-self.radius, self.radius, size=self.dim_d),
            "y": rng.uniform(-self.radius, self.radius, size=self.dim_d),
            "weight": 0.5 if i % 2 == 0 else float(rng.uniform()),
        }

    def __iter__(self):
        return (self.draw(i) for i in range(self.num_samples))


def _witness(sampler: TupleSampler, draw: dict, **extra) -> dict:
    # sampler.draw(index, j_min) regenerates the tuple
    w = {"seed": sampler.seed, "index": draw["index"], "j_min": draw["j_min"],
         "times": [float(v) for v in draw["times"]],
         "x": [float(v) for v in np.atleast_1d(draw["x"])]}
    for key, val in extra.items():
        w[key] = val.tolist() if isinstance(val, np.ndarray) else val
    return w


def _sigma_sq(coeffs: CoefficientSet, t: float, x) -> np.ndarray:
    s = coeffs.diffusion(t, np.atleast_2d(np.asarray(x, dtype=float)))[0]
    return s @ s.T


def _check_dims(*coeffs: CoefficientSet) -> None:
    if len({c.dim_d for c in coeffs}) != 1:
        raise DimensionError("coefficient sets have different state dimensions")


# --------------------------------------------------------------------------
# hypothesis checkers


def check_c_sigma(cx: CoefficientSet, cy: CoefficientSet, sampler: TupleSampler,
                  tol: float = 1e-10) -> OrderHypothesisReport:
    """sigma sigma^*(s, x) <= sigma~ sigma~^*(s, x) at sampled points."""
    _check_dims(cx, cy)
    for draw in sampler:
        s0 = float(draw["times"][0])
        S, U = _sigma_sq(cx, s0, draw["x"]), _sigma_sq(cy, s0, draw["x"])
        if not loewner_leq(S, U, tol):
            return OrderHypothesisReport("Cσ", FAILS, _witness(sampler, draw, min_eig=loewner_gap(S, U)),
                                         draw["index"] + 1)
    return OrderHypothesisReport("Cσ", HOLDS, None, sampler.num_samples)


def check_ck2(k2: Kernel, k2_tilde: Kernel, sampler: TupleSampler, rtol: float = 1e-9) -> OrderHypothesisReport:
    """K2(t, s) = lambda(s) K2~(t, s) with lambda(s) in [0, 1]."""
    for draw in (sampler.draw(i, j_min=2) for i in range(sampler.num_samples)):
        s0, ts = draw["times"][0], draw["times"][1:]
        a, b = np.asarray(k2(ts, np.full_like(ts, s0))), np.asarray(k2_tilde(ts, np.full_like(ts, s0)))
        zero = b == 0
        if np.any(zero & (a != 0)):
            return OrderHypothesisReport("CK2", FAILS, _witness(sampler, draw, reason="K2~ = 0 where K2 != 0"),
                                         draw["index"] + 1)
        if np.all(zero):
            continue
        ratio = a[~zero] / b[~zero]
        spread = ratio.max() - ratio.min()
        if spread > rtol * max(abs(ratio).max(), 1e-300) or ratio.max() > 1 + rtol or ratio.min() < 0:
            return OrderHypothesisReport("CK2", FAILS, _witness(sampler, draw, ratios=ratio), draw["index"] + 1)
    return OrderHypothesisReport("CK2", HOLDS, None, sampler.num_samples)


def _kernel_gram(kernel: Kernel, draw: dict, variant: str) -> np.ndarray:
    times = draw["times"]
    s0, ts = times[0], times[1:]
    if variant == "disc":
        v = np.atleast_1d(kernel(ts, np.full_like(ts, s0)))
        return np.outer(v, v)
    if variant == "general":
        v = np.atleast_1d(kernel(ts, np.full_like(ts, draw["s"])))
        return np.outer(v, v)
    if variant == "int":
        j = ts.size
        g = np.empty((j, j))
        for a in range(j):
            for b in range(a, j):
                g[a, b] = g[b, a] = kernel.product_integral(ts[a], ts[b], s0, times[1])
        return g
    raise DomainError(f"unknown variant {variant!r}")


_CK2S_IDS = {"disc": "CK2σ-disc", "int": "CK2σ-int", "general": "CK2σ"}


def check_ck2_sigma(k2: Kernel, cx: CoefficientSet, k2_tilde: Kernel, cy: CoefficientSet, variant: str,
                    sampler: TupleSampler, tol: float = 1e-10) -> OrderHypothesisReport:
    """Kronecker comparison of kernel Gram matrices and diffusion Gram matrices.

    ``variant`` is "disc" (kernels at s0), "int" (kernel products integrated
    over [s0, s1]) or "general" (kernels at s in [s0, s1)).
    """
    _check_dims(cx, cy)
    cid = _CK2S_IDS.get(variant)
    if cid is None:
        raise DomainError(f"unknown variant {variant!r}")
    for draw in sampler:
        s0 = float(draw["times"][0])
        S = kron(_kernel_gram(k2, draw, variant), _sigma_sq(cx, s0, draw["x"]))
        U = kron(_kernel_gram(k2_tilde, draw, variant), _sigma_sq(cy, s0, draw["x"]))
        if not loewner_leq(S, U, tol):
            return OrderHypothesisReport(cid, FAILS, _witness(sampler, draw, s=draw["s"], min_eig=loewner_gap(S, U)),
                                         draw["index"] + 1)
    return OrderHypothesisReport(cid, HOLDS, None, sampler.num_samples)


def check_ck2_sigma_1d(k2: Kernel, cx: CoefficientSet, k2_tilde: Kernel, cy: CoefficientSet,
                       sampler: TupleSampler, rtol: float = 1e-9) -> OrderHypothesisReport:
    """d = 1 form: K2(t,s)|sigma(s,x)| = lambda(s,x) K2~(t,s)|sigma~(s,x)| with lambda in [0, 1]."""
    if cx.dim_d != 1 or cy.dim_d != 1:
        raise DimensionError("the 1-d comparison needs d = 1")
    for draw in sampler:
        s0, ts = draw["times"][0], draw["times"][1:]
        sx = math.sqrt(_sigma_sq(cx, s0, draw["x"])[0, 0])
        sy = math.sqrt(_sigma_sq(cy, s0, draw["x"])[0, 0])
        y = np.atleast_1d(k2(ts, np.full_like(ts, s0))) * sx
        z = np.atleast_1d(k2_tilde(ts, np.full_like(ts, s0))) * sy
        scale = max(np.abs(y).max(), np.abs(z).max(), 1e-300)
        zero = np.abs(z) <= rtol * scale
        bad = bool(np.any(np.abs(y[zero]) > rtol * scale))
        if not bad and not np.all(zero):
            lam = y[~zero] / z[~zero]
            bad = lam.max() - lam.min() > rtol * max(abs(lam).max(), 1.0) or lam.max() > 1 + rtol or lam.min() < -rtol
        if bad:
            return OrderHypothesisReport("CK2σ-1d", FAILS, _witness(sampler, draw, y=y, z=z), draw["index"] + 1)
    return OrderHypothesisReport("CK2σ-1d", HOLDS, None, sampler.num_samples)


def check_conv_sigma(coeffs: CoefficientSet, sampler: TupleSampler, tol: float = 1e-10,
                     candidates: Iterable = ()) -> OrderHypothesisReport:
    """Convexity condition on sigma.

    d = q = 1: convexity of ``x -> |sigma(t, x)|`` (exact characterisation).
    Otherwise the square-root criterion with V = I, which is only sufficient:
    its failure is reported as inconclusive.  ``candidates`` are extra
    ``(t, x, y, weight)`` tuples checked before the sampled ones.
    """
    scalar = coeffs.dim_d == 1 and coeffs.dim_q == 1
    cid = "Conv-1d" if scalar else "Conv"
    extra = [{"index": -1, "times": np.array([t]), "x": np.atleast_1d(x), "y": np.atleast_1d(y), "weight": w}
             for t, x, y, w in candidates]
    checked = 0
    for draw in list(extra) + list(sampler):
        checked += 1
        t, a = float(draw["times"][0]), float(draw["weight"])
        x, y = np.atleast_1d(draw["x"]), np.atleast_1d(draw["y"])
        mid = a * x + (1 - a) * y
        if scalar:
            pts = np.array([[mid[0]], [x[0]], [y[0]]])
            s = np.abs(coeffs.diffusion(t, pts)[:, 0, 0])
            lhs, rhs = s[0], a * s[1] + (1 - a) * s[2]
            if lhs > rhs + tol * max(rhs, 1.0):
                w = {"seed": sampler.seed, "index": draw["index"], "t": t, "x": float(x[0]), "y": float(y[0]),
                     "weight": a, "lhs": float(lhs), "rhs": float(rhs)}
                return OrderHypothesisReport(cid, FAILS, w, checked)
        else:
            S = _sigma_sq(coeffs, t, mid)
            R = a * sym_sqrt(_sigma_sq(coeffs, t, x)) + (1 - a) * sym_sqrt(_sigma_sq(coeffs, t, y))
            if not loewner_leq(S, R @ R.T, tol):
                w = {"seed": sampler.seed, "index": draw["index"], "t": t, "x": x.tolist(), "y": y.tolist(),
                     "weight": a, "min_eig": loewner_gap(S, R @ R.T)}
                return OrderHypothesisReport(cid, INCONCLUSIVE, w, checked,
                                             "sufficient square-root criterion (V = I) failed")
    note = "" if scalar else "sufficient-criterion"
    return OrderHypothesisReport(cid, HOLDS, None, checked, note)


def check_drift_compare(cx: CoefficientSet, k1: Kernel, cy: CoefficientSet, k1_tilde: Kernel, direction: str,
                        variant: str, sampler: TupleSampler, tol: float = 1e-12) -> OrderHypothesisReport:
    """Kernel-weighted drift comparison (d = 1).

    disc: ``K1(t,s) b(s,x) <= K1~(t,s) b~(s,x)`` for s < t.
    int:  ``b(s0,x) int_{s0}^{s1} K1(s2,s) ds <= b~(s0,x) int_{s0}^{s1} K1~(s2,s) ds``.
    The inequality is reversed for ``direction="dcv"``.
    """
    if cx.dim_d != 1 or cy.dim_d != 1:
        raise DimensionError("drift comparison needs d = 1")
    if direction not in ("icv", "dcv"):
        raise DomainError(f"direction must be icv or dcv, got {direction!r}")
    cid = f"drift-compare-{direction}"
    sign = 1.0 if direction == "icv" else -1.0
    for draw in (sampler.draw(i, j_min=2) for i in range(sampler.num_samples)):
        times = draw["times"]
        s0 = float(times[0])
        x = np.atleast_2d(draw["x"])
        bx, by = float(cx.drift(s0, x)[0, 0]), float(cy.drift(s0, x)[0, 0])
        if variant == "disc":
            ts = times[1:]
            lhs = np.atleast_1d(k1(ts, np.full_like(ts, s0))) * bx
            rhs = np.atleast_1d(k1_tilde(ts, np.full_like(ts, s0))) * by
        elif variant == "int":
            s1, s2 = float(times[1]), float(times[-1])
            lhs = np.array([bx * k1.cell_integral(s2, s0, s1)])
            rhs = np.array([by * k1_tilde.cell_integral(s2, s0, s1)])
        else:
            raise DomainError(f"unknown variant {variant!r}")
        gap = sign * (rhs - lhs)
        scale = max(np.abs(lhs).max(), np.abs(rhs).max(), 1.0)
        if gap.min() < -tol * scale:
            return OrderHypothesisReport(cid, FAILS, _witness(sampler, draw, lhs=lhs, rhs=rhs), draw["index"] + 1)
    return OrderHypothesisReport(cid, HOLDS, None, sampler.num_samples)


def _init_moments(init):
    if isinstance(init, PointMass):
        return init.value, np.zeros_like(init.value)
    if isinstance(init, GaussianInit):
        return init.mean, init.std ** 2
    if isinstance(init, UniformInit):
        return 0.5 * (init.low + init.high), (init.high - init.low) ** 2 / 12.0
    return None


def check_initial_order(init_x, init_y, order: str, atol: float = 1e-12) -> OrderHypothesisReport:
    """X0 <= Y0 in the given order, decided analytically for point/Gaussian/uniform laws.

    Supported pairs are location-scale families of the same shape (a point
    mass being the degenerate member), where the order reduces to comparing
    means (equal for cvx) and spreads.
    """
    mx, my = _init_moments(init_x), _init_moments(init_y)
    same_family = (type(init_x) is type(init_y)) or isinstance(init_x, PointMass) or isinstance(init_y, PointMass)
    if mx is None or my is None or not same_family:
        return OrderHypothesisReport("initial-order", INCONCLUSIVE, None, 0, "law pair not decidable analytically")
    (m1, v1), (m2, v2) = mx, my
    m1, m2 = np.broadcast_arrays(np.atleast_1d(m1), np.atleast_1d(m2))
    v1, v2 = np.broadcast_arrays(np.atleast_1d(v1), np.atleast_1d(v2))
    if order == "cvx":
        ok = np.allclose(m1, m2, rtol=0, atol=atol) and np.all(v1 <= v2 + atol)
    elif order == "icv":
        ok = np.all(m1 <= m2 + atol) and np.all(v1 <= v2 + atol)
    elif order == "dcv":
        ok = np.all(m1 >= m2 - atol) and np.all(v1 <= v2 + atol)
    else:
        raise DomainError(f"unknown order {order!r}")
    if not isinstance(init_x, PointMass) and isinstance(init_y, PointMass) and np.any(v1 > atol):
        # a non-degenerate law cannot be dominated by a point mass
        ok = False
    w = None if ok else {"mean_x": m1.tolist(), "mean_y": m2.tolist(), "var_x": v1.tolist(), "var_y": v2.tolist()}
    return OrderHypothesisReport("initial-order", HOLDS if ok else FAILS, w, 1)


def check_affine_drift(cx: CoefficientSet, k1: Kernel, cy: CoefficientSet, k1_tilde: Kernel,
                       sampler: TupleSampler, tol: float = 1e-12) -> OrderHypothesisReport:
    """Common affine drift and common drift kernel, checked on samples."""
    _check_dims(cx, cy)
    for draw in (sampler.draw(i, j_min=2) for i in range(sampler.num_samples)):
        times = draw["times"]
        s0 = float(times[0])
        pts = np.stack([draw["x"], draw["y"], 0.5 * (draw["x"] + draw["y"])])
        bx, by = cx.drift(s0, pts), cy.drift(s0, pts)
        scale = 1.0 + np.abs(bx).max()
        ts = times[1:]
        kx, ky = np.atleast_1d(k1(ts, np.full_like(ts, s0))), np.atleast_1d(k1_tilde(ts, np.full_like(ts, s0)))
        if (np.abs(bx - by).max() > tol * scale
                or np.abs(bx[2] - 0.5 * (bx[0] + bx[1])).max() > tol * scale
                or np.abs(kx - ky).max() > tol * max(np.abs(kx).max(), 1.0)):
            return OrderHypothesisReport("affine-drift", FAILS, _witness(sampler, draw), draw["index"] + 1)
    return OrderHypothesisReport("affine-drift", HOLDS, None, sampler.num_samples)


def check_monotone_coefficients(coeffs: CoefficientSet, direction: str, sampler: TupleSampler,
                                tol: float = 1e-10) -> OrderHypothesisReport:
    """d = q = 1: b and |sigma| convex, both non-decreasing (icv) or -b convex and both non-increasing (dcv)."""
    if coeffs.dim_d != 1 or coeffs.dim_q != 1:
        raise DimensionError("monotone coefficient check needs d = q = 1")
    sign = 1.0 if direction == "icv" else -1.0
    for draw in sampler:
        t = float(draw["times"][0])
        x, y, a = float(draw["x"][0]), float(draw["y"][0]), float(draw["weight"])
        lo, hi = min(x, y), max(x, y)
        pts = np.array([[lo], [hi], [a * x + (1 - a) * y]])
        b = sign * coeffs.drift(t, pts)[:, 0]
        s = np.abs(coeffs.diffusion(t, pts)[:, 0, 0])
        mono = b[1] >= b[0] - tol if direction == "icv" else -b[1] <= -b[0] + tol
        mono_s = (s[1] >= s[0] - tol) if direction == "icv" else (s[1] <= s[0] + tol)
        chord = lambda v: (a * v[0] + (1 - a) * v[1]) if x <= y else (a * v[1] + (1 - a) * v[0])
        cvx_b = b[2] <= chord(b) + tol * max(1.0, abs(chord(b)))
        cvx_s = s[2] <= chord(s) + tol * max(1.0, abs(chord(s)))
        if not (mono and mono_s and cvx_b and cvx_s):
            return OrderHypothesisReport("monotone-coefficients", FAILS, _witness(sampler, draw), draw["index"] + 1)
    return OrderHypothesisReport("monotone-coefficients", HOLDS, None, sampler.num_samples)


def theorem_hypotheses(order: str, scheme: str, x: VolterraProcess, y: VolterraProcess,
                       sampler: TupleSampler) -> list[OrderHypothesisReport]:
    """Sampled check of the hypothesis set of the ordering theorem for ``order``."""
    if order not in ORDERS:
        raise DomainError(f"unknown order {order!r}")
    variant = "disc" if scheme == K_DISCRETE else "int"
    reports = []
    if order == "cvx":
        reports.append(check_affine_drift(x.coeffs, x.k1, y.coeffs, y.k1, sampler))
        reports.append(check_c_sigma(x.coeffs, y.coeffs, sampler))
        reports.append(check_ck2(x.k2, y.k2, sampler))
        reports.append(check_ck2_sigma(x.k2, x.coeffs, y.k2, y.coeffs, variant, sampler))
        conv = [check_conv_sigma(c, sampler) for c in (x.coeffs, y.coeffs)]
        best = next((r for r in conv if r.verdict == HOLDS), conv[0])
        best.note = (best.note + " (X or Y suffices)").strip()
        reports.append(best)
    else:
        if x.coeffs.dim_d != 1 or y.coeffs.dim_d != 1:
            raise DimensionError(f"{order} ordering needs d = q = 1")
        if scheme == K_DISCRETE:
            reports.append(check_ck2_sigma_1d(x.k2, x.coeffs, y.k2, y.coeffs, sampler))
        else:
            reports.append(check_ck2_sigma(x.k2, x.coeffs, y.k2, y.coeffs, "general", sampler))
        reports.append(check_drift_compare(x.coeffs, x.k1, y.coeffs, y.k1, order, variant, sampler))
        mono = [check_monotone_coefficients(c, order, sampler) for c in (x.coeffs, y.coeffs)]
        reports.append(next((r for r in mono if r.verdict == HOLDS), mono[0]))
    reports.append(check_initial_order(x.init, y.init, order))
    return reports


# --------------------------------------------------------------------------
# Monte Carlo order test


def mc_order_test(batch_x: PathBatch, batch_y: PathBatch, family: ConvexFunctionalFamily | Sequence[PathFunctional],
                  order: str = "cvx", z: float = 4.0) -> list[OrderReport]:
    """Paired estimates of E F(Y) - E F(X) over the family members admissible for ``order``."""
    if order not in ORDERS:
        raise DomainError(f"unknown order {order!r}")
    if batch_x.grid != batch_y.grid:
        raise GridMismatchError(f"grids differ: {batch_x.grid} vs {batch_y.grid}")
    if batch_x.paths.shape != batch_y.paths.shape:
        raise GridMismatchError("batches have different shapes")
    members = family.filter(order) if isinstance(family, ConvexFunctionalFamily) else \
        [m for m in family if m.applies_to(order)]
    out = []
    for f in members:
        diffs = f(batch_y.paths, batch_y.grid) - f(batch_x.paths, batch_x.grid)
        mean, se, n = engine.paired_stats(diffs)
        out.append(OrderReport(f.name, order, mean, se, n, float(z)))
    return out


# --------------------------------------------------------------------------
# strong convergence rate


@dataclass
class RateResult:
    n_list: list
    errors: list
    errors_se: list
    slope: float
    intercept: float
    ci: tuple
    n_ref: int
    scheme: str
    p: float
    num_paths: int

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ci"] = list(self.ci)
        return out


def coarsen_noise(fine, factor: int, coarse_grid: TimeGrid):
    """Exact coarse-grid noise from fine-grid noise on a nested grid.

    Brownian increments are summed; a coarse K-integrated component
    ``int_{cell l} K2(T_k, s) dW_s`` is the sum of the fine-block components
    at the same target time ``T_k`` (a fine grid point) over the fine cells
    of coarse cell l.
    """
    from .schemes import NoisePlan

    n, r = coarse_grid.n, int(factor)
    if fine.increments is not None:
        P, nf, q = fine.increments.shape
        if nf != n * r:
            raise CouplingError("fine grid is not an r-fold refinement")
        inc = fine.increments.reshape(P, n, r, q).sum(axis=2)
        return NoisePlan(fine.scheme, coarse_grid, q, increments=inc)
    if len(fine.blocks) != n * r:
        raise CouplingError("fine grid is not an r-fold refinement")
    blocks = []
    for l in range(1, n + 1):
        ks = np.arange(l, n + 1)
        acc = None
        for m in range((l - 1) * r + 1, l * r + 1):
            part = fine.blocks[m - 1][:, ks * r - m, :]
            acc = part if acc is None else acc + part
        blocks.append(acc)
    return NoisePlan(fine.scheme, coarse_grid, fine.dim_q, blocks=blocks)


def convergence_rate(process: VolterraProcess, scheme: str, T: float, n_list: Sequence[int], p: float = 2.0,
                     num_paths: int = 10_000, master_seed: int = 0, refine: int = 4,
                     threads: Optional[int] = None, chunk_size: int = 1024,
                     bootstrap: int = 200) -> RateResult:
    """Strong L^p error of the scheme on each grid against a pathwise-coupled reference.

    The reference grid has ``refine * max(n_list)`` steps; every coarse run is
    driven by the exactly aggregated reference noise and the same X0.  The
    error is ``(E max_k |X^n_{t_k} - X^ref_{t_k}|^p)^(1/p)`` over the coarse
    grid points, and the slope is the OLS fit of log e(n) against log(T/n).
    """
    ns = [int(v) for v in n_list]
    if len(ns) < 2 or any(b <= a for a, b in zip(ns, ns[1:])):
        raise CouplingError("n_list must hold at least two increasing step counts")
    if any(b % a for a, b in zip(ns, ns[1:])):
        raise CouplingError("grids are not nested: each n must divide the next")
    n_ref = int(refine) * ns[-1]
    if refine < 1:
        raise CouplingError("refine must be >= 1")
    ref_grid = TimeGrid(n_ref, T)
    coeffs = process.coeffs
    d = coeffs.dim_d
    ctx_ref = SchemeContext.build(scheme, coeffs, process.k1, process.k2, ref_grid)
    ctxs = [SchemeContext.build(scheme, coeffs, process.k1, process.k2, TimeGrid(n, T)) for n in ns]
    size = noise_size(scheme, n_ref, coeffs.dim_q)

    def work(a, b):
        idx = range(a, b)
        fine = ctx_ref.make_noise(engine.normals_matrix(master_seed, idx, size))
        x0 = process.init.sample(master_seed, idx, d)
        ref = run_recursion(ctx_ref, x0, fine)
        errs = np.empty((b - a, len(ns)))
        for col, (n, ctx) in enumerate(zip(ns, ctxs)):
            r = n_ref // n
            xn = run_recursion(ctx, x0, coarsen_noise(fine, r, ctx.grid))
            diff = np.linalg.norm(xn - ref[:, ::r], axis=2)
            errs[:, col] = diff.max(axis=1) ** p
        return errs

    errs = np.concatenate(engine.run_chunks(work, int(num_paths), threads, chunk_size))
    mean_p = errs.mean(axis=0)
    e = mean_p ** (1.0 / p)
    # delta method for (mean)^(1/p)
    se = e / (p * mean_p) * errs.std(axis=0, ddof=1) / math.sqrt(errs.shape[0])
    hs = [T / n for n in ns]
    slope, intercept, _ = engine.loglog_fit(hs, e)
    rng = engine.generator(master_seed, 0, engine.STREAM_BOOTSTRAP)
    boots = []
    for _ in range(int(bootstrap)):
        pick = rng.integers(0, errs.shape[0], size=errs.shape[0])
        eb = errs[pick].mean(axis=0) ** (1.0 / p)
        if np.all(eb > 0):
            boots.append(engine.loglog_fit(hs, eb)[0])
    ci = (float(np.percentile(boots, 2.5)), float(np.percentile(boots, 97.5))) if boots else (slope, slope)
    return RateResult(ns, e.tolist(), se.tolist(), slope, intercept, ci, n_ref, scheme, float(p), int(num_paths))
