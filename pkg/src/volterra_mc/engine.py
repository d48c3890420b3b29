"""Seeded random streams, fixed-order reductions and small statistics helpers.

Every Monte Carlo path owns an independent Philox stream keyed by
``(master_seed, path_index)``.  Philox is counter based, so a path's draws do
not depend on which worker simulated it or in which order; batches are
therefore bitwise reproducible for any thread count as long as chunk
boundaries are fixed.
"""
from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtri

from .errors import DomainError, InsufficientDataError

_MASK64 = (1 << 64) - 1
_INV_2_52 = 2.0 ** -52

# counter word 3 selects an independent sub-stream of a path
STREAM_NOISE = 0
STREAM_INIT = 1
STREAM_BRIDGE = 2
STREAM_SAMPLER = 3
STREAM_BOOTSTRAP = 4

DEFAULT_CHUNK = 2048


def substream(master_seed: int, path_index: int, stream: int = STREAM_NOISE) -> np.random.Philox:
    """Counter-based bit generator for one path.

    The key is ``(master_seed, path_index)`` and the highest counter word is the
    stream id, so streams of distinct paths or purposes never overlap.
    """
    key = np.array([int(master_seed) & _MASK64, int(path_index) & _MASK64], dtype=np.uint64)
    counter = np.array([0, 0, 0, int(stream) & _MASK64], dtype=np.uint64)
    return np.random.Philox(counter=counter, key=key)


def uniforms_from_raw(raw: np.ndarray) -> np.ndarray:
    # 52 random bits centred in their cell; with 53 bits the top cell centre
    # 1 - 2^-54 is not representable and rounds to 1.0
    return ((raw >> np.uint64(12)).astype(np.float64) + 0.5) * _INV_2_52


def standard_normals(master_seed: int, path_index: int, count: int, stream: int = STREAM_NOISE) -> np.ndarray:
    """``count`` N(0,1) draws by inverse-CDF transform of the path's raw stream.

    One raw 64-bit word per normal, so consumption never desynchronises.
    """
    raw = substream(master_seed, path_index, stream).random_raw(int(count))
    return ndtri(uniforms_from_raw(np.asarray(raw, dtype=np.uint64)))


def normals_matrix(master_seed: int, path_indices: Sequence[int], count: int,
                   stream: int = STREAM_NOISE) -> np.ndarray:
    out = np.empty((len(path_indices), int(count)))
    for row, p in enumerate(path_indices):
        out[row] = standard_normals(master_seed, p, count, stream)
    return out


def generator(master_seed: int, path_index: int = 0, stream: int = STREAM_SAMPLER) -> np.random.Generator:
    """numpy Generator on top of a substream, for auxiliary sampling."""
    return np.random.Generator(substream(master_seed, path_index, stream))


def chunk_ranges(num_paths: int, chunk_size: int = DEFAULT_CHUNK) -> list[tuple[int, int]]:
    chunk_size = max(1, int(chunk_size))
    return [(a, min(a + chunk_size, num_paths)) for a in range(0, num_paths, chunk_size)]


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get("VOLTERRA_THREADS", "1") or 1)
    return max(1, int(threads))


def run_chunks(func: Callable[[int, int], object], num_paths: int, threads: int | None = None,
               chunk_size: int = DEFAULT_CHUNK) -> list:
    """Apply ``func(start, stop)`` to fixed chunks; results in chunk order.

    Chunk boundaries depend only on ``chunk_size``, never on the worker count.
    """
    ranges = chunk_ranges(num_paths, chunk_size)
    threads = resolve_threads(threads)
    if threads == 1 or len(ranges) == 1:
        return [func(a, b) for a, b in ranges]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda r: func(*r), ranges))


def pairwise_sum(values: np.ndarray) -> float:
    """Sum with numpy's fixed-order pairwise reduction over a contiguous copy."""
    return float(np.sum(np.ascontiguousarray(values, dtype=np.float64)))


def paired_stats(diffs) -> tuple[float, float, int]:
    """Mean, standard error and count of a sample of paired differences."""
    x = np.ascontiguousarray(diffs, dtype=np.float64).ravel()
    n = x.size
    if n < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {n}")
    if np.all(x == x[0]):
        # a constant sample has no spread; avoid rounding noise in the mean
        return float(x[0]), 0.0, n
    mean = pairwise_sum(x) / n
    dev = x - mean
    var = pairwise_sum(dev * dev) / (n - 1)
    return mean, float(np.sqrt(var / n)), n


def loglog_fit(xs, ys) -> tuple[float, float, float]:
    """OLS line through (ln x, ln y); returns slope, intercept and RMS residual."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise DomainError("loglog_fit needs two equal-length 1-d samples of size >= 2")
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("loglog_fit needs strictly positive inputs")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    return float(slope), float(intercept), float(np.sqrt(np.mean(resid ** 2)))


def sample_moments(x) -> dict:
    """Mean, variance and standardised third/fourth moments with their SEs."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    if n < 4:
        raise InsufficientDataError("need at least 4 samples for moments")
    m = x.mean()
    c = x - m
    var = np.mean(c ** 2)
    skew = np.mean(c ** 3) / var ** 1.5
    kurt = np.mean(c ** 4) / var ** 2 - 3.0
    var_unbiased = var * n / (n - 1)
    # SE of the sample variance: sqrt((mu4 - sigma^4 (n-3)/(n-1)) / n)
    mu4 = np.mean(c ** 4)
    var_se = np.sqrt(max(mu4 - var ** 2 * (n - 3) / (n - 1), 0.0) / n)
    return {
        "n": n, "mean": float(m), "var": float(var_unbiased), "var_se": float(var_se),
        "skew": float(skew), "skew_se": float(np.sqrt(6.0 / n)),
        "excess_kurtosis": float(kurt), "kurtosis_se": float(np.sqrt(24.0 / n)),
    }


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


@dataclass
class RunManifest:
    master_seed: int
    config_hash: str
    library_version: str
    wall_clock: str
    tolerances: dict = field(default_factory=dict)
    command: str = ""
    threads: int = 1

    @classmethod
    def create(cls, config: dict, master_seed: int, command: str = "", tolerances: dict | None = None,
               threads: int = 1) -> "RunManifest":
        from . import __version__

        return cls(
            master_seed=int(master_seed),
            config_hash=config_hash(config),
            library_version=__version__,
            wall_clock=time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            tolerances=dict(tolerances or {}),
            command=command,
            threads=int(threads),
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
