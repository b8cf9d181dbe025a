"""Time grids, sample paths, reproducible random streams and noise generators.

Wiener increments are plain scaled Gaussians. Fractional Brownian motion is
synthesised from fractional Gaussian noise by circulant embedding
(Davies-Harte), with a dense Cholesky fallback when the embedding has
negative eigenvalues.

Every path ``p`` drawn under ``SeedSpec(seed, stream)`` uses its own Philox
generator keyed by ``(seed, stream, p)``, so a path is the same whether it
is generated alone, inside a batch, or on another thread.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, TextIO

import numpy as np

from .errors import ConfigError, GridError, HurstRangeError, NonFiniteStateError, ResourceLimitError

DENSE_FBM_CAP = 4096
WIENER_STREAM = 0
FBM_STREAM = 1


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    steps: int

    def __post_init__(self):
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise GridError("horizon must be a positive finite time", horizon=self.horizon)
        if int(self.steps) != self.steps or self.steps < 2:
            raise GridError("grid needs at least 2 steps", steps=self.steps)
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.horizon / self.steps

    def index(self, t: float, *, atol: float = 1e-9) -> int:
        """Index of the node at time ``t``; ``t`` must lie on the grid."""
        x = t / self.dt
        i = int(round(x))
        if abs(x - i) > atol * max(1.0, abs(x)) or not 0 <= i <= self.steps:
            raise GridError("time is not a grid node", t=t, dt=self.dt)
        return i

    def refine(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.horizon, self.steps * int(factor))


@dataclass(frozen=True)
class SeedSpec:
    seed: int
    stream: int = 0

    def __post_init__(self):
        if self.stream < 0:
            raise ConfigError("stream index must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")

    def generator(self, path: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream), int(path)))
        return np.random.Generator(np.random.Philox(ss))

    def with_stream(self, stream: int) -> "SeedSpec":
        return SeedSpec(self.seed, stream)


class SamplePath:
    """Values of a d-dimensional process at the nodes of a ``TimeGrid``."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: TimeGrid, values):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] != grid.steps + 1:
            raise GridError("path needs one row per grid node", rows=values.shape[0], nodes=grid.steps + 1)
        if not np.all(np.isfinite(values)):
            raise NonFiniteStateError("sample path contains non-finite values")
        self.grid = grid
        self.values = values

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def scalar(self) -> np.ndarray:
        if self.dim != 1:
            raise ConfigError(f"path is not scalar (dim={self.dim})")
        return self.values[:, 0]

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    def __repr__(self):
        return f"SamplePath(T={self.grid.horizon}, N={self.grid.steps}, d={self.dim})"

    def __eq__(self, other):
        return (
            isinstance(other, SamplePath)
            and self.grid == other.grid
            and np.array_equal(self.values, other.values)
        )

    def to_csv(self, fh: TextIO | None = None) -> str | None:
        """Write ``t,x_1,...,x_d`` rows using shortest round-trip floats."""
        out = fh if fh is not None else io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["t"] + [f"x_{k + 1}" for k in range(self.dim)])
        for t, row in zip(self.grid.nodes, self.values):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
        if fh is None:
            return out.getvalue()
        return None

    @classmethod
    def from_csv(cls, fh: TextIO | str) -> "SamplePath":
        if isinstance(fh, str):
            fh = io.StringIO(fh)
        rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if not header or header[0] != "t":
            raise ConfigError("path CSV must start with a 't' column")
        data = np.array([[float(v) for v in r] for r in body if r])
        t = data[:, 0]
        grid = TimeGrid(float(t[-1]), len(t) - 1)
        if not np.allclose(t, grid.nodes, rtol=1e-12, atol=1e-12 * grid.horizon):
            raise GridError("CSV times are not a uniform grid starting at 0")
        return cls(grid, data[:, 1:])


def check_hurst(H: float, *, allow_half: bool = False) -> float:
    """Validate the long-memory range 1/2 < H < 1; H = 1/2 only in test mode."""
    H = float(H)
    if allow_half and H == 0.5:
        return H
    if not 0.5 < H < 1.0:
        raise HurstRangeError("Hurst parameter must lie in (1/2, 1)", H=H)
    return H


def fbm_covariance(s, t, H: float):
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(s < 0) or np.any(t < 0):
        raise ConfigError("fBm covariance needs nonnegative times")
    h2 = 2.0 * H
    return 0.5 * (s**h2 + t**h2 - np.abs(t - s) ** h2)


def fgn_autocovariance(n: int, H: float) -> np.ndarray:
    """Autocovariance of unit-step fractional Gaussian noise at lags 0..n-1."""
    k = np.arange(n, dtype=float)
    h2 = 2.0 * H
    return 0.5 * (np.abs(k + 1) ** h2 + np.abs(k - 1) ** h2 - 2.0 * k**h2)


@lru_cache(maxsize=32)
def _circulant_scales(n: int, H: float) -> np.ndarray | None:
    gamma = fgn_autocovariance(n + 1, H)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    eig = np.fft.fft(row).real
    if eig.min() < -1e-10 * eig.max():
        return None
    m = row.size
    eig = np.clip(eig, 0.0, None)
    scale = np.empty(n + 1)
    scale[0] = math.sqrt(eig[0] / m)
    scale[n] = math.sqrt(eig[n] / m)
    scale[1:n] = np.sqrt(eig[1:n] / (2.0 * m))
    scale.setflags(write=False)
    return scale


@lru_cache(maxsize=8)
def _dense_factor(n: int, H: float) -> np.ndarray:
    if n > DENSE_FBM_CAP:
        raise ResourceLimitError("dense fBm fallback limited to N <= %d" % DENSE_FBM_CAP, steps=n)
    from scipy.linalg import cholesky, toeplitz

    L = cholesky(toeplitz(fgn_autocovariance(n, H)), lower=True)
    L.setflags(write=False)
    return L


def _fgn_from_normals(z: np.ndarray, n: int, H: float, method: str) -> np.ndarray:
    """Unit-step fGn rows from standard normals ``z`` of shape (..., 2n)."""
    scale = _circulant_scales(n, H) if method in ("auto", "circulant") else None
    if scale is None:
        if method == "circulant":
            raise ConfigError("circulant embedding is not nonnegative for this (N, H)")
        return z[..., :n] @ _dense_factor(n, H).T
    m = 2 * n
    a = np.empty(z.shape[:-1] + (m,), dtype=complex)
    a[..., 0] = scale[0] * z[..., 0]
    a[..., n] = scale[n] * z[..., 1]
    a[..., 1:n] = scale[1:n] * (z[..., 2 : n + 1] + 1j * z[..., n + 1 : 2 * n])
    a[..., n + 1 :] = np.conj(a[..., n - 1 : 0 : -1])
    return np.fft.fft(a, axis=-1).real[..., :n]


def wiener_increments(grid: TimeGrid, dim: int, seed: SeedSpec, paths: Iterable[int]) -> np.ndarray:
    """Wiener increments, shape (P, N, dim)."""
    if dim < 1:
        raise ConfigError("Wiener dimension must be >= 1")
    sd = math.sqrt(grid.dt)
    out = [seed.generator(p).standard_normal((grid.steps, dim)) * sd for p in paths]
    return np.stack(out) if out else np.empty((0, grid.steps, dim))


def fbm_increments(
    grid: TimeGrid,
    H: float,
    seed: SeedSpec,
    paths: Iterable[int],
    dim: int = 1,
    *,
    method: str = "auto",
    allow_half: bool = False,
) -> np.ndarray:
    """Fractional Brownian increments, shape (P, N, dim), components independent."""
    H = check_hurst(H, allow_half=allow_half)
    n = grid.steps
    z = np.stack([seed.generator(p).standard_normal((dim, 2 * n)) for p in paths])
    fgn = _fgn_from_normals(z, n, H, method) * grid.dt**H
    return np.swapaxes(fgn, 1, 2)


def cumulate(increments: np.ndarray) -> np.ndarray:
    """Node values from increments along axis 1, starting at 0."""
    shape = list(increments.shape)
    shape[1] += 1
    out = np.zeros(shape)
    np.cumsum(increments, axis=1, out=out[:, 1:])
    return out


def gen_wiener(grid: TimeGrid, m: int, seed: SeedSpec, *, path: int = 0) -> SamplePath:
    return SamplePath(grid, cumulate(wiener_increments(grid, m, seed, [path]))[0])


def gen_fbm(
    grid: TimeGrid,
    H: float,
    seed: SeedSpec,
    *,
    path: int = 0,
    dim: int = 1,
    method: str = "auto",
    allow_half: bool = False,
) -> SamplePath:
    inc = fbm_increments(grid, H, seed, [path], dim, method=method, allow_half=allow_half)
    return SamplePath(grid, cumulate(inc)[0])


def default_gamma(H: float) -> float:
    """Working Hoelder exponent for fBm paths (any value below H is admissible)."""
    return H - 0.01


def holder_constant(path: SamplePath | np.ndarray, gamma: float, grid: TimeGrid | None = None) -> float:
    """Largest |g(t_j)-g(t_i)| / (t_j-t_i)^gamma over grid pairs i < j.

    A lower bound for the continuum Hoelder constant.
    """
    if not 0 < gamma < 1:
        raise ConfigError("gamma must lie in (0, 1)")
    if isinstance(path, SamplePath):
        grid, values = path.grid, path.values
    else:
        values = np.asarray(path, dtype=float)
        values = values[:, None] if values.ndim == 1 else values
    dt = grid.dt
    n = values.shape[0] - 1
    best = 0.0
    for lag in range(1, n + 1):
        diff = values[lag:] - values[:-lag]
        m = np.sqrt(np.max(np.einsum("ij,ij->i", diff, diff)))
        best = max(best, m / (lag * dt) ** gamma)
    return float(best)
