"""Fractional derivatives, the generalized Lebesgue-Stieltjes integral and
the norms that control it.

All singular integrals of the form ``int h(u) |x-u|^(-theta) du`` are
computed by product integration: ``h`` is replaced by its piecewise-linear
interpolant on the grid and each cell is integrated exactly against the
power kernel. On a uniform grid the cell weights depend only on the lag, so
they are tabulated once per exponent.

Sign convention: the right-sided derivative is real-valued and oriented so
that ``gls_integral(1, g) = g(b) - g(a)``; the complex phases of the two
derivatives are dropped together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gamma as Gamma

from .errors import ConfigError, DivergentIntegralError, GridError, ResourceLimitError
from .noise import SamplePath, TimeGrid

QUADRATIC_CAP = 8192


@dataclass(frozen=True)
class FracParams:
    """Exponents: ``alpha`` in (1-gamma, 1/2), driver Hoelder ``gamma`` in
    (1/2, 1], coefficient time-Hoelder ``beta`` in (1-gamma, 1]."""

    alpha: float
    gamma: float
    beta: float = 1.0

    def __post_init__(self):
        if not 0.5 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in (1/2, 1], got {self.gamma}", field="gamma")
        if not 1.0 - self.gamma < self.alpha < 0.5:
            raise ConfigError(f"alpha must lie in (1-gamma, 1/2) = ({1 - self.gamma:g}, 0.5), got {self.alpha}", field="alpha")
        if not 1.0 - self.gamma < self.beta <= 1.0:
            raise ConfigError(f"beta must lie in (1-gamma, 1], got {self.beta}", field="beta")

    @classmethod
    def for_hurst(cls, H: float, alpha: float | None = None, beta: float = 1.0) -> "FracParams":
        gamma = H - 0.01
        if alpha is None:
            alpha = (3.0 - 2.0 * H) / 4.0
            if not 1.0 - gamma < alpha < 0.5:
                alpha = (1.5 - gamma) / 2.0
        return cls(alpha, gamma, beta)


@dataclass
class FracDerivative:
    times: np.ndarray
    index: np.ndarray
    values: np.ndarray


def _check_size(n: int):
    if n > QUADRATIC_CAP:
        raise ResourceLimitError(f"quadratic-cost operation limited to N <= {QUADRATIC_CAP}", steps=n)


def _row_norms(v: np.ndarray) -> np.ndarray:
    """Euclidean norm of each row, exact for scalars and safe against underflow."""
    if v.shape[1] == 1:
        return np.abs(v[:, 0])
    return np.hypot.reduce(v, axis=1)


def _cell_integral(k: np.ndarray, e: float) -> np.ndarray:
    """int_k^{k+1} v^e dv for integer k >= 0, without cancellation."""
    k = np.asarray(k, dtype=float)
    out = np.empty_like(k)
    pos = k > 0
    kp = k[pos]
    if e == -1.0:
        out[pos] = np.log1p(1.0 / kp)
    else:
        out[pos] = kp ** (e + 1.0) * np.expm1((e + 1.0) * np.log1p(1.0 / kp)) / (e + 1.0)
    out[~pos] = 1.0 / (e + 1.0) if e > -1.0 else np.inf
    return out


@lru_cache(maxsize=64)
def cell_weights(nlags: int, theta: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact weights on unit cells [k, k+1] for the kernel v^-theta.

    ``near[k]`` multiplies the value at v = k and ``far[k]`` the value at
    v = k + 1 of a linear function. ``near[0]`` is NaN when the kernel is not
    integrable at 0; callers must then supply a zero value there.
    """
    k = np.arange(nlags, dtype=float)
    s0 = _cell_integral(k, -theta)
    s1 = _cell_integral(k, 1.0 - theta)
    near = (k + 1.0) * s0 - s1
    far = s1 - k * np.where(k > 0, s0, 0.0)
    if theta >= 1.0:
        near[0] = np.nan
    near.setflags(write=False)
    far.setflags(write=False)
    return near, far


@lru_cache(maxsize=64)
def _lag_weights(nlags: int, theta: float) -> tuple[np.ndarray, np.ndarray]:
    """Interior lag weights ``c[j] = far[j-1] + near[j]`` (c[0] = 0) and ``near``."""
    near, far = cell_weights(nlags + 1, theta)
    c = np.zeros(nlags + 1)
    c[1:] = far[:-1] + near[1:]
    c.setflags(write=False)
    return c, near


def _signed_left_integrals(f: np.ndarray, theta: float, dt: float) -> np.ndarray:
    """I[m] = int_{t_0}^{t_m} (f_m - f(u)) (t_m - u)^(-theta) du for m = 0..n."""
    n = f.size - 1
    c, near = _lag_weights(n, theta)
    # truncated last weight: far[m-1] = c[m] - near[m]
    wsum = np.cumsum(c) - np.where(np.arange(n + 1) > 0, near[: n + 1], 0.0)
    conv = np.convolve(c, f)[: n + 1] - near[: n + 1] * f[0]
    out = f * wsum - conv
    out[0] = 0.0
    return out * dt ** (1.0 - theta)


def _abs_left_integral(values: np.ndarray, m: int, theta: float, dt: float, start: int = 0) -> float:
    """int_{t_start}^{t_m} |f(t_m) - f(u)| (t_m - u)^(-theta) du."""
    L = m - start
    if L <= 0:
        return 0.0
    c, near = _lag_weights(L, theta)
    diff = values[m] - values[m - 1 : start - 1 if start > 0 else None : -1]
    h = _row_norms(diff)
    w = c[1 : L + 1].copy()
    w[-1] -= near[L]
    return float(w @ h) * dt ** (1.0 - theta)


def _scalar(f) -> tuple[np.ndarray, TimeGrid]:
    if isinstance(f, SamplePath):
        return f.scalar, f.grid
    raise TypeError("expected a scalar SamplePath")


def _span(grid: TimeGrid, a: float, b: float) -> tuple[int, int]:
    ia, ib = grid.index(a), grid.index(b)
    if ia >= ib:
        raise GridError("need a < b within the grid", a=a, b=b)
    _check_size(ib - ia)
    return ia, ib


def _plus_values(f: np.ndarray, ia: int, ib: int, alpha: float, dt: float) -> np.ndarray:
    """D^alpha_{a+} f at nodes ia..ib (value at ia meaningful only if f(a) = 0)."""
    seg = f[ia : ib + 1]
    L = np.arange(seg.size) * dt
    with np.errstate(divide="ignore", invalid="ignore"):
        head = np.where(L > 0, seg / np.where(L > 0, L, 1.0) ** alpha, 0.0)
    return (head + alpha * _signed_left_integrals(seg, 1.0 + alpha, dt)) / Gamma(1.0 - alpha)


def _minus_values(g: np.ndarray, ia: int, ib: int, alpha: float, dt: float) -> np.ndarray:
    """Right derivative D^{1-alpha}_{b-} g at nodes ia..ib (zero at ib)."""
    rev = g[ia : ib + 1][::-1]
    L = np.arange(rev.size) * dt
    with np.errstate(divide="ignore", invalid="ignore"):
        head = np.where(L > 0, (rev[0] - rev) / np.where(L > 0, L, 1.0) ** (1.0 - alpha), 0.0)
    tail = -_signed_left_integrals(rev, 2.0 - alpha, dt)
    return ((head + (1.0 - alpha) * tail) / Gamma(alpha))[::-1]


def frac_deriv_plus(f: SamplePath, a: float, b: float, params: FracParams) -> FracDerivative:
    """Left-sided derivative D^alpha_{a+} f at the grid nodes strictly inside (a, b)."""
    vals, grid = _scalar(f)
    ia, ib = _span(grid, a, b)
    d = _plus_values(vals, ia, ib, params.alpha, grid.dt)
    idx = np.arange(ia + 1, ib)
    return FracDerivative(grid.nodes[idx], idx, d[1:-1])


def frac_deriv_minus(g: SamplePath, a: float, b: float, params: FracParams) -> FracDerivative:
    """Right-sided derivative D^{1-alpha}_{b-} g at the grid nodes strictly inside (a, b)."""
    vals, grid = _scalar(g)
    ia, ib = _span(grid, a, b)
    d = _minus_values(vals, ia, ib, params.alpha, grid.dt)
    idx = np.arange(ia + 1, ib)
    return FracDerivative(grid.nodes[idx], idx, d[1:-1])


def _gls(fv, gv, ia, ib, alpha, dt):
    dp = _plus_values(fv - fv[ia], ia, ib, alpha, dt)
    dm = _minus_values(gv, ia, ib, alpha, dt)
    prod = dp * dm
    # both end values vanish: f - f(a) at a, piecewise-linear g at b
    body = float(np.sum(prod[1:-1]) * dt)
    mass = float(np.sum(np.abs(prod[1:-1])) * dt)
    const = float(fv[ia] * (gv[ib] - gv[ia]))
    return const + body, abs(const) + mass


def gls_integral(
    f: SamplePath,
    g: SamplePath,
    a: float,
    b: float,
    params: FracParams,
    *,
    check_divergence: bool = True,
    growth_limit: float = 1.5,
) -> float:
    """Pathwise integral of f against g over [a, b] via fractional derivatives.

    The constant part ``f(a)`` is integrated in closed form (it contributes
    ``f(a) (g(b) - g(a))``), which removes the ``(x-a)^-alpha`` endpoint
    singularity from the numerical part.
    """
    fv, grid = _scalar(f)
    gv, g_grid = _scalar(g)
    if g_grid != grid:
        raise GridError("f and g must share a grid")
    ia, ib = _span(grid, a, b)
    value, mass = _gls(fv, gv, ia, ib, params.alpha, grid.dt)
    if not math.isfinite(value):
        raise DivergentIntegralError("integral is not finite", a=a, b=b)
    if check_divergence and ia % 2 == 0 and ib % 2 == 0 and ib - ia >= 8:
        _, coarse_mass = _gls(fv[::2], gv[::2], ia // 2, ib // 2, params.alpha, 2 * grid.dt)
        if mass > growth_limit * coarse_mass + 1e-12:
            raise DivergentIntegralError(
                "integrand mass grows under refinement; driver too rough for this alpha",
                fine_mass=mass,
                coarse_mass=coarse_mass,
            )
    return value


def riemann_stieltjes(f: SamplePath, g: SamplePath, a: float, b: float) -> float:
    """Trapezoidal Riemann-Stieltjes sum on the grid cells of [a, b]."""
    fv, grid = _scalar(f)
    gv, _ = _scalar(g)
    ia, ib = grid.index(a), grid.index(b)
    fs, gs = fv[ia : ib + 1], gv[ia : ib + 1]
    return float(np.sum(0.5 * (fs[1:] + fs[:-1]) * np.diff(gs)))


def _minus_pair_sup(g: np.ndarray, it: int, alpha: float, dt: float) -> float:
    """max over node pairs u < v <= t_it of |D^{1-alpha}_{v-} g (u)|."""
    theta = 2.0 - alpha
    c, near = _lag_weights(it, theta)
    scale = dt ** (1.0 - theta)
    best = 0.0
    for i in range(it):
        h = g[i + 1 : it + 1] - g[i]
        L = np.arange(1, h.size + 1)
        cw = c[1 : h.size + 1] * h
        inner = np.cumsum(cw) - near[L] * h
        val = h / (L * dt) ** (1.0 - alpha) + (1.0 - alpha) * inner * scale
        best = max(best, float(np.max(np.abs(val))))
    return best / Gamma(alpha)


def lambda_coeff(g: SamplePath, t: float, params: FracParams) -> float:
    """Sup over grid pairs 0 <= u < v <= t of |D^{1-alpha}_{v-} g (u)|."""
    gv, grid = _scalar(g)
    it = grid.index(t)
    _check_size(it)
    if it == 0:
        return 0.0
    return _minus_pair_sup(gv, it, params.alpha, grid.dt)


def _abs_left_all(values: np.ndarray, ia: int, ib: int, theta: float, dt: float) -> np.ndarray:
    return np.array([_abs_left_integral(values, m, theta, dt, start=ia) for m in range(ia, ib + 1)])


def integral_bound(f: SamplePath, g: SamplePath, a: float, b: float, params: FracParams) -> float:
    """Right-hand side of the pathwise estimate

        C Lambda_b(g) int_a^b ( |f(s)| (s-a)^-alpha + int_a^s |f(s)-f(z)| (s-z)^(-1-alpha) dz ) ds

    with C = 1/Gamma(1-alpha).
    """
    fv, grid = _scalar(f)
    ia, ib = _span(grid, a, b)
    alpha, dt = params.alpha, grid.dt
    if not np.any(fv[ia : ib + 1]):
        return 0.0
    lam = lambda_coeff(g, b, params)
    L = ib - ia
    c, near = _lag_weights(L, alpha)
    w = c.copy()
    w[0] = near[0]
    w[L] -= near[L]
    first = float(w @ np.abs(fv[ia : ib + 1])) * dt ** (1.0 - alpha)
    J = _abs_left_all(fv[:, None], ia, ib, 1.0 + alpha, dt)
    second = float(np.sum(0.5 * (J[1:] + J[:-1])) * dt)
    return lam * (first + second) / Gamma(1.0 - alpha)


def norm_inf(f: SamplePath, t: float, params: FracParams) -> float:
    """sup_{s <= t} |f(s)| + int_0^s |f(s)-f(z)| (s-z)^(-1-alpha) dz over grid nodes."""
    it = f.grid.index(t)
    _check_size(it)
    v = f.values
    mags = _row_norms(v[: it + 1])
    J = _abs_left_all(v, 0, it, 1.0 + params.alpha, f.grid.dt)
    return float(np.max(mags + J))


def seminorm_0(f: SamplePath, t: float, params: FracParams) -> float:
    """sup over grid pairs u < v <= t of
    |f(v)-f(u)| / (v-u)^(1-alpha)  +  int_u^v |f(u)-f(z)| (z-u)^(alpha-2) dz.
    """
    it = f.grid.index(t)
    _check_size(it)
    alpha, dt = params.alpha, f.grid.dt
    theta = 2.0 - alpha
    c, near = _lag_weights(max(it, 1), theta)
    scale = dt ** (1.0 - theta)
    v = f.values
    best = 0.0
    for i in range(it):
        diff = v[i + 1 : it + 1] - v[i]
        h = _row_norms(diff)
        L = np.arange(1, h.size + 1)
        inner = np.cumsum(c[1 : h.size + 1] * h) - near[L] * h
        val = h / (L * dt) ** (1.0 - alpha) + inner * scale
        best = max(best, float(np.max(val)))
    return best


def truncate_kn(x, n: float):
    """Radial truncation x/|x| * min(|x|, n) along the last axis; scalars clip."""
    if n < 1:
        raise ConfigError("truncation level must be >= 1")
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return np.clip(x, -n, n)
    r = np.sqrt(np.sum(x * x, axis=-1, keepdims=True))
    factor = np.where(r > n, n / np.where(r > 0, r, 1.0), 1.0)
    return x * factor


def smooth_driver(Z: SamplePath, n: int) -> SamplePath:
    """Trailing moving average  n * int_{(t-1/n) v 0}^t k_n(Z_s) ds  on the grid."""
    grid = Z.grid
    if n < 1:
        raise ConfigError("n must be >= 1")
    width = 1.0 / n
    if width < grid.dt * (1 - 1e-12):
        raise GridError("smoothing window 1/n is narrower than dt; refine the grid", n=n, dt=grid.dt)
    k = truncate_kn(Z.values, n)
    dt = grid.dt
    C = np.zeros_like(k)
    C[1:] = np.cumsum(0.5 * (k[1:] + k[:-1]) * dt, axis=0)
    lo = np.maximum(grid.nodes - width, 0.0)
    m = np.minimum(np.floor(lo / dt + 1e-12).astype(int), grid.steps - 1)
    tau = (lo - m * dt)[:, None]
    C_lo = C[m] + k[m] * tau + (k[m + 1] - k[m]) * tau**2 / (2.0 * dt)
    return SamplePath(grid, n * (C - C_lo))
