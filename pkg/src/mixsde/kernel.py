"""Volterra kernel of the Wiener representation of W + B^H and its uses.

The kernel r(t, s) solves

    r(t,s) + int_0^s r(t,x) r(s,x) dx = K(t-s),   K(u) = H(2H-1) u^(2H-2),

for 0 <= s < t. Writing r = K - q moves the singularity out of the unknown:

    q(t,s) = int_0^s (K(t-x) - q(t,x)) (K(s-x) - q(s,x)) dx,

and q is continuous up to the diagonal when H > 3/4 (there r(t,.) is
square integrable). q is marched row by row on node pairs (t_i, s_j),
j <= i, with q(t_i, .) piecewise linear in x and every product with K
integrated exactly per cell. Each row is a lower-triangular linear solve;
the diagonal q(t_i, t_i) is the small root of a quadratic.

The leading singular part of q is S(t,s) = int_0^s K(t-x) K(s-x) dx, known
in closed form; q behaves like S + const + C (t-s)^(2H-1) near the diagonal.
Off-node values of q are therefore S plus the node remainder q - S,
interpolated linearly in the variable (t-x)^(2H-1). The tabulated kernel is
r(t_i, s_j + dt/2) = K(t_i - s_j - dt/2) - q(t_i, s_j + dt/2).
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import hyp2f1, roots_jacobi, roots_legendre

from .errors import ConfigError, ConvergenceError, GridError, HurstRangeError, ResourceLimitError
from .fracalc import _cell_integral, _lag_weights, cell_weights
from .noise import SamplePath, SeedSpec, TimeGrid, check_hurst, wiener_increments
from .parallel import DEFAULT_BATCH, concat, map_batches
from .solver import CirParams, SolveResult, _result, cir_march

KERNEL_CAP = 1024
RESIDUAL_PAIRS_FULL = 256
_GAUSS = 12


def kernel_rhs(t, s, H: float):
    """H(2H-1)(t-s)^(2H-2) for s < t."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(s >= t):
        raise ConfigError("kernel right side needs s < t")
    out = H * (2.0 * H - 1.0) * (t - s) ** (2.0 * H - 2.0)
    return out if out.ndim else float(out)


def _check_kernel_hurst(H: float) -> float:
    if H == 0.5:
        return H
    H = check_hurst(H)
    if H <= 0.75:
        raise HurstRangeError(
            "kernel solve needs H > 3/4: for H <= 3/4 the kernel is not square integrable on the diagonal", H=H
        )
    return H


def kk_convolution(t, x, H: float):
    """S(t, x) = int_0^x K(t-y) K(x-y) dy for 0 <= x <= t, in closed form.

    S carries the leading singular behaviour of q near the diagonal, so q is
    interpolated as S plus a piecewise-linear remainder.
    """
    p = 2.0 * H - 2.0
    c = H * (2.0 * H - 1.0)
    t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
    e = t - x
    out = np.empty(t.shape)
    diag = e <= 0
    out[diag] = x[diag] ** (2.0 * p + 1.0) / (2.0 * p + 1.0)
    off = ~diag
    eo, xo = e[off], x[off]
    out[off] = eo**p * xo ** (p + 1.0) / (p + 1.0) * hyp2f1(-p, p + 1.0, p + 2.0, -xo / eo)
    return c * c * out


@dataclass
class KernelGrid:
    """r(t_i, s_j + dt/2) for 0 <= j < i <= N, stored in ``r[i, j]`` (zero elsewhere)."""

    grid: TimeGrid
    H: float
    r: np.ndarray
    q: np.ndarray
    residual: float = 0.0
    residual_pair: tuple = (0, 0)
    pairs_checked: int = 0
    tol: float = 1e-3
    meta: dict = field(default_factory=dict)
    _outer: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def offsets(self) -> np.ndarray:
        return self.grid.nodes[:-1] + 0.5 * self.grid.dt

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["t", "s", "r"])
        t, s = self.grid.nodes, self.offsets
        for i in range(1, self.grid.steps + 1):
            for j in range(i):
                w.writerow([repr(float(t[i])), repr(float(s[j])), repr(float(self.r[i, j]))])
        return out.getvalue()

    def residual_summary(self) -> dict:
        i, j = self.residual_pair
        return {
            "H": self.H,
            "T": self.grid.horizon,
            "N": self.grid.steps,
            "max_residual": self.residual,
            "worst_pair": {"t": float(self.grid.nodes[i]), "s": float(self.offsets[j]) if self.grid.steps else 0.0},
            "pairs_checked": self.pairs_checked,
            "tol": self.tol,
            "passed": self.residual <= self.tol,
        }

    def residual_json(self) -> str:
        return json.dumps(self.residual_summary(), indent=2, sort_keys=True)


def _kk_table(N: int, p: float) -> np.ndarray:
    """G[j, L] = sum_{m<j} int_m^{m+1} v^p (v+L)^p dv for 0 <= j, L <= N."""
    g = np.empty((N, N + 1))
    L = np.arange(N + 1, dtype=float)
    xj, wj = roots_jacobi(_GAUSS, 0.0, p)  # weight (1+x)^p on [-1, 1]
    v0 = 0.5 * (xj + 1.0)
    w0 = wj * 0.5 ** (p + 1.0)
    g[0] = ((v0[:, None] + L[None, :]) ** p * w0[:, None]).sum(axis=0)
    g[0, 0] = 1.0 / (2.0 * p + 1.0)
    if N > 1:
        xl, wl = roots_legendre(_GAUSS)
        m = np.arange(1, N, dtype=float)
        v = m[:, None] + 0.5 * (xl[None, :] + 1.0)  # (N-1, G)
        vp = v**p
        for Lk in range(N + 1):
            g[1:, Lk] = (vp * (v + Lk) ** p) @ (0.5 * wl)
        g[1:, 0] = _cell_integral(m, 2.0 * p)
    G = np.zeros((N + 1, N + 1))
    np.cumsum(g, axis=0, out=G[1:])
    return G


def _solve_q(N: int, dt: float, H: float) -> np.ndarray:
    p = 2.0 * H - 2.0
    theta = -p
    c = H * (2.0 * H - 1.0)
    near, far = cell_weights(N + 1, theta)
    clag, _ = _lag_weights(N, theta)
    ck = c * dt ** (p + 1.0)
    kk = c * c * dt ** (2.0 * p + 1.0)
    G = _kk_table(N, p)
    Q = np.zeros((N + 1, N + 1))
    # M[j, k], k <= j: weights of the unknown row entries q(t_i, s_k) in equation (i, j).
    M = np.zeros((N + 1, N + 1))
    h6 = dt / 6.0
    for i in range(1, N + 1):
        if i > 1:
            js = np.arange(1, i)
            A = kk * G[js, i - js]
            # int_0^{s_j} K(t_i - x) q(s_j, x) dx, known rows j < i
            lag_w = clag[i - np.arange(1, i)]  # weight of node k = 1..i-1
            rows = Q[1:i, 1:i]
            B1 = ck * (np.tril(rows, -1) @ lag_w + near[i - js] * np.diag(rows))
            rhs = A - B1
            Mi = M[1:i, 1:i]
            Q[i, 1:i] = solve_triangular(np.eye(i - 1) + Mi, rhs, lower=True, check_finite=False)
        # diagonal: z = int_0^{t_i} (K(t_i - x) - q(t_i, x))^2 dx
        f = Q[i, :i]
        a0 = kk * i ** (2.0 * p + 1.0) / (2.0 * p + 1.0)
        b0 = ck * float(clag[i - np.arange(1, i)] @ f[1:]) if i > 1 else 0.0
        b1 = ck * near[0]
        g0 = dt / 3.0 * (float(np.sum(f[:-1] ** 2 + f[:-1] * f[1:] + f[1:] ** 2)) + f[-1] ** 2)
        g1 = dt / 3.0 * f[-1]
        g2 = dt / 3.0
        Bq = g1 - 2.0 * b1 - 1.0
        Cq = a0 - 2.0 * b0 + g0
        disc = Bq * Bq - 4.0 * g2 * Cq
        if disc < 0:
            raise ConvergenceError("diagonal equation has no real root; refine the grid", row=i)
        Q[i, i] = 2.0 * Cq / (-Bq + math.sqrt(disc))
        # row i of M from the now complete row q(t_i, .)
        gq = Q[i, : i + 1]
        k = np.arange(1, i + 1)
        w2 = ck * np.where(k == i, near[0], clag[np.maximum(i - k, 0)])
        w3 = np.empty(i)
        w3[:-1] = h6 * (gq[:-2] + 4.0 * gq[1:-1] + gq[2:])
        w3[-1] = h6 * (gq[-2] + 2.0 * gq[-1])
        M[i, 1 : i + 1] = w2 - w3
    return Q


def _vrow(V: np.ndarray, i, x, b, dt: float, e1: float):
    """Remainder v(t_i, x) on cell b, linear in the variable (t_i - x)^e1.

    The remainder behaves like const + C (t_i - x)^e1 next to the diagonal,
    so this interpolation is exact for that leading term.
    """
    ti = i * dt
    wb = (ti - b * dt) ** e1
    wb1 = np.maximum(ti - (b + 1) * dt, 0.0) ** e1
    span = wb - wb1
    lam = (wb - np.maximum(ti - x, 0.0) ** e1) / np.where(span > 0, span, 1.0)
    return V[i, b] + lam * (V[i, b + 1] - V[i, b])


def _tabulate(V: np.ndarray, N: int, dt: float, H: float):
    """r(t_i, s_j + dt/2) for all j < i."""
    c, p = H * (2.0 * H - 1.0), 2.0 * H - 2.0
    i_idx, j_idx = np.tril_indices(N + 1, -1)
    sig = (j_idx + 0.5) * dt
    ti = i_idx * dt
    q = kk_convolution(ti, sig, H) + _vrow(V, i_idx, sig, j_idx, dt, p + 1.0)
    r = np.zeros((N + 1, N + 1))
    r[i_idx, j_idx] = c * (ti - sig) ** p - q
    return r


def _residuals(V: np.ndarray, r: np.ndarray, rows: np.ndarray, N: int, dt: float, H: float, n_gauss: int):
    """Plug-back residuals of the kernel equation at (t_i, s_j + dt/2), j < i, for i in ``rows``.

    Independent of the marching weights: q is rebuilt as S + v with v
    interpolated between nodes, and int_0^{s_j+dt/2} r(t_i,x) r(s_j+dt/2,x) dx
    is re-evaluated by Gauss-Legendre rules on whole cells and a
    Gauss-Jacobi rule on the singular half cell.
    Returns an array (len(rows), N) with NaN where j >= i.
    """
    c, p = H * (2.0 * H - 1.0), 2.0 * H - 2.0
    e1 = p + 1.0
    xl, wl = roots_legendre(n_gauss)
    X = (np.arange(N)[:, None] * dt + 0.5 * dt * (xl[None, :] + 1.0)).ravel()
    B = np.repeat(np.arange(N), n_gauss)
    WX = np.tile(0.5 * dt * wl, N)
    ri = rows[:, None]
    inside = B[None, :] < ri
    Xr = np.where(inside, X[None, :], 0.0)
    Br = np.where(inside, B[None, :], 0)
    Rrow = np.where(
        inside,
        c * np.maximum(ri * dt - Xr, dt * 1e-3) ** p - kk_convolution(ri * dt, Xr, H) - _vrow(V, ri, Xr, Br, dt, e1),
        0.0,
    )
    full = np.zeros((rows.size, N))
    for j0 in range(0, N, 128):
        js = np.arange(j0, min(j0 + 128, N))[:, None]
        below = B[None, :] < js
        Xj = np.where(below, X[None, :], 0.0)
        Bj = np.where(below, B[None, :], 0)
        sig = (js + 0.5) * dt
        vmid = 0.5 * (_vrow(V, js, Xj, Bj, dt, e1) + _vrow(V, js + 1, Xj, Bj, dt, e1))
        Rmid = np.where(below, c * (sig - Xj) ** p - kk_convolution(sig, Xj, H) - vmid, 0.0)
        full[:, js[:, 0]] = Rrow @ (Rmid * WX[None, :]).T

    xj, wj = roots_jacobi(n_gauss, 0.0, p)
    h = 0.5 * dt
    u = 0.5 * h * (xj + 1.0)  # distance to the singular end s_j + dt/2
    wu = wj * (0.5 * h) ** (p + 1.0)  # includes the weight u^p
    j = np.arange(N)
    sig = (j + 0.5) * dt
    xh = sig[:, None] - u[None, :]  # (N, G)
    d = 0.5 * (V[j, j] + V[j + 1, j + 1])
    a = 0.5 * (V[j, j] + V[j + 1, j])
    vh = d[:, None] + (a - d)[:, None] * (u[None, :] / h) ** e1
    qs = kk_convolution(sig[:, None], xh, H) + vh  # q(s_j + dt/2, x) on the half cell
    half = np.full((rows.size, N), np.nan)
    for n, i in enumerate(rows):
        jj = np.arange(i)
        x = xh[:i]
        rt = c * (i * dt - x) ** p - kk_convolution(i * dt, x, H) - _vrow(V, i, x, jj[:, None], dt, e1)
        half[n, :i] = (rt * (c - u[None, :] ** (-p) * qs[:i])) @ wu
    K = c * np.maximum(rows[:, None] * dt - sig[None, :], dt * 1e-3) ** p
    res = r[rows, :N] + full + half - K
    return res, K


def solve_kernel(
    grid: TimeGrid,
    H: float,
    tol: float = 1e-3,
    *,
    check_rows: int = 48,
    seed: int = 0,
) -> KernelGrid:
    """March the kernel equation on ``grid`` and certify the plug-back residual.

    The residual at (t, s) is measured relative to max(1, K(t-s)), the size
    of the right side, because the kernel itself is unbounded at the
    diagonal. Every pair is checked for N <= 256; above that a random set of
    ``check_rows`` rows, always including the first and last, is checked in
    full.
    """
    H = _check_kernel_hurst(H)
    N, dt = grid.steps, grid.dt
    if N > KERNEL_CAP:
        raise ResourceLimitError(f"kernel solve limited to N <= {KERNEL_CAP}", steps=N)
    meta = {"residual_measure": "|residual| / max(1, K(t-s))"}
    if H == 0.5:
        z = np.zeros((N + 1, N + 1))
        return KernelGrid(grid, H, z, z.copy(), 0.0, (1, 0), N * (N + 1) // 2, tol, dict(meta, note="zero kernel"))
    Q = _solve_q(N, dt, H)
    if not np.all(np.isfinite(Q)):
        raise ConvergenceError("kernel solve produced non-finite values")
    i_idx, j_idx = np.tril_indices(N + 1)
    V = np.zeros_like(Q)
    V[i_idx, j_idx] = Q[i_idx, j_idx] - kk_convolution(i_idx * dt, j_idx * dt, H)
    r = _tabulate(V, N, dt, H)

    if N <= RESIDUAL_PAIRS_FULL:
        rows = np.arange(1, N + 1)
        n_gauss = _GAUSS
    else:
        rng = np.random.default_rng(seed)
        pick = rng.choice(np.arange(2, N), size=min(check_rows, N - 2), replace=False)
        rows = np.unique(np.concatenate([[1, N], pick]))
        n_gauss = 8
    res, K = _residuals(V, r, rows, N, dt, H, n_gauss)
    scaled = np.abs(res) / np.maximum(1.0, K)
    flat = np.nan_to_num(scaled, nan=-1.0)
    k = int(np.argmax(flat))
    worst = float(flat.flat[k])
    worst_pair = (int(rows[k // N]), int(k % N))
    checked = int(np.sum(np.isfinite(scaled)))
    kg = KernelGrid(grid, H, r, Q, worst, worst_pair, checked, tol, meta)
    if worst > tol:
        raise ConvergenceError(
            "kernel residual exceeds tolerance",
            residual=worst,
            t=float(grid.nodes[worst_pair[0]]),
            s=float(kg.offsets[worst_pair[1]]),
            tol=tol,
        )
    return kg


# --- downstream simulations -------------------------------------------------


def _check_kernel_grid(kernel: KernelGrid, grid: TimeGrid):
    if kernel.grid != grid:
        raise GridError("kernel and noise live on different grids", kernel_steps=kernel.grid.steps, steps=grid.steps)


def kernel_functional(kernel: KernelGrid, dWt: np.ndarray) -> np.ndarray:
    """I(t_i) = sum_{k<i} r(t_i, s_k + dt/2) dW~_k for all nodes; input (P, N), output (P, N+1)."""
    return np.atleast_2d(dWt) @ kernel.r[:, :-1].T


def outer_weights(kernel: KernelGrid) -> np.ndarray:
    """Weights A[n, k] with int_0^{t_n} I(s) ds = sum_{k<n} A[n, k] dW~_k, shape (N+1, N).

    Swapping the order of integration gives A[n, k] = int_{s_k}^{t_n} r(s, s_k) ds
    with s_k the cell midpoint. The singular part K(s - s_k) is integrated
    exactly; the bounded part q = K - r by the trapezoid rule over the nodes
    t_{k+1}..t_n, plus a half cell from s_k to t_{k+1} with q held at its
    t_{k+1} value. A plain trapezoid rule on I(s) misses most of the mass of
    r near the diagonal and biases the variance of the rebuilt driver low
    by O(dt^(2H-1)).
    """
    if kernel._outer is not None:
        return kernel._outer
    N, dt, H = kernel.grid.steps, kernel.grid.dt, kernel.H
    A = np.zeros((N + 1, N))
    if H != 0.5 and N:
        p = 2.0 * H - 2.0
        c = H * (2.0 * H - 1.0)
        i_idx, k_idx = np.tril_indices(N + 1, -1, N)
        lag = (i_idx - k_idx - 0.5) * dt
        qt = np.zeros((N + 1, N))
        qt[i_idx, k_idx] = c * lag**p - kernel.r[i_idx, k_idx]
        trap = np.zeros((N + 1, N))
        trap[1:] = 0.5 * dt * (qt[1:] + qt[:-1])
        trap[np.arange(1, N + 1), np.arange(N)] = 0.5 * dt * qt[np.arange(1, N + 1), np.arange(N)]
        trap = np.tril(trap, -1)
        Qint = np.cumsum(trap, axis=0)
        A[i_idx, k_idx] = c * lag ** (p + 1.0) / (p + 1.0) - Qint[i_idx, k_idx]
    kernel._outer = A
    return A


def decomposition_batch(kernel: KernelGrid, dWt: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """W~(t) + int_0^t I(s) ds at the nodes, shape (P, N+1)."""
    _check_kernel_grid(kernel, grid)
    dWt = np.atleast_2d(np.asarray(dWt, dtype=float))
    P = dWt.shape[0]
    out = np.zeros((P, grid.steps + 1))
    np.cumsum(dWt, axis=1, out=out[:, 1:])
    return out + dWt @ outer_weights(kernel).T


def simulate_decomposition(kernel: KernelGrid, Wtilde: SamplePath, grid: TimeGrid) -> SamplePath:
    """Mixed driver W + B^H rebuilt from one Wiener path W~ through the kernel."""
    if Wtilde.grid != grid:
        raise GridError("W~ is not sampled on the grid")
    return SamplePath(grid, decomposition_batch(kernel, Wtilde.increments[:, 0], grid)[0])


def transformed_increments(kernel: KernelGrid, dWt: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Effective driver increments dW~_i + int_{t_i}^{t_{i+1}} I(s) ds of the transformed CIR equation."""
    _check_kernel_grid(kernel, grid)
    dWt = np.atleast_2d(np.asarray(dWt, dtype=float))
    A = outer_weights(kernel)
    return dWt + dWt @ (A[1:] - A[:-1]).T


def solve_cir_transformed(params: CirParams, kernel: KernelGrid, Wtilde: SamplePath, grid: TimeGrid) -> SolveResult:
    """Euler scheme for dX = (aX + sigma X^lam I(t)) dt + sigma X^lam dW~ with I(t) = int_0^t r(t,u) dW~(u).

    The path-dependent drift term only involves W~. Its step average
    int_{t_i}^{t_{i+1}} I(s) ds / dt is computed from the kernel rows and
    folded into the driver increment of step i.
    """
    if not params.mixed:
        raise ConfigError("the transformed equation applies to the mixed model")
    if params.H != kernel.H:
        raise ConfigError("kernel Hurst parameter differs from the model's", H=params.H, kernel_H=kernel.H)
    if Wtilde.grid != grid:
        raise GridError("W~ is not sampled on the grid")
    vals, nu0 = cir_march(params, transformed_increments(kernel, Wtilde.increments[:, 0], grid), grid)
    return _result(grid, vals[0], nu0[0])


def decomposition_paths(
    kernel: KernelGrid,
    grid: TimeGrid,
    seed: SeedSpec | int,
    n_paths: int,
    *,
    threads: int | None = None,
    batch_size: int = DEFAULT_BATCH,
) -> np.ndarray:
    """Rebuilt mixed-driver paths (n_paths, N+1) from W~ drawn on stream 0."""
    seed = seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))

    def run(idx: range):
        dWt = wiener_increments(grid, 1, seed, idx)[..., 0]
        return decomposition_batch(kernel, dWt, grid)

    return concat(map_batches(run, n_paths, threads=threads, batch_size=batch_size))
