"""Option-price bounds and Monte Carlo experiments for the CIR family.

The bound uses Y = X^(1-lam) <= Z, where Z is the Vasicek process with
a' = a(1-lam), sigma' = sigma(1-lam), Z0 = X0^(1-lam). Z(T) is Gaussian, so
for a nondecreasing payoff f the discounted E f(Z(T)_+^(1/(1-lam))) is a
one-dimensional integral.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.special import roots_jacobi, roots_legendre

from .errors import ConfigError, ConvergenceError
from .noise import SeedSpec, TimeGrid
from .parallel import DEFAULT_BATCH, concat, map_batches, pairwise_mean_and_stderr
from .reports import ViolationStats
from .solver import CirParams, cir_march, cir_noise, vasicek_march

TABLE_SIGMAS = (0.1, 0.5, 1.0)
TABLE_STRIKES = (0.5, 1.0, 2.0)
TABLE_STEPS = 4096
TABLE_PATHS = 20000
TABLE_HORIZON = 10.0
MAX_PANELS = 4096
_QUAD_NODES = 24


# --- variance of the bound process ------------------------------------------


def _panel_sum(g: Callable, p: float, T: float, m: int, xj, wj, xl, wl) -> float:
    """Composite rule for int_0^T u^p g(u) du on m equal panels.

    The first panel carries the weight u^p exactly (Gauss-Jacobi); on the
    others u^p is smooth and Gauss-Legendre is applied to the product.
    """
    h = T / m
    u0 = 0.5 * h * (xj + 1.0)
    total = (0.5 * h) ** (p + 1.0) * float(wj @ g(u0))
    if m > 1:
        left = h * np.arange(1, m)[:, None]
        u = left + 0.5 * h * (xl[None, :] + 1.0)
        total += 0.5 * h * float(np.sum(wl * u**p * g(u)))
    return total


def double_integral(aprime: float, H: float, T: float, tol: float = 1e-8) -> float:
    """int_0^T int_0^T exp(a'(t+s)) |t-s|^(2H-2) dt ds.

    By symmetry and u = t - s the integral is 2 int_0^T u^(2H-2) g(u) du with
    g(u) = (exp(a'(2T-u)) - exp(a'u)) / (2a'), or T - u when a' = 0. g is
    entire, so the composite rule converges fast; panels are doubled until
    two successive values agree to ``tol`` relative.
    """
    if not T > 0:
        if T == 0:
            return 0.0
        raise ConfigError("T must be positive", T=T)
    if not 0.5 < H < 1:
        raise ConfigError("double_integral needs H in (1/2, 1)", H=H)
    p = 2.0 * H - 2.0
    if aprime == 0.0:
        return 2.0 * T ** (2.0 * H) / (2.0 * H * (2.0 * H - 1.0))

    def g(u):
        return (np.exp(aprime * (2.0 * T - u)) - np.exp(aprime * u)) / (2.0 * aprime)

    xj, wj = roots_jacobi(_QUAD_NODES, 0.0, p)
    xl, wl = roots_legendre(_QUAD_NODES)
    m = max(1, int(math.ceil(abs(aprime) * T / 4.0)))
    prev = _panel_sum(g, p, T, m, xj, wj, xl, wl)
    while m < MAX_PANELS:
        m *= 2
        cur = _panel_sum(g, p, T, m, xj, wj, xl, wl)
        if abs(cur - prev) <= tol * abs(cur):
            return 2.0 * cur
        prev = cur
    raise ConvergenceError("double integral did not reach tolerance", tol=tol, panels=m)


@dataclass(frozen=True)
class BoundMoments:
    """Gaussian law of the Vasicek bound process Z(T)."""

    mean: float
    variance: float
    wiener_part: float = 0.0
    fbm_part: float = 0.0

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)


def vasicek_moments(params: CirParams, T: float) -> BoundMoments:
    """Mean and variance of Z(T); the Wiener term is present only in the mixed model."""
    aprime, sprime, Z0 = params.vasicek
    mean = Z0 * math.exp(aprime * T)
    if params.sigma == 0.0 or T == 0.0:
        return BoundMoments(mean, 0.0)
    w = 0.0
    if params.mixed:
        w = math.expm1(2.0 * aprime * T) / (2.0 * aprime) if aprime != 0.0 else T
    H = params.H
    f = 0.0 if H == 0.5 else H * (2.0 * H - 1.0) * double_integral(aprime, H, T)
    return BoundMoments(mean, sprime**2 * (w + f), sprime**2 * w, sprime**2 * f)


# --- the price bound ----------------------------------------------------------


def call_payoff(K: float) -> Callable:
    def f(x):
        return np.maximum(np.asarray(x, dtype=float) - K, 0.0)

    return f


def upper_bound_price(
    params: CirParams,
    K: float,
    T: float,
    *,
    payoff: Callable | None = None,
    monotone: bool = False,
    tol: float = 1e-10,
) -> float:
    """e^{-aT} E f(Z(T)_+^(1/(1-lam))) with f the call payoff (x - K)_+ by default.

    The bound is only valid for nondecreasing payoffs. A custom ``payoff``
    must be declared ``monotone=True`` by the caller; this is not verified.
    """
    if payoff is None:
        if K < 0:
            raise ConfigError("strike must be nonnegative", K=K)
        payoff = call_payoff(K)
    elif not monotone:
        raise ConfigError("custom payoff must be attested nondecreasing", field="monotone")
    k = 1.0 - params.lam
    disc = math.exp(-params.a * T)
    mom = vasicek_moments(params, T)

    def value(z):
        return payoff(np.maximum(z, 0.0) ** (1.0 / k))

    if mom.variance == 0.0:
        return float(disc * value(mom.mean))
    mu, sd = mom.mean, mom.sd
    lo, hi = mu - 10.0 * sd, mu + 10.0 * sd
    cand = (0.0, K**k) if K is not None and K >= 0 else (0.0,)
    kinks = sorted({z for z in cand if lo < z < hi})
    norm = 1.0 / (sd * math.sqrt(2.0 * math.pi))

    def integrand(z):
        return float(value(z)) * norm * math.exp(-0.5 * ((z - mu) / sd) ** 2)

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(integrand, lo, hi, points=kinks or None, epsabs=0.0, epsrel=tol, limit=500)
        except integrate.IntegrationWarning as exc:
            raise ConvergenceError("bound quadrature did not converge", detail=str(exc)) from None
    return float(disc * val)


# --- Monte Carlo ----------------------------------------------------------------


def _seed(seed) -> SeedSpec:
    return seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))


def terminal_values(
    params: CirParams,
    grid: TimeGrid,
    seed,
    n_paths: int,
    *,
    threads: int | None = None,
    batch_size: int = DEFAULT_BATCH,
) -> tuple[np.ndarray, np.ndarray]:
    """X(T) and hitting times for ``n_paths`` Euler paths, in path order."""
    seed = _seed(seed)

    def run(idx: range):
        dN = cir_noise(params, grid, seed, idx)
        return cir_march(params, dN, grid, store=False)

    return concat(map_batches(run, n_paths, threads=threads, batch_size=batch_size))


@dataclass(frozen=True)
class MCEstimate:
    estimate: float
    stderr: float
    n_paths: int
    n_steps: int
    seed: int


def mc_prices(
    params: CirParams,
    strikes: Sequence[float],
    T: float,
    n_paths: int,
    steps: int,
    seed,
    *,
    threads: int | None = None,
    batch_size: int = DEFAULT_BATCH,
) -> list[MCEstimate]:
    """Discounted call prices for several strikes on one common set of paths."""
    grid = TimeGrid(T, steps)
    seed = _seed(seed)
    xT, _ = terminal_values(params, grid, seed, n_paths, threads=threads, batch_size=batch_size)
    disc = math.exp(-params.a * T)
    out = []
    for K in strikes:
        est, se = pairwise_mean_and_stderr(disc * np.maximum(xT - K, 0.0))
        out.append(MCEstimate(est, se, n_paths, steps, seed.seed))
    return out


def mc_price(
    params: CirParams,
    K: float,
    T: float,
    n_paths: int = TABLE_PATHS,
    steps: int = TABLE_STEPS,
    seed=0,
    *,
    threads: int | None = None,
    batch_size: int = DEFAULT_BATCH,
) -> MCEstimate:
    """Mean of e^{-aT}(X(T) - K)_+ over Euler paths; stderr = sample sd / sqrt(n)."""
    return mc_prices(params, [K], T, n_paths, steps, seed, threads=threads, batch_size=batch_size)[0]


def mc_bound_price(
    params: CirParams,
    K: float,
    T: float,
    n_paths: int,
    steps: int,
    seed,
    *,
    threads: int | None = None,
    batch_size: int = DEFAULT_BATCH,
) -> MCEstimate:
    """Monte Carlo version of the bound from simulated Vasicek paths, for cross-checking the quadrature."""
    grid = TimeGrid(T, steps)
    seed = _seed(seed)
    aprime, sprime, Z0 = params.vasicek

    def run(idx: range):
        return vasicek_march(aprime, sprime, Z0, cir_noise(params, grid, seed, idx), grid)[:, -1]

    zT = concat(map_batches(run, n_paths, threads=threads, batch_size=batch_size))
    pay = math.exp(-params.a * T) * np.maximum(np.maximum(zT, 0.0) ** (1.0 / (1.0 - params.lam)) - K, 0.0)
    est, se = pairwise_mean_and_stderr(pay)
    return MCEstimate(est, se, n_paths, steps, seed.seed)


def bound_domination(
    params: CirParams,
    grid: TimeGrid,
    seed,
    n_paths: int,
    *,
    tol: float = 1e-9,
    threads: int | None = None,
    batch_size: int = DEFAULT_BATCH,
) -> ViolationStats:
    """Count nodes before absorption where Y = X^(1-lam) exceeds the Vasicek path Z on shared noise."""
    seed = _seed(seed)
    aprime, sprime, Z0 = params.vasicek
    k = 1.0 - params.lam

    def run(idx: range):
        dN = cir_noise(params, grid, seed, idx)
        X, nu0 = cir_march(params, dN, grid)
        Z = vasicek_march(aprime, sprime, Z0, dN, grid)
        before = np.isnan(nu0)[:, None] | (grid.nodes[None, :] < nu0[:, None])
        excess = np.where(before, X**k - Z, -np.inf)
        return np.sum(excess > tol, axis=1), np.max(excess, axis=1)

    counts, per_path = concat(map_batches(run, n_paths, threads=threads, batch_size=batch_size))
    return ViolationStats(
        n_paths=n_paths,
        n_nodes=grid.steps + 1,
        n_violations=int(np.sum(counts)),
        max_violation=float(max(0.0, np.max(per_path))),
        path_flags=counts > 0,
        extra={"per_path_max": np.maximum(per_path, 0.0), "tol": tol},
    )


# --- table ------------------------------------------------------------------------


@dataclass(frozen=True)
class PriceCell:
    sigma: float
    K: float
    mc_price: float
    mc_stderr: float
    upper_bound: float
    n_paths: int
    n_steps: int
    seed: int
    H: float

    @property
    def dominated(self) -> bool:
        """Soft check upper_bound >= mc_price - 3 stderr (reported, never enforced)."""
        return self.upper_bound >= self.mc_price - 3.0 * self.mc_stderr


PRICE_COLUMNS = ("sigma", "K", "mc_price", "mc_stderr", "upper_bound", "n_paths", "n_steps", "seed", "H")


@dataclass
class PriceReport:
    cells: list[PriceCell]
    config: dict = field(default_factory=dict)

    def cell(self, sigma: float, K: float) -> PriceCell:
        for c in self.cells:
            if c.sigma == sigma and c.K == K:
                return c
        raise KeyError((sigma, K))

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(PRICE_COLUMNS)
        for c in self.cells:
            w.writerow([_fmt(getattr(c, k)) for k in PRICE_COLUMNS])
        return out.getvalue()

    def metadata(self) -> dict:
        return {
            "config": self.config,
            "all_dominated": all(c.dominated for c in self.cells),
            "undominated_cells": [(c.sigma, c.K) for c in self.cells if not c.dominated],
        }

    def metadata_json(self) -> str:
        return json.dumps(self.metadata(), indent=2, sort_keys=True)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def price_table(
    sigmas: Sequence[float] = TABLE_SIGMAS,
    strikes: Sequence[float] = TABLE_STRIKES,
    *,
    a: float = 0.1,
    X0: float = 1.0,
    lam: float = 0.5,
    H: float = 0.8,
    T: float = TABLE_HORIZON,
    steps: int = TABLE_STEPS,
    n_paths: int = TABLE_PATHS,
    seed: int = 0,
    threads: int | None = None,
    batch_size: int = DEFAULT_BATCH,
) -> PriceReport:
    """Monte Carlo prices and quadrature bounds on a (sigma, K) grid.

    Each sigma gets the same seed, so its strikes share paths and the noise
    is common across sigma as well.
    """
    cells = []
    for sigma in sigmas:
        params = CirParams(a=a, sigma=sigma, lam=lam, X0=X0, H=H, mixed=True)
        ests = mc_prices(params, strikes, T, n_paths, steps, seed, threads=threads, batch_size=batch_size)
        for K, e in zip(strikes, ests):
            ub = upper_bound_price(params, K, T)
            cells.append(PriceCell(float(sigma), float(K), e.estimate, e.stderr, ub, n_paths, steps, int(seed), float(H)))
    config = dict(
        sigmas=list(sigmas), strikes=list(strikes), a=a, X0=X0, lam=lam, H=H, T=T,
        steps=steps, n_paths=n_paths, seed=seed, batch_size=batch_size,
    )
    return PriceReport(cells, config)


def reproduce_table(seed: int = 0, **overrides) -> PriceReport:
    """The 3x3 table: a=0.1, X0=1, lam=1/2, T=10, N=4096, 20000 paths, H=0.8 unless overridden."""
    return price_table(seed=seed, **overrides)


# --- hitting times -------------------------------------------------------------------


@dataclass
class HittingStats:
    """Absorption times of the pure-fBm CIR model; NaN marks a path censored at the horizon."""

    nu0: np.ndarray
    horizon: float
    edges: np.ndarray
    counts: np.ndarray
    checkpoints: tuple
    survivors: dict
    config: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return int(self.nu0.size)

    @property
    def censored(self) -> int:
        return int(np.sum(np.isnan(self.nu0)))

    def survivors_at(self, t: float) -> int:
        return int(np.sum(np.isnan(self.nu0) | (self.nu0 > t)))

    def histogram_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", "count"])
        for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts):
            w.writerow([repr(float(lo)), repr(float(hi)), int(c)])
        return out.getvalue()

    def nu0_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["path", "nu0"])
        for p, v in enumerate(self.nu0):
            w.writerow([p, "" if np.isnan(v) else repr(float(v))])
        return out.getvalue()

    def summary(self) -> dict:
        return {
            "n_paths": self.n_paths,
            "horizon": self.horizon,
            "censored": self.censored,
            "survivors": {repr(float(k)): v for k, v in self.survivors.items()},
            "config": self.config,
        }

    def to_svg(self, path) -> None:
        """Write the histogram as SVG (needs matplotlib)."""
        try:
            import matplotlib

            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError:
            raise ConfigError("SVG output needs matplotlib (install the 'plot' extra)") from None
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.stairs(self.counts, self.edges, fill=True)
        ax.set_xlabel("absorption time")
        ax.set_ylabel("paths")
        ax.set_title(f"{self.n_paths - self.censored} absorbed, {self.censored} censored at t={self.horizon:g}")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def hitting_experiment(
    a: float = 0.1,
    H: float = 0.8,
    X0: float = 1.0,
    horizon: float = 500.0,
    n_paths: int = 1000,
    steps: int = 4096,
    seed: int = 0,
    *,
    sigma: float = 1.0,
    lam: float = 0.5,
    bins: int = 50,
    checkpoints: Sequence[float] | None = None,
    threads: int | None = None,
    batch_size: int = DEFAULT_BATCH,
) -> HittingStats:
    """Absorption times of dX = aX dt + sigma X^lam dB^H over [0, horizon]."""
    params = CirParams(a=a, sigma=sigma, lam=lam, X0=X0, H=H, mixed=False)
    grid = TimeGrid(horizon, steps)
    _, nu0 = terminal_values(params, grid, seed, n_paths, threads=threads, batch_size=batch_size)
    if checkpoints is None:
        checkpoints = (horizon / 10.0, horizon)
    checkpoints = tuple(float(c) for c in checkpoints)
    edges = np.linspace(0.0, horizon, int(bins) + 1)
    counts, _ = np.histogram(nu0[np.isfinite(nu0)], bins=edges)
    stats = HittingStats(nu0, float(horizon), edges, counts, checkpoints, {})
    stats.survivors = {c: stats.survivors_at(c) for c in checkpoints}
    stats.config = dict(
        a=a, H=H, X0=X0, horizon=horizon, n_paths=n_paths, steps=steps, seed=seed,
        sigma=sigma, lam=lam, bins=bins, checkpoints=list(checkpoints), batch_size=batch_size,
    )
    return stats
