"""Euler schemes for mixed equations, CIR-type models with absorption, and
the exponential Vasicek scheme used as the comparison process.

Batch routines take increments shaped (P, N, k) or (P, N) and march all
paths at once; the single-path functions are thin wrappers around them.
"""

from __future__ import annotations

import importlib
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, GridError, HurstRangeError, NonFiniteStateError, UnknownModelError
from .noise import (
    FBM_STREAM,
    WIENER_STREAM,
    SamplePath,
    SeedSpec,
    TimeGrid,
    check_hurst,
    fbm_increments,
    wiener_increments,
)
from .reports import ConditionReport, ConditionResult

FD_STEP = 1e-6
DEFAULT_THRESHOLD = 100.0


@dataclass(frozen=True)
class MixedModel:
    """Coefficients of dX = a dt + sum_k b_k dW_k + sum_j c_j dZ_j.

    Evaluators take ``(t, x)`` with ``x`` shaped (..., d) and return
    ``a``: (..., d), ``b``: (..., m, d), ``c``: (..., r, d). ``dc`` (optional)
    returns the Jacobians (..., r, d, d) with ``[j, l, i] = d c_{j,l} / d x_i``.
    """

    d: int
    m: int
    r: int
    drift: Callable
    diff_w: Callable | None = None
    diff_z: Callable | None = None
    dc: Callable | None = None
    absorbing: bool = False
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.d < 1 or self.m < 0 or self.r < 0:
            raise ConfigError("model dimensions must satisfy d >= 1, m >= 0, r >= 0", d=self.d, m=self.m, r=self.r)
        if self.absorbing and self.d != 1:
            raise ConfigError("absorption at zero is only defined for scalar models", d=self.d)

    def a(self, t, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.drift(t, x), dtype=float), x.shape)

    def b(self, t, x):
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1] + (self.m, self.d)
        if self.diff_w is None or self.m == 0:
            return np.zeros(shape)
        return np.broadcast_to(np.asarray(self.diff_w(t, x), dtype=float), shape)

    def c(self, t, x):
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1] + (self.r, self.d)
        if self.diff_z is None or self.r == 0:
            return np.zeros(shape)
        return np.broadcast_to(np.asarray(self.diff_z(t, x), dtype=float), shape)

    def dc_dx(self, t, x, h: float = FD_STEP):
        """Spatial Jacobians of the c_j, by central differences when no evaluator is given."""
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1] + (self.r, self.d, self.d)
        if self.dc is not None:
            return np.broadcast_to(np.asarray(self.dc(t, x), dtype=float), shape)
        out = np.empty(shape)
        for i in range(self.d):
            e = np.zeros(self.d)
            e[i] = h
            out[..., i] = (self.c(t, x + e) - self.c(t, x - e)) / (2.0 * h)
        return out


# --- built-in model families ---------------------------------------------


def linear_model(a: float = 0.1, b: float = 0.5, c: float = 0.5) -> MixedModel:
    """Scalar linear equation dX = aX dt + bX dW + cX dZ."""
    return MixedModel(
        1,
        1,
        1,
        drift=lambda t, x: a * x,
        diff_w=lambda t, x: b * x[..., None, :],
        diff_z=lambda t, x: c * x[..., None, :],
        dc=lambda t, x: np.full(x.shape[:-1] + (1, 1, 1), c),
        name="linear",
        params={"a": a, "b": b, "c": c},
    )


def _power(x, lam):
    return np.maximum(x, 0.0) ** lam


def cir_model(a: float, sigma: float, lam: float = 0.5, *, mixed: bool = True) -> MixedModel:
    """CIR-type equation dX = aX dt + sigma X^lam (dW + dB^H), or fBm only."""
    diff = lambda t, x: sigma * _power(x, lam)[..., None, :]  # noqa: E731
    return MixedModel(
        1,
        1 if mixed else 0,
        1,
        drift=lambda t, x: a * x,
        diff_w=diff if mixed else None,
        diff_z=diff,
        absorbing=True,
        name="cir-mixed" if mixed else "cir-pure",
        params={"a": a, "sigma": sigma, "lam": lam},
    )


def vasicek_model(aprime: float, sigmaprime: float, *, mixed: bool = True) -> MixedModel:
    const = lambda t, x: np.full(x.shape[:-1] + (1, 1), sigmaprime)  # noqa: E731
    return MixedModel(
        1,
        1 if mixed else 0,
        1,
        drift=lambda t, x: aprime * x,
        diff_w=const if mixed else None,
        diff_z=const,
        dc=lambda t, x: np.zeros(x.shape[:-1] + (1, 1, 1)),
        name="vasicek",
        params={"aprime": aprime, "sigmaprime": sigmaprime},
    )


MODEL_NAMES = ("linear", "cir-pure", "cir-mixed", "vasicek", "custom")


def load_custom_model(target: str, **params) -> MixedModel:
    """Import ``package.module:factory`` and call it with ``params``."""
    if ":" not in target:
        raise ConfigError("custom model target must look like 'module:factory'", target=target)
    mod_name, attr = target.split(":", 1)
    try:
        factory = getattr(importlib.import_module(mod_name), attr)
    except (ImportError, AttributeError) as exc:
        raise UnknownModelError(f"cannot load custom model: {exc}", target=target) from exc
    model = factory(**params)
    if not isinstance(model, MixedModel):
        raise ConfigError("custom factory must return a MixedModel", target=target)
    return model


def build_model(name: str, **params) -> MixedModel:
    if name == "linear":
        return linear_model(**params)
    if name in ("cir-pure", "cir-mixed"):
        return cir_model(params.get("a", 0.1), params.get("sigma", 1.0), params.get("lam", 0.5), mixed=name == "cir-mixed")
    if name == "vasicek":
        return vasicek_model(params["aprime"], params["sigmaprime"], mixed=params.get("mixed", True))
    if name == "custom":
        target = params.pop("target", None)
        if target is None:
            raise ConfigError("custom model needs a 'target' parameter", field="target")
        return load_custom_model(target, **params)
    raise UnknownModelError(f"unknown model '{name}'", model=name, known=list(MODEL_NAMES))


# --- general Euler scheme -------------------------------------------------


def _raise_non_finite(x_new: np.ndarray, node: int, offset: int = 0):
    bad = ~np.all(np.isfinite(x_new.reshape(x_new.shape[0], -1)), axis=1)
    path = int(np.argmax(bad)) + offset
    raise NonFiniteStateError("state became non-finite", node=node, path=path)


def euler_mixed_batch(
    model: MixedModel,
    X0,
    dW: np.ndarray | None,
    dZ: np.ndarray | None,
    grid: TimeGrid,
) -> tuple[np.ndarray, np.ndarray]:
    """Euler scheme for P paths at once.

    Returns node values (P, N+1, d) and hitting times (P,) (NaN when the
    model is not absorbing or the path never reaches 0).
    """
    d, N, dt = model.d, grid.steps, grid.dt
    X0 = np.broadcast_to(np.asarray(X0, dtype=float), (d,))
    if not np.all(np.isfinite(X0)):
        raise ConfigError("initial state must be finite", X0=X0.tolist())
    P = _batch_size(dW, dZ, model, N)
    dW = np.zeros((P, N, 0)) if dW is None else np.asarray(dW, dtype=float).reshape(P, N, -1)
    dZ = np.zeros((P, N, 0)) if dZ is None else np.asarray(dZ, dtype=float).reshape(P, N, -1)
    if dW.shape[2] != model.m or dZ.shape[2] != model.r:
        raise ConfigError("noise dimensions do not match the model", m=model.m, r=model.r)
    out = np.empty((P, N + 1, d))
    out[:, 0] = X0
    nu0 = np.full(P, np.nan)
    alive = np.ones(P, dtype=bool)
    t = grid.nodes
    x = out[:, 0].copy()
    for i in range(N):
        step = model.a(t[i], x) * dt
        if model.m:
            step = step + np.einsum("pk,pkd->pd", dW[:, i], model.b(t[i], x))
        if model.r:
            step = step + np.einsum("pj,pjd->pd", dZ[:, i], model.c(t[i], x))
        new = x + step
        if not np.all(np.isfinite(new)):
            _raise_non_finite(new, i + 1)
        if model.absorbing:
            hit = alive & (new[:, 0] <= 0.0)
            if hit.any():
                nu0[hit] = t[i] + dt * x[hit, 0] / (x[hit, 0] - new[hit, 0])
                alive &= ~hit
            new[~alive] = 0.0
        x = new
        out[:, i + 1] = x
    return out, nu0


def _batch_size(dW, dZ, model, N):
    for arr in (dW, dZ):
        if arr is not None:
            arr = np.asarray(arr)
            if arr.shape[1] != N:
                raise GridError("noise increments do not match the grid", steps=N, got=arr.shape[1])
            return arr.shape[0]
    if model.m or model.r:
        raise ConfigError("model needs noise increments")
    return 1


def _path_increments(path: SamplePath | None, grid: TimeGrid, name: str) -> np.ndarray | None:
    if path is None:
        return None
    if path.grid != grid:
        raise GridError(f"{name} is not sampled on the solver grid")
    return path.increments[None]


def euler_mixed(model: MixedModel, X0, W: SamplePath | None, Z: SamplePath | None, grid: TimeGrid) -> SamplePath:
    vals, _ = euler_mixed_batch(model, X0, _path_increments(W, grid, "W"), _path_increments(Z, grid, "Z"), grid)
    return SamplePath(grid, vals[0])


# --- hypothesis checks ----------------------------------------------------


@dataclass(frozen=True)
class Box:
    """Rectangle [t0, t1] x prod [lo_i, hi_i] on which hypotheses are probed."""

    t0: float
    t1: float
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) != len(hi) or not all(l < h for l, h in zip(lo, hi)) or not self.t0 < self.t1:
            raise ConfigError("box needs t0 < t1 and lo < hi in every coordinate")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def width(self) -> np.ndarray:
        return np.array(self.hi) - np.array(self.lo)


def _face_biased(rng, n, lo, width):
    """Points that crowd every face of the box at log-uniform distances 1e-12..1."""
    d = lo.size
    u = rng.random((n, d))
    x = lo + u * width
    crowd = rng.random((n, d)) < 0.5
    off = 10.0 ** rng.uniform(-12, 0, (n, d)) * width
    upper = rng.random((n, d)) < 0.5
    x = np.where(crowd & ~upper, lo + off, x)
    x = np.where(crowd & upper, lo + width - off, x)
    return x


def _probe_points(box: Box):
    """Deterministic probes: each face approached along a log scale, plus the corners."""
    lo, w = np.array(box.lo), box.width
    mid = lo + 0.5 * w
    offs = 10.0 ** np.arange(-12.0, 0.5, 1.0)
    pts = [lo, lo + w]
    for k in range(lo.size):
        for o in offs:
            p = mid.copy()
            p[k] = lo[k] + o * w[k]
            pts.append(p)
            q = mid.copy()
            q[k] = lo[k] + w[k] * (1 - o)
            pts.append(q)
    return np.array(pts)


def _safe_eval(fn, t, x):
    """Evaluate a coefficient batch; return (values, index of the first bad sample, message)."""
    try:
        v = np.asarray(fn(t, x), dtype=float)
        ok = np.all(np.isfinite(v.reshape(v.shape[0], -1)), axis=1)
        if ok.all():
            return v, None, ""
        return v, int(np.argmin(ok)), "non-finite coefficient value"
    except Exception as exc:  # evaluator failures are reported, not raised
        for k in range(x.shape[0]):
            try:
                vk = np.asarray(fn(t[k : k + 1], x[k : k + 1]), dtype=float)
            except Exception as exc_k:
                return None, k, f"{type(exc_k).__name__}: {exc_k}"
            if not np.all(np.isfinite(vk)):
                return None, k, "non-finite coefficient value"
        return None, 0, f"{type(exc).__name__}: {exc}"


def _eval_all(model: MixedModel, t, x, with_dc: bool):
    """Coefficients at times t (n,) and points x (n, d); time is passed as shape (n, 1)."""
    fns = [("a", model.a), ("b", model.b), ("c", model.c)]
    if with_dc:
        fns.append(("dc", model.dc_dx))
    parts = {}
    for key, fn in fns:
        v, bad, msg = _safe_eval(fn, t[:, None], x)
        if bad is not None:
            return None, (key, bad, msg)
        parts[key] = v
    return parts, None


def _vec_norm(v, axis=-1):
    return np.sqrt(np.sum(v * v, axis=axis))


def _failure(name, threshold, t, x, info):
    key, k, msg = info
    tk = float(t[k])
    return ConditionResult(
        name, False, math.inf, threshold, {"t": tk, "x": np.asarray(x[k]).tolist(), "coefficient": key}, msg
    )


def check_hypotheses(
    model: MixedModel,
    box: Box,
    samples: int = 2000,
    *,
    beta: float = 1.0,
    thresholds: dict | None = None,
    seed: int = 0,
) -> ConditionReport:
    """Probe growth (M1), spatial Lipschitz (M2) and time-Hoelder (M3) quotients.

    Samples crowd the faces of the box on a log scale so that boundary
    blow-ups (square roots at zero, fractional powers of t) are visible.
    The c-Jacobian clause uses pairs at separation >= 1e-4 * width when the
    Jacobian is finite-differenced, since difference noise would otherwise
    swamp the quotient.
    """
    if samples < 2:
        raise ConfigError("need at least 2 samples", samples=samples)
    if len(box.lo) != model.d:
        raise ConfigError("box dimension does not match model", d=model.d, box=len(box.lo))
    if not 0 < beta <= 1:
        raise ConfigError("beta must lie in (0, 1]", beta=beta)
    th = {"M1": DEFAULT_THRESHOLD, "M2": DEFAULT_THRESHOLD, "M3": DEFAULT_THRESHOLD}
    th.update(thresholds or {})
    rng = np.random.default_rng(seed)
    lo, w = np.array(box.lo), box.width
    tw = box.t1 - box.t0

    x = np.vstack([_probe_points(box), _face_biased(rng, samples, lo, w)])
    n = x.shape[0]
    t = box.t0 + tw * rng.random(n)
    t[: n // 4] = box.t0 + tw * 10.0 ** rng.uniform(-12, 0, n // 4)
    report = ConditionReport()

    # (M1) linear growth
    ev, fail = _eval_all(model, t, x, with_dc=False)
    if fail:
        report.add(_failure("M1", th["M1"], t, x, fail))
    else:
        growth = (
            _vec_norm(ev["a"])
            + np.max(_vec_norm(ev["b"]), axis=-1, initial=0.0)
            + np.max(_vec_norm(ev["c"]), axis=-1, initial=0.0)
        ) / (1.0 + _vec_norm(x))
        k = int(np.argmax(growth))
        report.add(
            ConditionResult("M1", bool(growth[k] <= th["M1"]), float(growth[k]), th["M1"], {"t": float(t[k]), "x": x[k].tolist()})
        )

    # (M2) Lipschitz in x, including the c-Jacobian
    direc = rng.standard_normal(x.shape)
    direc /= np.maximum(_vec_norm(direc)[:, None], 1e-300)
    sep = 10.0 ** rng.uniform(-12, 0, n)
    sep[: _probe_points(box).shape[0]] = 10.0 ** rng.uniform(-12, -6, _probe_points(box).shape[0])
    y = np.clip(x + sep[:, None] * direc * w, lo, lo + w)
    dist = _vec_norm(x - y)
    keep = dist > 0
    xs, ys, ts, ds = x[keep], y[keep], t[keep], dist[keep]
    ex, fx = _eval_all(model, ts, xs, with_dc=model.r > 0)
    ey, fy = _eval_all(model, ts, ys, with_dc=model.r > 0) if fx is None else (None, None)
    if fx or fy:
        report.add(_failure("M2", th["M2"], ts, xs if fx else ys, fx or fy))
    else:
        q = _lip_quotients(ex, ey, ds, model, min_dc_sep=None if model.dc is not None else 1e-4 * float(np.min(w)))
        k = int(np.argmax(q))
        report.add(
            ConditionResult(
                "M2", bool(q[k] <= th["M2"]), float(q[k]), th["M2"],
                {"t": float(ts[k]), "x": xs[k].tolist(), "y": ys[k].tolist()},
            )
        )

    # (M3) Hoelder in t with exponent beta
    dt_sep = tw * 10.0 ** rng.uniform(-12, 0, n)
    s = np.minimum(t + dt_sep, box.t1)
    probes_t = box.t0 + tw * 10.0 ** np.arange(-12.0, 0.5, 1.0)
    m_p = probes_t.size
    t_m = np.concatenate([np.full(m_p, box.t0), t])
    s_m = np.concatenate([probes_t, s])
    x_m = np.vstack([np.repeat(x[:1] * 0 + (lo + 0.5 * w), m_p, axis=0), x])
    keep = s_m > t_m
    t_m, s_m, x_m = t_m[keep], s_m[keep], x_m[keep]
    et, ft = _eval_all(model, t_m, x_m, with_dc=model.r > 0)
    es, fs = _eval_all(model, s_m, x_m, with_dc=model.r > 0) if ft is None else (None, None)
    if ft or fs:
        report.add(_failure("M3", th["M3"], t_m if ft else s_m, x_m, ft or fs))
    else:
        q = _lip_quotients(et, es, (s_m - t_m) ** beta, model, min_dc_sep=None)
        k = int(np.argmax(q))
        report.add(
            ConditionResult(
                "M3", bool(q[k] <= th["M3"]), float(q[k]), th["M3"],
                {"t": float(t_m[k]), "s": float(s_m[k]), "x": x_m[k].tolist(), "beta": beta},
            )
        )
    return report


def _lip_quotients(e1, e2, denom, model, min_dc_sep):
    num = (
        _vec_norm(e1["a"] - e2["a"])
        + np.max(_vec_norm(e1["b"] - e2["b"]), axis=-1, initial=0.0)
        + np.max(_vec_norm(e1["c"] - e2["c"]), axis=-1, initial=0.0)
    )
    if "dc" in e1:
        jac = np.abs(e1["dc"] - e2["dc"])
        jt = np.max(_vec_norm(np.swapaxes(jac, -1, -2)), axis=(-1, -2), initial=0.0)
        if min_dc_sep is not None:
            jt = np.where(denom >= min_dc_sep, jt, 0.0)
        num = num + jt
    return num / denom


# --- CIR family -----------------------------------------------------------


@dataclass(frozen=True)
class CirParams:
    """Parameters of dX = aX dt + sigma X^lam dN with N = B^H (pure) or W + B^H (mixed)."""

    a: float = 0.1
    sigma: float = 1.0
    lam: float = 0.5
    X0: float = 1.0
    H: float = 0.8
    mixed: bool = True
    test_mode: bool = False

    def __post_init__(self):
        if not 0.5 <= self.lam < 1:
            raise ConfigError("lambda must lie in [1/2, 1)", lam=self.lam)
        if self.sigma < 0:
            raise ConfigError("sigma must be >= 0", sigma=self.sigma)
        if not (self.X0 > 0 and math.isfinite(self.X0)):
            raise ConfigError("X0 must be positive", X0=self.X0)
        if self.test_mode and self.H == 0.5:
            return
        check_hurst(self.H)
        lo = 1.0 - self.lam / 2.0 if self.mixed else 1.0 / (1.0 + self.lam)
        if not lo < self.H < 1.0:
            raise HurstRangeError(
                "Hurst parameter outside the existence range for this CIR model",
                H=self.H, lower=lo, mixed=self.mixed, lam=self.lam,
            )

    @property
    def vasicek(self) -> tuple[float, float, float]:
        """(a', sigma', Z0) of the dominating Vasicek process."""
        k = 1.0 - self.lam
        return self.a * k, self.sigma * k, self.X0**k

    def model(self) -> MixedModel:
        return cir_model(self.a, self.sigma, self.lam, mixed=self.mixed)


@dataclass
class SolveResult:
    path: SamplePath
    nu0: float | None
    absorbed: bool


def regularized_diffusion(x, eps: float):
    """Smooth square-root substitute: sqrt(x) above eps, a C^1 cubic on [0, eps], 0 below."""
    if eps <= 0:
        raise ConfigError("eps must be positive", eps=eps)
    x = np.asarray(x, dtype=float)
    xp = np.maximum(x, 0.0)
    poly = 2.5 * eps**-1.5 * xp**2 - 1.5 * eps**-2.5 * xp**3
    out = np.where(x >= eps, np.sqrt(np.maximum(x, eps)), np.where(x >= 0, poly, 0.0))
    return out if out.ndim else float(out)


def regularized_diffusion_prime(x, eps: float):
    if eps <= 0:
        raise ConfigError("eps must be positive", eps=eps)
    x = np.asarray(x, dtype=float)
    xp = np.maximum(x, 0.0)
    poly = 5.0 * eps**-1.5 * xp - 4.5 * eps**-2.5 * xp**2
    out = np.where(x >= eps, 0.5 / np.sqrt(np.maximum(x, eps)), np.where(x >= 0, poly, 0.0))
    return out if out.ndim else float(out)


def cir_noise(
    params: CirParams, grid: TimeGrid, seed: SeedSpec | int, paths
) -> np.ndarray:
    """Driver increments (P, N): dB^H, plus dW in the mixed case, from per-path streams."""
    seed = seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))
    paths = list(paths)
    allow_half = params.test_mode
    dN = fbm_increments(grid, params.H, seed.with_stream(FBM_STREAM), paths, allow_half=allow_half)[..., 0]
    if params.mixed:
        dN = wiener_increments(grid, 1, seed.with_stream(WIENER_STREAM), paths)[..., 0] + dN
    return dN


def cir_march(
    params: CirParams,
    dN: np.ndarray,
    grid: TimeGrid,
    *,
    eps: float | None = None,
    store: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Euler march of the CIR equation with clamp-then-absorb.

    ``dN`` holds the total driver increment per step, shape (P, N).
    Returns (node values (P, N+1) or terminal values (P,), hitting times (P,)).
    """
    dN = np.atleast_2d(np.asarray(dN, dtype=float))
    P, N = dN.shape
    if N != grid.steps:
        raise GridError("driver increments do not match the grid", steps=grid.steps, got=N)
    if eps is not None and params.lam != 0.5:
        raise ConfigError("the regularized diffusion is defined for lambda = 1/2 only", lam=params.lam)
    dt, a, sigma, lam = grid.dt, params.a, params.sigma, params.lam
    growth = 1.0 + a * dt
    t = grid.nodes
    x = np.full(P, float(params.X0))
    alive = np.ones(P, dtype=bool)
    nu0 = np.full(P, np.nan)
    out = np.empty((P, N + 1)) if store else None
    if store:
        out[:, 0] = x
    for i in range(N):
        diff = regularized_diffusion(x, eps) if eps is not None else np.maximum(x, 0.0) ** lam
        new = x * growth + sigma * diff * dN[:, i]
        if not np.all(np.isfinite(new)):
            _raise_non_finite(new[:, None], i + 1)
        hit = alive & (new <= 0.0)
        if hit.any():
            nu0[hit] = t[i] + dt * x[hit] / (x[hit] - new[hit])
            alive &= ~hit
        x = np.where(alive, new, 0.0)
        if store:
            out[:, i + 1] = x
    return (out if store else x), nu0


def _driver_increments(params: CirParams, W: SamplePath | None, B: SamplePath, grid: TimeGrid) -> np.ndarray:
    if params.mixed and W is None:
        raise ConfigError("mixed model needs a Wiener path", field="W")
    if not params.mixed and W is not None:
        raise ConfigError("pure fBm model takes no Wiener path", field="W")
    dB = _path_increments(B, grid, "B")[0, :, 0]
    if W is None:
        return dB
    return _path_increments(W, grid, "W")[0, :, 0] + dB


def _result(grid: TimeGrid, values: np.ndarray, nu0: float) -> SolveResult:
    absorbed = bool(np.isfinite(nu0))
    return SolveResult(SamplePath(grid, values), float(nu0) if absorbed else None, absorbed)


def solve_cir(
    params: CirParams,
    W: SamplePath | None,
    B: SamplePath,
    grid: TimeGrid,
    *,
    eps: float | None = None,
) -> SolveResult:
    vals, nu0 = cir_march(params, _driver_increments(params, W, B, grid)[None], grid, eps=eps)
    return _result(grid, vals[0], nu0[0])


def vasicek_march(aprime: float, sigmaprime: float, Z0: float, dN: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Exponential scheme Z_{i+1} = e^{a' dt} Z_i + sigma' dN_i, node values (P, N+1).

    The deterministic part Z0 e^{a' t} is evaluated in closed form, so
    sigma' = 0 reproduces it to rounding.
    """
    dN = np.atleast_2d(np.asarray(dN, dtype=float))
    P, N = dN.shape
    if N != grid.steps:
        raise GridError("driver increments do not match the grid", steps=grid.steps, got=N)
    decay = math.exp(aprime * grid.dt)
    S = np.zeros((P, N + 1))
    s = np.zeros(P)
    for i in range(N):
        s = decay * s + sigmaprime * dN[:, i]
        S[:, i + 1] = s
    return Z0 * np.exp(aprime * grid.nodes) + S


def solve_vasicek(
    aprime: float,
    sigmaprime: float,
    Z0: float,
    W: SamplePath | None,
    B: SamplePath,
    grid: TimeGrid,
) -> SamplePath:
    dN = _path_increments(B, grid, "B")[0, :, 0]
    if W is not None:
        dN = _path_increments(W, grid, "W")[0, :, 0] + dN
    return SamplePath(grid, vasicek_march(aprime, sigmaprime, Z0, dN[None], grid)[0])


def transform_y(X: SolveResult | SamplePath, lam: float) -> SamplePath:
    path = X.path if isinstance(X, SolveResult) else X
    return SamplePath(path.grid, np.maximum(path.values, 0.0) ** (1.0 - lam))
