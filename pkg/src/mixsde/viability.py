"""Sampled checks of viability, positivity and comparison hypotheses, and
paired-path Monte Carlo checks of the corresponding conclusions.

All hypothesis checks evaluate coefficients on a finite cloud of points.
A failed check carries a concrete witness; a passed check is evidence,
not a certificate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BoundarySpecError, ConfigError, StructuralError
from .fracalc import truncate_kn
from .noise import FBM_STREAM, WIENER_STREAM, SamplePath, SeedSpec, TimeGrid, fbm_increments, wiener_increments
from .parallel import DEFAULT_BATCH, concat, map_batches
from .reports import ConditionReport, ConditionResult, ViolationStats
from .solver import Box, MixedModel, euler_mixed_batch

DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class BoundarySpec:
    """Domain D = {phi >= 0} given by phi with its gradient and Hessian.

    Evaluators are vectorised: ``phi(x)`` maps (n, d) -> (n,), ``grad`` to
    (n, d) and ``hess`` to (n, d, d).
    """

    phi: Callable
    grad: Callable
    hess: Callable
    scale: float = 1.0
    delta: float | None = None

    @property
    def boundary_delta(self) -> float:
        return 1e-6 * self.scale if self.delta is None else self.delta

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        return self.phi(np.atleast_2d(x)) >= -tol

    def project(self, x: np.ndarray, iters: int = 30) -> np.ndarray:
        """Newton steps x - phi(x) grad / |grad|^2 towards phi = 0."""
        x = np.array(x, dtype=float, copy=True)
        for _ in range(iters):
            f = self.phi(x)
            if np.all(np.abs(f) <= 1e-3 * self.boundary_delta):
                break
            g = self.grad(x)
            g2 = np.sum(g * g, axis=1)
            step = np.where(g2 > 0, f / np.where(g2 > 0, g2, 1.0), 0.0)
            x = x - step[:, None] * g
        return x


def half_space(i: int = 0, d: int = 1, shift: float = 0.0) -> BoundarySpec:
    """D = {x_i >= shift}."""
    e = np.zeros(d)
    e[i] = 1.0
    return BoundarySpec(
        phi=lambda x: x[:, i] - shift,
        grad=lambda x: np.broadcast_to(e, x.shape).copy(),
        hess=lambda x: np.zeros((x.shape[0], d, d)),
    )


def quadratic_boundary(Q, b, c: float) -> BoundarySpec:
    """D = {x^T Q x + b.x + c >= 0} with symmetric Q."""
    Q = np.asarray(Q, dtype=float)
    Q = 0.5 * (Q + Q.T)
    b = np.asarray(b, dtype=float)
    return BoundarySpec(
        phi=lambda x: np.einsum("ni,ij,nj->n", x, Q, x) + x @ b + c,
        grad=lambda x: 2.0 * x @ Q + b,
        hess=lambda x: np.broadcast_to(2.0 * Q, (x.shape[0],) + Q.shape).copy(),
    )


def _boundary_points(spec: BoundarySpec, t, x, project: bool):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), (x.shape[0],))
    if project:
        x = spec.project(x)
    sel = np.abs(spec.phi(x)) <= spec.boundary_delta
    if not np.any(sel):
        raise BoundarySpecError("no sample lies within the boundary band |phi| <= delta", delta=spec.boundary_delta)
    xb, tb = x[sel], t[sel]
    g = spec.grad(xb)
    gn = np.sqrt(np.sum(g * g, axis=1))
    if np.any(gn == 0):
        k = int(np.argmin(gn))
        raise BoundarySpecError("gradient of phi vanishes on the boundary", x=xb[k].tolist())
    return tb, xb, g


def viability_margins(model: MixedModel, spec: BoundarySpec, t, x):
    """alpha(t,x) and the per-point max of |(phi', b_k)|, |(phi', c_j)| at given points."""
    g = spec.grad(x)
    Hs = spec.hess(x)
    b = model.b(t[:, None], x)
    c = model.c(t[:, None], x)
    alpha = np.einsum("ni,ni->n", g, model.a(t[:, None], x)) + 0.5 * np.einsum("nki,nil,nkl->n", b, Hs, b)
    beta_b = np.abs(np.einsum("ni,nki->nk", g, b))
    beta_c = np.abs(np.einsum("ni,nji->nj", g, c))
    beta = np.max(np.concatenate([beta_b, beta_c], axis=1), axis=1, initial=0.0)
    return alpha, beta


def check_viability(
    model: MixedModel,
    spec: BoundarySpec,
    t,
    x,
    *,
    tol: float = DEFAULT_TOL,
    project: bool = True,
    names: tuple[str, str] = ("VM1", "VM2"),
) -> ConditionReport:
    """Evaluate the drift/Hessian condition and the noise-tangency condition on the boundary.

    Both conditions are evaluated at boundary points only, obtained by
    projecting the cloud onto {phi = 0} (``project=True``) or by keeping
    the samples with |phi| <= delta.
    """
    tb, xb, _ = _boundary_points(spec, t, x, project)
    alpha, beta = viability_margins(model, spec, tb, xb)
    report = ConditionReport()
    k = int(np.argmin(alpha))
    report.add(
        ConditionResult(names[0], bool(alpha[k] >= -tol), float(alpha[k]), -tol, {"t": float(tb[k]), "x": xb[k].tolist()})
    )
    k = int(np.argmax(beta))
    report.add(
        ConditionResult(names[1], bool(beta[k] <= tol), float(beta[k]), tol, {"t": float(tb[k]), "x": xb[k].tolist()})
    )
    return report


def sample_box(box: Box, n: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    lo = np.array(box.lo)
    x = lo + rng.random((n, lo.size)) * box.width
    t = box.t0 + (box.t1 - box.t0) * rng.random(n)
    return t, x


def check_positivity(
    model: MixedModel,
    dprime: int,
    X0,
    *,
    samples: int = 2000,
    radius: float = 10.0,
    horizon: float = 1.0,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
) -> ConditionReport:
    """Positivity hypotheses for coordinates 1..d' on the faces {x_i = 0, x_l >= 0 (l <= d')}.

    Free coordinates (index > d') are sampled in [-radius, radius].
    """
    d = model.d
    if not 1 <= dprime <= d:
        raise ConfigError("dprime must lie in 1..d", dprime=dprime, d=d)
    X0 = np.broadcast_to(np.asarray(X0, dtype=float), (d,))
    rng = np.random.default_rng(seed)
    report = ConditionReport()
    k = int(np.argmin(X0[:dprime]))
    report.add(ConditionResult("P1", bool(X0[k] >= 0), float(X0[k]), 0.0, {"coordinate": k + 1}))
    worst_drift = (np.inf, None)
    worst_noise = (-np.inf, None)
    for i in range(dprime):
        x = rng.uniform(-radius, radius, (samples, d))
        x[:, :dprime] = np.abs(x[:, :dprime]) * 10.0 ** rng.uniform(-12, 0, (samples, dprime))
        x[0, :dprime] = 0.0
        x[:, i] = 0.0
        t = horizon * rng.random(samples)
        a_i = model.a(t[:, None], x)[:, i]
        noise = np.concatenate(
            [np.abs(model.b(t[:, None], x)[:, :, i]), np.abs(model.c(t[:, None], x)[:, :, i])], axis=1
        )
        nmax = np.max(noise, axis=1, initial=0.0)
        j = int(np.argmin(a_i))
        if a_i[j] < worst_drift[0]:
            worst_drift = (float(a_i[j]), {"t": float(t[j]), "x": x[j].tolist(), "coordinate": i + 1})
        j = int(np.argmax(nmax))
        if nmax[j] > worst_noise[0]:
            worst_noise = (float(nmax[j]), {"t": float(t[j]), "x": x[j].tolist(), "coordinate": i + 1})
    report.add(ConditionResult("P2:drift", worst_drift[0] >= -tol, worst_drift[0], -tol, worst_drift[1]))
    report.add(ConditionResult("P2:noise", worst_noise[0] <= tol, worst_noise[0], tol, worst_noise[1]))
    return report


def _pairs_sharing(box: Box, l: int, n: int, rng):
    lo, w = np.array(box.lo), box.width
    x1 = lo + rng.random((n, lo.size)) * w
    x2 = lo + rng.random((n, lo.size)) * w
    shared = lo[l] + w[l] * np.where(rng.random(n) < 0.5, rng.random(n), 10.0 ** rng.uniform(-12, 0, n))
    x1[:, l] = shared
    x2[:, l] = shared
    t = box.t0 + (box.t1 - box.t0) * rng.random(n)
    return t, x1, x2


def check_comparison(
    model1: MixedModel,
    model2: MixedModel,
    l: int,
    X0s,
    *,
    box: Box | None = None,
    samples: int = 2000,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
) -> ConditionReport:
    """Comparison hypotheses for coordinate ``l`` (0-based).

    Raises StructuralError unless both models have the same b and c and
    these depend on x only through x_l (checked on the sampled pairs).
    """
    if (model1.d, model1.m, model1.r) != (model2.d, model2.m, model2.r):
        raise StructuralError("models have different dimensions")
    d = model1.d
    if not 0 <= l < d:
        raise ConfigError("coordinate index out of range", l=l, d=d)
    box = box or Box(0.0, 1.0, (0.0,) * d, (10.0,) * d)
    rng = np.random.default_rng(seed)
    t, x1, x2 = _pairs_sharing(box, l, samples, rng)
    tt = t[:, None]
    for name, f1, f2 in (("b", model1.b, model2.b), ("c", model1.c, model2.c)):
        ref = f1(tt, x1)
        for other in (f2(tt, x1), f1(tt, x2), f2(tt, x2)):
            gap = np.abs(other - ref).reshape(samples, -1).max(axis=1, initial=0.0)
            if np.any(gap > tol):
                k = int(np.argmax(gap))
                raise StructuralError(
                    f"diffusion coefficient {name} differs between the models or depends on coordinates other than x_l",
                    x1=x1[k].tolist(),
                    x2=x2[k].tolist(),
                    gap=float(gap[k]),
                )
    X01, X02 = (np.broadcast_to(np.asarray(v, dtype=float), (d,)) for v in X0s)
    report = ConditionReport()
    report.add(
        ConditionResult("CM1", bool(X01[l] <= X02[l]), float(X02[l] - X01[l]), 0.0, {"X0_1": X01[l], "X0_2": X02[l]})
    )
    gap = model2.a(tt, x2)[:, l] - model1.a(tt, x1)[:, l]
    k = int(np.argmin(gap))
    report.add(
        ConditionResult(
            "CM2", bool(gap[k] >= -tol), float(gap[k]), -tol,
            {"t": float(t[k]), "x1": x1[k].tolist(), "x2": x2[k].tolist()},
        )
    )
    return report


def model_noise(model: MixedModel, grid: TimeGrid, H: float, seed: SeedSpec, paths, allow_half: bool = False):
    """(dW, dZ) for a model from per-path streams: Wiener on stream 0, fBm on stream 1."""
    paths = list(paths)
    dW = wiener_increments(grid, model.m, seed.with_stream(WIENER_STREAM), paths) if model.m else None
    dZ = (
        fbm_increments(grid, H, seed.with_stream(FBM_STREAM), paths, model.r, allow_half=allow_half)
        if model.r
        else None
    )
    return dW, dZ


def _seed(seed) -> SeedSpec:
    return seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))


def empirical_comparison(
    model1: MixedModel,
    model2: MixedModel,
    l: int,
    X0s,
    n_paths: int,
    grid: TimeGrid,
    seed,
    *,
    H: float = 0.8,
    tol: float = DEFAULT_TOL,
    threads: int | None = None,
    batch_size: int = DEFAULT_BATCH,
) -> ViolationStats:
    """Solve both models with shared noise per path and count nodes where X1_l > X2_l + tol."""
    seed = _seed(seed)
    try:
        rep = check_comparison(model1, model2, l, X0s)
        if not rep.passed:
            warnings.warn("comparison hypotheses fail on the sample; running anyway", stacklevel=2)
    except StructuralError as exc:
        warnings.warn(f"comparison structure check failed ({exc}); running anyway", stacklevel=2)

    def run(idx: range):
        dW, dZ = model_noise(model1, grid, H, seed, idx)
        x1, _ = euler_mixed_batch(model1, X0s[0], dW, dZ, grid)
        x2, _ = euler_mixed_batch(model2, X0s[1], dW, dZ, grid)
        excess = x1[:, :, l] - x2[:, :, l]
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


def empirical_viability(
    model: MixedModel,
    spec: BoundarySpec,
    X0,
    n_paths: int,
    grid: TimeGrid,
    seed,
    *,
    H: float = 0.8,
    tol: float = DEFAULT_TOL,
    threads: int | None = None,
    batch_size: int = DEFAULT_BATCH,
) -> ViolationStats:
    X0 = np.broadcast_to(np.asarray(X0, dtype=float), (model.d,))
    if not spec.contains(X0)[0]:
        raise BoundarySpecError("initial state lies outside D", X0=X0.tolist(), phi=float(spec.phi(X0[None])[0]))
    seed = _seed(seed)

    def run(idx: range):
        dW, dZ = model_noise(model, grid, H, seed, idx)
        x, _ = euler_mixed_batch(model, X0, dW, dZ, grid)
        phi = spec.phi(x.reshape(-1, model.d)).reshape(x.shape[:2])
        return np.sum(phi < -tol, axis=1), np.min(phi, axis=1)

    counts, min_phi = concat(map_batches(run, n_paths, threads=threads, batch_size=batch_size))
    return ViolationStats(
        n_paths=n_paths,
        n_nodes=grid.steps + 1,
        n_violations=int(np.sum(counts)),
        max_violation=float(max(0.0, -np.min(min_phi))),
        path_flags=counts > 0,
        extra={"min_phi": float(np.min(min_phi)), "per_path_max": np.maximum(-min_phi, 0.0), "tol": tol},
    )


# --- random-coefficient (Ito) reformulation along a smoothed driver -------


def _interp(path: SamplePath, t):
    t = np.asarray(t, dtype=float)
    vals = path.values
    return np.stack([np.interp(t, path.grid.nodes, vals[:, j]) for j in range(vals.shape[1])], axis=-1)


def smoothed_drift_model(model: MixedModel, Z: SamplePath, n: int) -> MixedModel:
    """Ito model with drift a(t,x) + sum_j c_j(t,x) n (k_n(Z(t)) - k_n(Z((t-1/n) v 0)))_j and no Hoelder noise."""
    if Z.dim != model.r:
        raise ConfigError("driver dimension does not match r", r=model.r, dim=Z.dim)

    def zdot(t):
        t = np.asarray(t, dtype=float)
        now = truncate_kn(_interp(Z, t), n)
        before = truncate_kn(_interp(Z, np.maximum(t - 1.0 / n, 0.0)), n)
        return n * (now - before)

    def drift(t, x):
        rate = zdot(np.broadcast_to(t, x.shape[:-1] + (1,))[..., 0])
        return model.a(t, x) + np.einsum("...j,...jd->...d", rate, model.c(t, x))

    return MixedModel(
        model.d, model.m, 0, drift=drift, diff_w=model.diff_w, absorbing=model.absorbing, name=f"{model.name}-smoothed"
    )


def check_viability_random(
    model: MixedModel,
    spec: BoundarySpec,
    drivers: list[SamplePath],
    n: int,
    t,
    x,
    *,
    tol: float = DEFAULT_TOL,
) -> ConditionReport:
    """V1/V2 for the smoothed-driver Ito model, checked per driver realization; reports the worst."""
    worst: dict[str, ConditionResult] = {}
    for k, Z in enumerate(drivers):
        rep = check_viability(smoothed_drift_model(model, Z, n), spec, t, x, tol=tol, names=("V1", "V2"))
        for c in rep.conditions:
            c.witness = dict(c.witness or {}, realization=k)
            prev = worst.get(c.name)
            worse = prev is None or (c.value < prev.value if c.name == "V1" else c.value > prev.value)
            if worse:
                worst[c.name] = c
    return ConditionReport([worst["V1"], worst["V2"]])
