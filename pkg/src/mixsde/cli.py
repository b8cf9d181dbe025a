"""Command-line frontend.

Every subcommand takes ``--config FILE`` (a flat JSON object whose keys are
the subcommand's parameter names) and flags of the same names; flags win.
The primary artifact goes to ``--out`` (default stdout). A metadata JSON
echoing the effective configuration goes to ``--meta``, or next to
``--out`` as ``<out>.meta.json``, or to stderr when neither is given.
Failures print an error JSON to stderr and exit with the error's status.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .errors import ConfigError, MixSDEError
from .fracalc import FracParams, gls_integral, integral_bound, lambda_coeff, norm_inf, riemann_stieltjes, seminorm_0
from .kernel import solve_kernel
from .noise import SamplePath, SeedSpec, TimeGrid, default_gamma, gen_fbm, gen_wiener, holder_constant
from .pricing import (
    TABLE_STEPS,
    bound_domination,
    hitting_experiment,
    mc_price,
    reproduce_table,
    upper_bound_price,
    vasicek_moments,
)
from .reports import _plain
from .solver import MODEL_NAMES, Box, CirParams, build_model, check_hypotheses, euler_mixed_batch, solve_cir, solve_vasicek
from .viability import check_comparison, check_positivity, check_viability, empirical_comparison, half_space, model_noise, sample_box


@dataclass(frozen=True)
class Param:
    name: str
    type: Callable
    default: object
    help: str


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    if isinstance(text, (int, float)):
        return [float(text)]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    return None if text is None or text == "" or str(text).lower() == "none" else float(text)


SEED = Param("seed", int, 0, "master seed; per-path streams derive from (seed, stream, path)")
THREADS = Param("threads", int, None, "worker threads; never changes numeric results")
BATCH = Param("batch_size", int, 1000, "paths per work batch")
CIR = [
    Param("a", float, 0.1, "drift rate a of dX = aX dt + sigma X^lam dN (table setup: 0.1)"),
    Param("sigma", float, 1.0, "noise scale sigma"),
    Param("lam", float, 0.5, "diffusion exponent lambda in [1/2, 1)"),
    Param("X0", float, 1.0, "initial value (table setup: 1)"),
    Param("H", float, 0.8, "Hurst parameter of B^H; the table setup leaves it open, 0.8 from the hitting runs"),
]

SUBCOMMANDS: dict[str, tuple[str, list[Param]]] = {
    "simulate": (
        "simulate one path of a built-in or custom model; path CSV t,x_1,..,x_d",
        [
            Param("model", str, "cir-mixed", f"model name, one of {', '.join(MODEL_NAMES)}"),
            *CIR,
            Param("b", float, 0.5, "Wiener coefficient of the linear model"),
            Param("c", float, 0.5, "fBm coefficient of the linear model"),
            Param("aprime", float, None, "Vasicek drift a' (default a(1-lam))"),
            Param("sigmaprime", float, None, "Vasicek noise scale sigma' (default sigma(1-lam))"),
            Param("Z0", float, None, "Vasicek initial value (default X0^(1-lam))"),
            Param("target", str, None, "custom model factory 'module:function'"),
            Param("T", float, 10.0, "horizon (table setup: 10)"),
            Param("N", int, 4096, "Euler steps (table setup: 4096)"),
            Param("path", int, 0, "path index within the seed's streams"),
            Param("eps", _opt_float, None, "regularize the square root below eps (lambda = 1/2 only)"),
            Param("test_mode", _bool, False, "allow H = 0.5 for analytic checks"),
            SEED,
        ],
    ),
    "integrate": (
        "pathwise integral of f against g via fractional derivatives; JSON",
        [
            Param("f", str, "t", "integrand: CSV path or one of one, t, t2, sin, wiener, fbm"),
            Param("g", str, "t2", "integrator: CSV path or one of one, t, t2, sin, wiener, fbm"),
            Param("lower", float, 0.0, "lower limit"),
            Param("upper", float, None, "upper limit (default: horizon)"),
            Param("H", float, 0.8, "Hurst parameter for generated fBm and the default exponents"),
            Param("alpha", float, None, "fractional order alpha in (1-gamma, 1/2)"),
            Param("gamma", float, None, "Hoelder exponent of the driver (default H - 0.01)"),
            Param("T", float, 1.0, "horizon of generated paths"),
            Param("N", int, 4096, "steps of generated paths"),
            Param("no_divergence_check", _bool, False, "skip the grid-halving divergence check"),
            SEED,
        ],
    ),
    "norms": (
        "sup norm, Hoelder-type seminorm and the derivative supremum of a path; JSON",
        [
            Param("input", str, "fbm", "CSV path or one of wiener, fbm, t, t2, sin"),
            Param("t", float, None, "evaluation time (default: horizon)"),
            Param("H", float, 0.8, "Hurst parameter for generated fBm"),
            Param("alpha", float, None, "fractional order alpha"),
            Param("gamma", float, None, "Hoelder exponent (default H - 0.01)"),
            Param("T", float, 1.0, "horizon of generated paths"),
            Param("N", int, 2048, "steps of generated paths"),
            SEED,
        ],
    ),
    "check": (
        "sampled hypothesis checks on a built-in or custom model; ConditionReport JSON",
        [
            Param("kind", str, "hypotheses", "hypotheses, viability, positivity or comparison"),
            Param("model", str, "linear", f"model name, one of {', '.join(MODEL_NAMES)}"),
            *CIR,
            Param("a2", float, None, "drift of the second model (comparison)"),
            Param("b", float, 0.5, "Wiener coefficient of the linear model"),
            Param("c", float, 0.5, "fBm coefficient of the linear model"),
            Param("aprime", float, 0.05, "Vasicek drift a'"),
            Param("sigmaprime", float, 0.5, "Vasicek noise scale sigma'"),
            Param("target", str, None, "custom model factory 'module:function'"),
            Param("t0", float, 0.0, "box: start time"),
            Param("t1", float, 1.0, "box: end time"),
            Param("lo", _floats, [0.0], "box: lower corner (comma separated)"),
            Param("hi", _floats, [10.0], "box: upper corner (comma separated)"),
            Param("samples", int, 2000, "sample points"),
            Param("beta", float, 1.0, "time-Hoelder exponent used in the checks"),
            Param("face", int, 0, "viability: coordinate i of the half space x_i >= shift"),
            Param("shift", float, 0.0, "viability: half-space offset"),
            Param("dprime", int, 1, "positivity: number of leading coordinates that must stay >= 0"),
            Param("l", int, 0, "comparison: compared coordinate (0-based)"),
            Param("X0_2", float, None, "comparison: initial value of the second model (default X0)"),
            SEED,
        ],
    ),
    "compare": (
        "paired paths with shared noise, node-wise ordering violations; ViolationStats CSV",
        [
            Param("kind", str, "drift", "drift (two CIR drifts) or domination (X^(1-lam) vs the Vasicek path)"),
            Param("a1", float, 0.05, "drift of the lower model"),
            Param("a2", float, 0.1, "drift of the upper model"),
            *CIR,
            Param("T", float, 1.0, "horizon"),
            Param("N", int, 1024, "Euler steps"),
            Param("n_paths", int, 1000, "number of paired paths"),
            Param("tol", float, 1e-9, "violation tolerance"),
            SEED, THREADS, BATCH,
        ],
    ),
    "kernel": (
        "solve the Volterra kernel equation on a grid; CSV t,s,r plus residual JSON",
        [
            Param("H", float, 0.8, "Hurst parameter in (3/4, 1), or 0.5 with test_mode"),
            Param("T", float, 1.0, "horizon"),
            Param("N", int, 256, "grid steps (at most 1024)"),
            Param("tol", float, 1e-3, "residual tolerance"),
            Param("test_mode", _bool, False, "allow H = 0.5"),
            SEED,
        ],
    ),
    "price": (
        "Monte Carlo price of a call on the mixed CIR model; JSON",
        [
            *CIR,
            Param("K", float, 1.0, "strike"),
            Param("T", float, 10.0, "maturity (table setup: 10)"),
            Param("N", int, TABLE_STEPS, "Euler steps (table setup: 4096)"),
            Param("n_paths", int, 20000, "paths (table setup: 20000)"),
            SEED, THREADS, BATCH,
        ],
    ),
    "bound": (
        "closed-form Gaussian upper bound on the call price; JSON",
        [
            *CIR,
            Param("K", float, 1.0, "strike"),
            Param("T", float, 10.0, "maturity (table setup: 10)"),
        ],
    ),
    "table": (
        "prices and bounds on the 3x3 (sigma, K) grid; PriceReport CSV",
        [
            Param("sigmas", _floats, [0.1, 0.5, 1.0], "noise scales (table setup: 0.1,0.5,1)"),
            Param("strikes", _floats, [0.5, 1.0, 2.0], "strikes (table setup: 0.5,1,2)"),
            Param("a", float, 0.1, "drift rate (table setup: 0.1)"),
            Param("X0", float, 1.0, "initial value"),
            Param("lam", float, 0.5, "diffusion exponent"),
            Param("H", float, 0.8, "Hurst parameter; not given by the table setup, 0.8 by default"),
            Param("T", float, 10.0, "maturity"),
            Param("N", int, TABLE_STEPS, "Euler steps"),
            Param("n_paths", int, 20000, "paths per sigma"),
            SEED, THREADS, BATCH,
        ],
    ),
    "hitting": (
        "absorption times of the pure-fBm CIR model; histogram CSV bin_left,bin_right,count",
        [
            Param("a", float, 0.1, "drift rate (hitting runs: +-0.1)"),
            Param("sigma", float, 1.0, "noise scale (hitting runs: 1)"),
            Param("lam", float, 0.5, "diffusion exponent (hitting runs: 1/2)"),
            Param("H", float, 0.8, "Hurst parameter (hitting runs: 0.8)"),
            Param("X0", float, 1.0, "initial value (hitting runs: 1)"),
            Param("horizon", float, 500.0, "censoring horizon (hitting runs: 500)"),
            Param("N", int, 4096, "Euler steps"),
            Param("n_paths", int, 1000, "paths (hitting runs: 1000)"),
            Param("bins", int, 50, "histogram bins on [0, horizon]"),
            Param("checkpoints", _floats, None, "survivor checkpoints (default horizon/10, horizon)"),
            Param("svg", str, None, "also write the histogram as SVG to this file"),
            Param("nu0_out", str, None, "also write per-path absorption times as CSV"),
            SEED, THREADS, BATCH,
        ],
    ),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message, field="arguments")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mixsde", description="Mixed Wiener/fBm SDE simulation and pricing toolkit.")
    parser.add_argument("--version", action="version", version=f"mixsde {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)
    for name, (desc, params) in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=desc, description=desc)
        p.add_argument("--config", help="JSON file with parameter values; flags override it")
        p.add_argument("--out", help="artifact path (default stdout)")
        p.add_argument("--meta", help="metadata JSON path (default <out>.meta.json or stderr)")
        for prm in params:
            flag = "--" + prm.name.replace("_", "-")
            default = "none" if prm.default is None else prm.default
            p.add_argument(flag, dest=prm.name, default=None, metavar=prm.type.__name__.lstrip("_").upper(),
                           help=f"{prm.help} [default: {default}]")
    return parser


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Defaults, then the JSON config file, then explicit flags."""
    _, params = SUBCOMMANDS[command]
    by_name = {p.name: p for p in params}
    cfg = {p.name: p.default for p in params}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}", field="config") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object", field="config")
        for key, value in raw.items():
            if key not in by_name:
                raise ConfigError(f"unknown parameter '{key}' for {command}", field=key)
            cfg[key] = _coerce(by_name[key], value)
    for name, prm in by_name.items():
        value = getattr(args, name, None)
        if value is not None:
            cfg[name] = _coerce(prm, value)
    return cfg


def _coerce(prm: Param, value):
    if value is None:
        return None
    try:
        if prm.type in (int, float) and isinstance(value, str) and value.lower() == "none":
            return None
        if prm.type is int and isinstance(value, float) and not value.is_integer():
            raise ValueError("not an integer")
        out = prm.type(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value for '{prm.name}': {value!r} ({exc})", field=prm.name) from None
    if isinstance(out, float) and not math.isfinite(out):
        raise ConfigError(f"'{prm.name}' must be finite", field=prm.name)
    return out


# --- path inputs -----------------------------------------------------------------


def _input_path(spec: str, cfg: dict, stream: int) -> SamplePath:
    grid = TimeGrid(cfg["T"], cfg["N"])
    t = grid.nodes
    seed = SeedSpec(cfg["seed"], stream)
    named = {
        "one": lambda: np.ones_like(t),
        "t": lambda: t.copy(),
        "t2": lambda: t**2,
        "sin": lambda: np.sin(2.0 * np.pi * t),
        "wiener": lambda: gen_wiener(grid, 1, seed).scalar,
        "fbm": lambda: gen_fbm(grid, cfg["H"], seed).scalar,
    }
    if spec in named:
        return SamplePath(grid, named[spec]())
    try:
        return SamplePath.from_csv(Path(spec).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read path '{spec}': {exc}", field="input") from None


def _frac_params(cfg: dict) -> FracParams:
    gamma = cfg["gamma"] if cfg.get("gamma") is not None else default_gamma(cfg["H"])
    if cfg.get("alpha") is not None:
        return FracParams(cfg["alpha"], gamma)
    return FracParams.for_hurst(cfg["H"]) if cfg.get("gamma") is None else FracParams((1.5 - gamma) / 2.0, gamma)


# --- subcommands --------------------------------------------------------------------


def _cir_params(cfg: dict, *, mixed: bool = True, **over) -> CirParams:
    base = dict(a=cfg["a"], sigma=cfg["sigma"], lam=cfg["lam"], X0=cfg["X0"], H=cfg["H"], mixed=mixed)
    base.update(over)
    return CirParams(**base)


def _model_params(cfg: dict) -> dict:
    name = cfg["model"]
    if name == "linear":
        return {"a": cfg["a"], "b": cfg["b"], "c": cfg["c"]}
    if name in ("cir-pure", "cir-mixed"):
        return {"a": cfg["a"], "sigma": cfg["sigma"], "lam": cfg["lam"]}
    if name == "vasicek":
        k = 1.0 - cfg["lam"]
        ap = cfg["aprime"] if cfg.get("aprime") is not None else cfg["a"] * k
        sp = cfg["sigmaprime"] if cfg.get("sigmaprime") is not None else cfg["sigma"] * k
        return {"aprime": ap, "sigmaprime": sp}
    if name == "custom":
        return {"target": cfg["target"]}
    return {}


def cmd_simulate(cfg: dict):
    grid = TimeGrid(cfg["T"], cfg["N"])
    seed = SeedSpec(cfg["seed"])
    name = cfg["model"]
    meta = {}
    if name in ("cir-pure", "cir-mixed"):
        params = _cir_params(cfg, mixed=name == "cir-mixed", test_mode=cfg["test_mode"])
        W = gen_wiener(grid, 1, seed.with_stream(0), path=cfg["path"]) if params.mixed else None
        B = gen_fbm(grid, params.H, seed.with_stream(1), path=cfg["path"], allow_half=params.test_mode)
        res = solve_cir(params, W, B, grid, eps=cfg["eps"])
        path = res.path
        meta["nu0"] = res.nu0
    elif name == "vasicek":
        p = _model_params(cfg)
        Z0 = cfg["Z0"] if cfg.get("Z0") is not None else cfg["X0"] ** (1.0 - cfg["lam"])
        W = gen_wiener(grid, 1, seed.with_stream(0), path=cfg["path"])
        B = gen_fbm(grid, cfg["H"], seed.with_stream(1), path=cfg["path"], allow_half=cfg["test_mode"])
        path = solve_vasicek(p["aprime"], p["sigmaprime"], Z0, W, B, grid)
        meta["Z0"] = Z0
    else:
        model = build_model(name, **_model_params(cfg))
        dW, dZ = model_noise(model, grid, cfg["H"], seed, [cfg["path"]], allow_half=cfg["test_mode"])
        vals, nu0 = euler_mixed_batch(model, cfg["X0"], dW, dZ, grid)
        path = SamplePath(grid, vals[0])
        meta["nu0"] = None if np.isnan(nu0[0]) else float(nu0[0])
    return path.to_csv(), meta


def cmd_integrate(cfg: dict):
    f = _input_path(cfg["f"], cfg, 1)
    g = _input_path(cfg["g"], cfg, 2)
    upper = cfg["upper"] if cfg["upper"] is not None else g.grid.horizon
    params = _frac_params(cfg)
    value = gls_integral(f, g, cfg["lower"], upper, params, check_divergence=not cfg["no_divergence_check"])
    out = {
        "value": value,
        "bound": integral_bound(f, g, cfg["lower"], upper, params),
        "riemann_stieltjes": riemann_stieltjes(f, g, cfg["lower"], upper),
        "alpha": params.alpha,
        "gamma": params.gamma,
    }
    return json.dumps(out, indent=2, sort_keys=True) + "\n", {}


def cmd_norms(cfg: dict):
    path = _input_path(cfg["input"], cfg, 1)
    t = cfg["t"] if cfg["t"] is not None else path.grid.horizon
    params = _frac_params(cfg)
    out = {
        "t": t,
        "norm_inf": norm_inf(path, t, params),
        "seminorm_0": seminorm_0(path, t, params),
        "lambda": lambda_coeff(path, t, params),
        "holder_constant": holder_constant(path, params.gamma),
        "alpha": params.alpha,
        "gamma": params.gamma,
        "beta": params.beta,
    }
    return json.dumps(out, indent=2, sort_keys=True) + "\n", {}


def cmd_check(cfg: dict):
    model = build_model(cfg["model"], **_model_params(cfg))
    d = model.d
    lo = cfg["lo"] * d if len(cfg["lo"]) == 1 else cfg["lo"]
    hi = cfg["hi"] * d if len(cfg["hi"]) == 1 else cfg["hi"]
    if len(lo) != d or len(hi) != d:
        raise ConfigError("box corners must have one entry per state coordinate", field="lo", d=d)
    box = Box(cfg["t0"], cfg["t1"], tuple(lo), tuple(hi))
    kind = cfg["kind"]
    if kind == "hypotheses":
        rep = check_hypotheses(model, box, samples=cfg["samples"], beta=cfg["beta"], seed=cfg["seed"])
    elif kind == "viability":
        t, x = sample_box(box, cfg["samples"], cfg["seed"])
        rep = check_viability(model, half_space(cfg["face"], d, cfg["shift"]), t, x)
    elif kind == "positivity":
        rep = check_positivity(model, cfg["dprime"], cfg["X0"], samples=cfg["samples"], seed=cfg["seed"])
    elif kind == "comparison":
        if cfg["model"] not in ("cir-pure", "cir-mixed", "linear"):
            raise ConfigError("comparison checks support the cir and linear models", field="model")
        other = dict(_model_params(cfg), a=cfg["a2"] if cfg["a2"] is not None else cfg["a"])
        model2 = build_model(cfg["model"], **other)
        X02 = cfg["X0_2"] if cfg["X0_2"] is not None else cfg["X0"]
        rep = check_comparison(model, model2, cfg["l"], (cfg["X0"], X02), box=box, samples=cfg["samples"], seed=cfg["seed"])
    else:
        raise ConfigError(f"unknown check kind '{kind}'", field="kind")
    return rep.to_json() + "\n", {"passed": rep.passed}


def cmd_compare(cfg: dict):
    grid = TimeGrid(cfg["T"], cfg["N"])
    common = dict(threads=cfg["threads"], batch_size=cfg["batch_size"])
    if cfg["kind"] == "drift":
        _cir_params(cfg)  # validates the Hurst range
        m1 = build_model("cir-mixed", a=cfg["a1"], sigma=cfg["sigma"], lam=cfg["lam"])
        m2 = build_model("cir-mixed", a=cfg["a2"], sigma=cfg["sigma"], lam=cfg["lam"])
        stats = empirical_comparison(
            m1, m2, 0, (cfg["X0"], cfg["X0"]), cfg["n_paths"], grid, cfg["seed"], H=cfg["H"], tol=cfg["tol"], **common
        )
    elif cfg["kind"] == "domination":
        stats = bound_domination(_cir_params(cfg), grid, cfg["seed"], cfg["n_paths"], tol=cfg["tol"], **common)
    else:
        raise ConfigError(f"unknown compare kind '{cfg['kind']}'", field="kind")
    return stats.to_csv(), {"summary": stats.summary()}


def cmd_kernel(cfg: dict):
    H = cfg["H"]
    if H == 0.5 and not cfg["test_mode"]:
        raise ConfigError("H = 0.5 is allowed only with --test-mode", field="H")
    kg = solve_kernel(TimeGrid(cfg["T"], cfg["N"]), H, cfg["tol"], seed=cfg["seed"])
    return kg.to_csv(), {"residual": kg.residual_summary(), **kg.meta}


def cmd_price(cfg: dict):
    params = _cir_params(cfg)
    est = mc_price(params, cfg["K"], cfg["T"], cfg["n_paths"], cfg["N"], cfg["seed"],
                   threads=cfg["threads"], batch_size=cfg["batch_size"])
    out = {"mc_price": est.estimate, "mc_stderr": est.stderr, "n_paths": est.n_paths, "n_steps": est.n_steps}
    return json.dumps(out, indent=2, sort_keys=True) + "\n", {}


def cmd_bound(cfg: dict):
    params = _cir_params(cfg)
    mom = vasicek_moments(params, cfg["T"])
    out = {
        "upper_bound": upper_bound_price(params, cfg["K"], cfg["T"]),
        "mean": mom.mean,
        "variance": mom.variance,
        "wiener_part": mom.wiener_part,
        "fbm_part": mom.fbm_part,
    }
    return json.dumps(out, indent=2, sort_keys=True) + "\n", {}


def cmd_table(cfg: dict):
    rep = reproduce_table(
        seed=cfg["seed"], sigmas=cfg["sigmas"], strikes=cfg["strikes"], a=cfg["a"], X0=cfg["X0"], lam=cfg["lam"],
        H=cfg["H"], T=cfg["T"], steps=cfg["N"], n_paths=cfg["n_paths"], threads=cfg["threads"],
        batch_size=cfg["batch_size"],
    )
    meta = rep.metadata()
    meta.pop("config")
    return rep.to_csv(), meta


def cmd_hitting(cfg: dict):
    stats = hitting_experiment(
        cfg["a"], cfg["H"], cfg["X0"], cfg["horizon"], cfg["n_paths"], cfg["N"], cfg["seed"],
        sigma=cfg["sigma"], lam=cfg["lam"], bins=cfg["bins"], checkpoints=cfg["checkpoints"],
        threads=cfg["threads"], batch_size=cfg["batch_size"],
    )
    if cfg["svg"]:
        stats.to_svg(cfg["svg"])
    if cfg["nu0_out"]:
        Path(cfg["nu0_out"]).write_text(stats.nu0_csv())
    summary = stats.summary()
    summary.pop("config")
    return stats.histogram_csv(), summary


HANDLERS = {
    "simulate": cmd_simulate,
    "integrate": cmd_integrate,
    "norms": cmd_norms,
    "check": cmd_check,
    "compare": cmd_compare,
    "kernel": cmd_kernel,
    "price": cmd_price,
    "bound": cmd_bound,
    "table": cmd_table,
    "hitting": cmd_hitting,
}


def _emit(text: str, target: str | None, stream):
    if target:
        Path(target).write_text(text)
    else:
        stream.write(text)


def dispatch(command: str, cfg: dict, *, out: str | None = None, meta: str | None = None) -> int:
    artifact, extra = HANDLERS[command](cfg)
    _emit(artifact, out, sys.stdout)
    record = _plain({"command": command, "version": __version__, "config": cfg, **extra})
    meta_text = json.dumps(record, indent=2, sort_keys=True) + "\n"
    meta = meta or (f"{out}.meta.json" if out else None)
    _emit(meta_text, meta, sys.stderr)
    return 0


def main(argv: list[str] | None = None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_help()
            return 2
        cfg = resolve_config(args.command, args)
        return dispatch(args.command, cfg, out=args.out, meta=args.meta)
    except MixSDEError as exc:
        sys.stderr.write(json.dumps(exc.to_dict(), sort_keys=True) + "\n")
        return exc.exit_status
    except Exception as exc:  # noqa: BLE001 - the CLI contract is an error JSON, never a traceback
        sys.stderr.write(json.dumps({"error": "internal", "message": f"{type(exc).__name__}: {exc}"}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
