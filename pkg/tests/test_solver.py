import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixsde.errors import ConfigError, GridError, HurstRangeError, NonFiniteStateError, UnknownModelError
from mixsde.noise import SamplePath, SeedSpec, TimeGrid, gen_fbm, gen_wiener
from mixsde.solver import (
    Box,
    CirParams,
    build_model,
    check_hypotheses,
    cir_march,
    cir_noise,
    euler_mixed,
    euler_mixed_batch,
    linear_model,
    regularized_diffusion,
    regularized_diffusion_prime,
    solve_cir,
    solve_vasicek,
    transform_y,
    vasicek_march,
)


def test_linear_deterministic():
    g = TimeGrid(10.0, 4096)
    m = linear_model(0.1, 0.0, 0.0)
    zero = SamplePath(g, np.zeros(g.steps + 1))
    X = euler_mixed(m, 1.0, zero, zero, g)
    assert X.values[-1, 0] == pytest.approx((1 + 0.1 * g.dt) ** 4096, rel=1e-12)
    assert abs(X.values[-1, 0] - math.e) < 1e-2


def test_additive_telescopes():
    g = TimeGrid(1.0, 512)
    Z = gen_fbm(g, 0.8, SeedSpec(3))
    m = build_model("custom", target="custom_models:additive", a=0.0, c=1.0)
    X = euler_mixed(m, 2.0, None, Z, g)
    np.testing.assert_allclose(X.values, 2.0 + Z.values, rtol=0, atol=1e-12)


def test_custom_model_errors():
    with pytest.raises(UnknownModelError):
        build_model("custom", target="custom_models:nope")
    with pytest.raises(ConfigError):
        build_model("custom", target="custom_models:not_a_model")
    with pytest.raises(ConfigError):
        build_model("custom", target="no-colon")
    with pytest.raises(UnknownModelError):
        build_model("heston")


def test_non_finite_state():
    g = TimeGrid(1.0, 100)
    m = build_model("custom", target="custom_models:exploding")
    with pytest.raises(NonFiniteStateError) as exc, np.errstate(over="ignore"):
        euler_mixed(m, 1e100, None, None, g)
    assert exc.value.details["node"] >= 1


def test_grid_mismatch():
    m = linear_model()
    W = gen_wiener(TimeGrid(1.0, 64), 1, SeedSpec(0))
    Z = gen_fbm(TimeGrid(1.0, 64), 0.8, SeedSpec(0, 1))
    with pytest.raises(GridError):
        euler_mixed(m, 1.0, W, Z, TimeGrid(1.0, 128))


def test_noise_dimension_checked():
    g = TimeGrid(1.0, 8)
    with pytest.raises(ConfigError):
        euler_mixed_batch(linear_model(), 1.0, np.zeros((1, 8, 2)), np.zeros((1, 8, 1)), g)


@pytest.mark.parametrize(
    "mixed, lam, H, ok",
    [
        (True, 0.5, 0.76, True),
        (True, 0.5, 0.74, False),
        (False, 0.5, 0.67, True),
        (False, 0.5, 0.66, False),
        (True, 0.8, 0.61, True),
        (False, 0.8, 0.55, False),
    ],
)
def test_cir_hurst_ranges(mixed, lam, H, ok):
    if ok:
        CirParams(lam=lam, H=H, mixed=mixed)
    else:
        with pytest.raises(HurstRangeError):
            CirParams(lam=lam, H=H, mixed=mixed)


@pytest.mark.parametrize("kw", [{"lam": 1.0}, {"lam": 0.4}, {"sigma": -1.0}, {"X0": 0.0}])
def test_cir_param_validation(kw):
    with pytest.raises(ConfigError):
        CirParams(**kw)


def test_cir_sigma_zero():
    g = TimeGrid(10.0, 4096)
    p = CirParams(sigma=0.0)
    vals, nu0 = cir_march(p, np.zeros((1, 4096)), g)
    np.testing.assert_allclose(vals[0], (1 + 0.1 * g.dt) ** np.arange(4097), rtol=1e-12)
    assert abs(vals[0, -1] - math.exp(1.0)) < 1e-2
    assert np.isnan(nu0[0])


@pytest.mark.parametrize("sigma", [0.5, 1.0])
def test_cir_absorption(sigma):
    g = TimeGrid(10.0, 1024)
    p = CirParams(a=-0.2, sigma=sigma)
    dN = cir_noise(p, g, SeedSpec(5), range(400))
    X, nu0 = cir_march(p, dN, g)
    assert np.all(X >= 0)
    hit = np.isfinite(nu0)
    assert hit.any()
    for k in np.flatnonzero(hit):
        i = int(np.ceil(nu0[k] / g.dt - 1e-9))
        assert np.all(X[k, i:] == 0.0)
        assert np.all(X[k, : i] > 0.0)


def test_solve_cir_wrappers():
    g = TimeGrid(1.0, 256)
    p = CirParams(mixed=False, test_mode=False)
    B = gen_fbm(g, 0.8, SeedSpec(1, 1))
    W = gen_wiener(g, 1, SeedSpec(1, 0))
    with pytest.raises(ConfigError):
        solve_cir(p, W, B, g)
    with pytest.raises(ConfigError):
        solve_cir(CirParams(), None, B, g)
    res = solve_cir(CirParams(), W, B, g)
    direct, _ = cir_march(CirParams(), cir_noise(CirParams(), g, SeedSpec(1), [0]), g)
    np.testing.assert_allclose(res.path.values[:, 0], direct[0], rtol=1e-12, atol=1e-14)


def test_regularized_diffusion_smooth():
    eps = 0.01
    assert regularized_diffusion(eps, eps) == pytest.approx(math.sqrt(eps), rel=1e-12)
    assert regularized_diffusion_prime(eps, eps) == pytest.approx(0.5 / math.sqrt(eps), rel=1e-12)
    assert regularized_diffusion(0.0, eps) == 0.0 and regularized_diffusion(-1.0, eps) == 0.0
    assert regularized_diffusion_prime(0.0, eps) == 0.0
    x = np.linspace(-0.02, 0.05, 2001)
    v = regularized_diffusion(x, eps)
    assert np.all(np.diff(v) >= 0)
    assert np.all(np.abs(np.diff(v)) < 0.01)


def test_regularized_needs_half():
    with pytest.raises(ConfigError):
        cir_march(CirParams(lam=0.7), np.zeros((1, 8)), TimeGrid(1.0, 8), eps=0.1)


def test_vasicek_deterministic_exact():
    g = TimeGrid(10.0, 4096)
    Z = vasicek_march(0.05, 0.0, 1.0, np.zeros((1, 4096)), g)
    np.testing.assert_allclose(Z[0], np.exp(0.05 * g.nodes), rtol=1e-14)


def test_solve_vasicek_linear_in_noise():
    g = TimeGrid(1.0, 128)
    W = gen_wiener(g, 1, SeedSpec(2, 0))
    B = gen_fbm(g, 0.8, SeedSpec(2, 1))
    z1 = solve_vasicek(0.1, 1.0, 1.0, W, B, g).values
    z2 = solve_vasicek(0.1, 2.0, 1.0, W, B, g).values
    base = np.exp(0.1 * g.nodes)[:, None]
    np.testing.assert_allclose(z2 - base, 2 * (z1 - base), rtol=1e-12, atol=1e-14)


def test_transform_y():
    g = TimeGrid(1.0, 4)
    X = SamplePath(g, [4.0, 1.0, 0.0, 0.0, 9.0])
    np.testing.assert_allclose(transform_y(X, 0.5).values[:, 0], [2.0, 1.0, 0.0, 0.0, 3.0])


@settings(max_examples=15, deadline=None)
@given(a=st.floats(-1.0, 1.0), sigma=st.floats(0.0, 2.0), seed=st.integers(0, 10_000))
def test_cir_never_negative(a, sigma, seed):
    g = TimeGrid(5.0, 256)
    p = CirParams(a=a, sigma=sigma)
    X, nu0 = cir_march(p, cir_noise(p, g, seed, range(20)), g)
    assert np.all(X >= 0.0)
    assert np.all(np.isnan(nu0) | ((nu0 >= 0) & (nu0 <= 5.0)))


# --- hypothesis checks ---------------------------------------------------------


def test_linear_model_passes():
    rep = check_hypotheses(linear_model(), Box(0.0, 1.0, (-5.0,), (5.0,)), samples=500)
    assert rep.passed
    assert rep["M2"].value == pytest.approx(1.1, rel=1e-4)


def test_cir_fails_lipschitz_with_witness():
    rep = check_hypotheses(CirParams().model(), Box(0.0, 1.0, (0.0,), (10.0,)), samples=500)
    m2 = rep["M2"]
    assert not m2.passed
    assert m2.witness["x"][0] < 1e-6


@pytest.mark.parametrize("beta, ok", [(0.5, False), (0.25, True)])
def test_time_holder(beta, ok):
    m = build_model("custom", target="custom_models:rough_in_time", power=0.3)
    rep = check_hypotheses(m, Box(0.0, 1.0, (0.0,), (1.0,)), samples=500, beta=beta)
    assert rep["M3"].passed is ok


def test_evaluator_error_reported():
    m = build_model("custom", target="custom_models:broken")
    rep = check_hypotheses(m, Box(0.0, 1.0, (0.0,), (10.0,)), samples=200)
    assert not rep["M1"].passed
    assert rep["M1"].witness["x"][0] > 5.0


def test_report_json_round_trip():
    import json

    rep = check_hypotheses(linear_model(), Box(0.0, 1.0, (0.0,), (1.0,)), samples=100)
    d = json.loads(rep.to_json())
    assert [c["name"] for c in d["conditions"]] == ["M1", "M2", "M3"]
    assert "counterexample" in d["note"]
