import numpy as np
import pytest

from mixsde.errors import ConfigError, ConvergenceError, GridError, HurstRangeError, ResourceLimitError
from mixsde.kernel import (
    KERNEL_CAP,
    decomposition_batch,
    decomposition_paths,
    kernel_functional,
    kernel_rhs,
    kk_convolution,
    outer_weights,
    simulate_decomposition,
    solve_cir_transformed,
    solve_kernel,
    transformed_increments,
)
from mixsde.noise import SeedSpec, TimeGrid, fbm_covariance, gen_wiener, wiener_increments
from mixsde.solver import CirParams, cir_march, cir_noise


@pytest.fixture(scope="module")
def kernel256():
    return solve_kernel(TimeGrid(1.0, 256), 0.8)


@pytest.fixture(scope="module")
def kernel128():
    # Residual scales with dt: about 1.3e-3 at dt = 1/128.
    return solve_kernel(TimeGrid(1.0, 128), 0.8, tol=2e-3)


@pytest.fixture(scope="module")
def zero_kernel():
    return solve_kernel(TimeGrid(1.0, 64), 0.5)


# --- right side ------------------------------------------------------------


@pytest.mark.parametrize(
    "t,s,H,expected",
    [(1.0, 0.0, 0.8, 0.48), (1.0, 0.75, 0.8, 0.48 * 0.25**-0.4), (3.0, 1.0, 0.5, 0.0)],
)
def test_kernel_rhs_values(t, s, H, expected):
    assert kernel_rhs(t, s, H) == pytest.approx(expected, rel=1e-12, abs=1e-15)


def test_kernel_rhs_quarter_lag_quoted_value():
    # The quoted 0.8365 is a loose rounding of 0.48 * 0.25**-0.4 = 0.83573.
    assert kernel_rhs(1.0, 0.75, 0.8) == pytest.approx(0.8365, rel=1e-3)


def test_kernel_rhs_rejects_diagonal():
    with pytest.raises(ConfigError):
        kernel_rhs(1.0, 1.0, 0.8)


def test_kk_convolution_matches_quadrature():
    from scipy.integrate import quad

    H, t, x = 0.8, 1.0, 0.6
    K = lambda u: H * (2 * H - 1) * u ** (2 * H - 2)  # noqa: E731
    ref, _ = quad(lambda y: K(t - y) * K(x - y), 0, x, weight="alg", wvar=(0, 0), limit=200)
    assert kk_convolution(t, x, H) == pytest.approx(
        quad(lambda y: K(t - y) * K(x - y), 0, x, limit=400, points=[x])[0], rel=1e-6
    )
    assert ref == pytest.approx(kk_convolution(t, x, H), rel=1e-6)


# --- solve -----------------------------------------------------------------


def test_half_gives_zero_kernel(zero_kernel):
    assert not zero_kernel.r.any()
    assert zero_kernel.residual == 0.0


def test_residual_certificate_at_256(kernel256):
    assert kernel256.residual <= 1e-3
    s = kernel256.residual_summary()
    assert s["passed"] and s["N"] == 256
    assert s["pairs_checked"] == 256 * 257 // 2


def test_kernel_is_finite_and_tabulated_below_diagonal(kernel256):
    r = kernel256.r
    assert np.all(np.isfinite(r))
    assert not np.triu(r).any()


def test_self_convergence_under_refinement():
    # r(t, .) sampled at s = t/4 and t/2 on rows t = 1/4, ..., 1, interpolated along the offsets.
    kernels = [solve_kernel(TimeGrid(1.0, n), 0.8, tol=1e-2) for n in (32, 64, 128, 256)]

    def sample(k):
        n = k.grid.steps
        rows = range(n // 4, n + 1, n // 4)
        return np.array([np.interp([0.25 * k.grid.nodes[i], 0.5 * k.grid.nodes[i]], k.offsets[:i], k.r[i, :i]) for i in rows])

    diffs = [np.max(np.abs(sample(a) - sample(b))) for a, b in zip(kernels[:-1], kernels[1:])]
    assert diffs[0] > diffs[1] > diffs[2]


def test_causality_rows_do_not_depend_on_the_horizon():
    # Same dt, half the horizon: the first 65 rows must agree.
    short = solve_kernel(TimeGrid(0.5, 64), 0.8, tol=2e-3)
    long = solve_kernel(TimeGrid(1.0, 128), 0.8, tol=2e-3)
    np.testing.assert_allclose(long.r[:65, :64], short.r[:65, :64], rtol=1e-10, atol=1e-12)


def test_loose_tolerance_failure_carries_worst_pair():
    with pytest.raises(ConvergenceError) as exc:
        solve_kernel(TimeGrid(1.0, 64), 0.8, tol=1e-3)
    assert exc.value.details["residual"] > 1e-3
    assert "t" in exc.value.details and "s" in exc.value.details


@pytest.mark.parametrize("H", [0.6, 0.75, 0.3])
def test_kernel_hurst_range(H):
    with pytest.raises(HurstRangeError):
        solve_kernel(TimeGrid(1.0, 16), H)


def test_kernel_grid_cap():
    with pytest.raises(ResourceLimitError):
        solve_kernel(TimeGrid(1.0, KERNEL_CAP + 1), 0.8)


def test_csv_layout(kernel128):
    lines = kernel128.to_csv().splitlines()
    assert lines[0] == "t,s,r"
    assert len(lines) == 1 + 128 * 129 // 2
    t, s, r = map(float, lines[1].split(","))
    assert t == pytest.approx(1 / 128) and s == pytest.approx(0.5 / 128)
    assert '"max_residual"' in kernel128.residual_json()


# --- decomposition ---------------------------------------------------------


def test_zero_kernel_decomposition_is_wtilde(zero_kernel):
    grid = zero_kernel.grid
    Wt = gen_wiener(grid, 1, SeedSpec(4))
    np.testing.assert_array_equal(simulate_decomposition(zero_kernel, Wt, grid).values, Wt.values)


def test_decomposition_grid_mismatch(kernel128):
    grid = TimeGrid(1.0, 64)
    with pytest.raises(GridError):
        decomposition_batch(kernel128, np.zeros((1, 64)), grid)


def test_decomposition_linear_in_wtilde(kernel128):
    grid = kernel128.grid
    d = wiener_increments(grid, 1, SeedSpec(1), range(2))[..., 0]
    lhs = decomposition_batch(kernel128, d[:1] + 2 * d[1:], grid)
    rhs = decomposition_batch(kernel128, d[:1], grid) + 2 * decomposition_batch(kernel128, d[1:], grid)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_decomposition_variance_and_covariance(kernel256):
    grid = kernel256.grid
    X = decomposition_paths(kernel256, grid, SeedSpec(21), 20000)
    n = X.shape[0]
    x1, xh = X[:, 256], X[:, 128]
    var = np.var(x1, ddof=1)
    assert abs(var - 2.0) <= 3 * var * np.sqrt(2.0 / (n - 1))
    prod = (xh - xh.mean()) * (x1 - x1.mean())
    cov_target = 0.5 + fbm_covariance(0.5, 1.0, 0.8)
    assert abs(prod.mean() - cov_target) <= 3 * prod.std(ddof=1) / np.sqrt(n)


def test_kernel_functional_uses_only_past_increments(kernel128):
    d = np.zeros((1, 128))
    d[0, 100] = 1.0
    I = kernel_functional(kernel128, d)
    assert not I[0, :101].any()
    assert I[0, 101] == kernel128.r[101, 100]


def test_outer_weights_causal(kernel128):
    A = outer_weights(kernel128)
    assert A.shape == (129, 128)
    assert not np.triu(A).any()


# --- transformed CIR ---------------------------------------------------------


def test_transformed_sigma_zero_is_deterministic(kernel128):
    grid = kernel128.grid
    p = CirParams(a=0.1, sigma=0.0)
    res = solve_cir_transformed(p, kernel128, gen_wiener(grid, 1, SeedSpec(2)), grid)
    np.testing.assert_allclose(res.path.values[:, 0], (1 + 0.1 * grid.dt) ** np.arange(129), rtol=1e-13)


def test_transformed_with_zero_kernel_is_plain_euler(zero_kernel):
    grid = zero_kernel.grid
    p = CirParams(a=0.1, sigma=1.0, H=0.5, test_mode=True)
    Wt = gen_wiener(grid, 1, SeedSpec(5))
    res = solve_cir_transformed(p, zero_kernel, Wt, grid)
    ref, _ = cir_march(p, Wt.increments[:, 0][None], grid)
    np.testing.assert_array_equal(res.path.values[:, 0], ref[0])


def test_transformed_rejects_pure_and_mismatched_H(kernel128):
    grid = kernel128.grid
    Wt = gen_wiener(grid, 1, SeedSpec(0))
    with pytest.raises(ConfigError):
        solve_cir_transformed(CirParams(mixed=False), kernel128, Wt, grid)
    with pytest.raises(ConfigError):
        solve_cir_transformed(CirParams(H=0.9), kernel128, Wt, grid)


def test_transformed_matches_direct_in_law(kernel256):
    grid = kernel256.grid
    p = CirParams(a=0.1, sigma=0.5)
    n = 20000
    dWt = wiener_increments(grid, 1, SeedSpec(77), range(n))[..., 0]
    x_trans, _ = cir_march(p, transformed_increments(kernel256, dWt, grid), grid, store=False)
    x_dir, _ = cir_march(p, cir_noise(p, grid, SeedSpec(78), range(n)), grid, store=False)
    se = np.sqrt(x_trans.var(ddof=1) / n + x_dir.var(ddof=1) / n)
    assert abs(x_trans.mean() - x_dir.mean()) <= 3 * se


def test_transformed_absorption_is_permanent(kernel128):
    grid = kernel128.grid
    p = CirParams(a=-2.0, sigma=2.0)
    res = solve_cir_transformed(p, kernel128, gen_wiener(grid, 1, SeedSpec(3)), grid)
    v = res.path.values[:, 0]
    assert v.min() >= 0
    if res.absorbed:
        k = int(np.ceil(res.nu0 / grid.dt))
        assert not v[k:].any()
