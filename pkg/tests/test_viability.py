import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixsde.errors import BoundarySpecError, ConfigError, StructuralError
from mixsde.noise import SeedSpec, TimeGrid, gen_fbm
from mixsde.solver import Box, MixedModel, cir_model, linear_model
from mixsde.viability import (
    BoundarySpec,
    check_comparison,
    check_positivity,
    check_viability,
    check_viability_random,
    empirical_comparison,
    empirical_viability,
    half_space,
    quadratic_boundary,
    sample_box,
    smoothed_drift_model,
    viability_margins,
)


def constant_noise_model(b=1.0):
    return MixedModel(
        1, 1, 0,
        drift=lambda t, x: np.zeros(x.shape),
        diff_w=lambda t, x: np.full(x.shape[:-1] + (1, 1), b),
    )


def affine_model(A, a0, B, b0):
    """dX = (A x + a0) dt + (B x + b0) dW with one Wiener component."""
    A, a0, B, b0 = (np.asarray(v, dtype=float) for v in (A, a0, B, b0))
    return MixedModel(
        A.shape[0], 1, 0,
        drift=lambda t, x: x @ A.T + a0,
        diff_w=lambda t, x: (x @ B.T + b0)[..., None, :],
    )


def coupled_model(sigma=0.3):
    """a = (x_2, 0), b = sigma (x_1, x_2): positive on the quadrant only."""
    return MixedModel(
        2, 1, 0,
        drift=lambda t, x: np.stack([x[..., 1], np.zeros(x.shape[:-1])], axis=-1),
        diff_w=lambda t, x: sigma * x[..., None, :],
    )


# --- boundary specifications ---------------------------------------------


def test_half_space_values():
    spec = half_space(1, d=3, shift=2.0)
    x = np.array([[0.0, 2.5, 1.0], [0.0, 1.0, 0.0]])
    np.testing.assert_array_equal(spec.phi(x), [0.5, -1.0])
    np.testing.assert_array_equal(spec.grad(x), [[0, 1, 0], [0, 1, 0]])
    assert spec.hess(x).shape == (2, 3, 3)
    assert list(spec.contains(x)) == [True, False]


def test_quadratic_boundary_projection_lands_on_circle():
    spec = quadratic_boundary(-np.eye(2), [0.0, 0.0], 1.0)
    x = np.random.default_rng(0).normal(size=(50, 2)) * 3
    p = spec.project(x)
    np.testing.assert_allclose(np.hypot(p[:, 0], p[:, 1]), 1.0, atol=1e-9)


def test_quadratic_boundary_symmetrises():
    spec = quadratic_boundary([[1.0, 2.0], [0.0, 1.0]], [0.0, 0.0], 0.0)
    x = np.array([[1.0, 1.0]])
    assert spec.phi(x)[0] == pytest.approx(4.0)
    np.testing.assert_allclose(spec.hess(x)[0], [[2.0, 2.0], [2.0, 2.0]])


# --- viability -------------------------------------------------------------


def test_cir_viable_on_half_line():
    t, x = sample_box(Box(0, 1, (0.0,), (5.0,)), 200, seed=1)
    rep = check_viability(cir_model(0.1, 1.0), half_space(), t, x)
    assert rep.passed
    assert rep["VM1"].value == 0.0 and rep["VM2"].value == 0.0


def test_cir_negative_drift_still_viable():
    rep = check_viability(cir_model(-5.0, 1.0), half_space(), [0.0, 0.5], [[1.0], [2.0]])
    assert rep.passed


def test_constant_noise_fails_tangency_with_witness():
    rep = check_viability(constant_noise_model(0.7), half_space(), [0.3], [[4.0]])
    assert not rep.passed
    assert rep["VM2"].value == pytest.approx(0.7)
    assert rep["VM2"].witness["x"] == [0.0]


def test_no_boundary_points_without_projection():
    with pytest.raises(BoundarySpecError):
        check_viability(cir_model(0.1, 1.0), half_space(), [0.0], [[3.0]], project=False)


def test_vanishing_gradient_on_boundary_is_rejected():
    spec = BoundarySpec(
        phi=lambda x: -(x[:, 0] ** 2),
        grad=lambda x: -2 * x,
        hess=lambda x: np.full((x.shape[0], 1, 1), -2.0),
    )
    with pytest.raises(BoundarySpecError, match="gradient"):
        check_viability(cir_model(0.1, 1.0), spec, [0.0], [[0.0]], project=False)


def _rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


@settings(max_examples=20, deadline=None)
@given(
    q=st.tuples(st.floats(0.3, 3.0), st.floats(0.3, 3.0)),
    theta=st.floats(0, np.pi),
    coef=st.lists(st.floats(-1, 1), min_size=10, max_size=10),
)
def test_sampled_margin_matches_dense_boundary_oracle(q, theta, coef):
    # Ellipse D = {1 - x^T Q x >= 0} with affine drift and diffusion.
    R = _rotation(theta)
    Q = R @ np.diag(q) @ R.T
    spec = quadratic_boundary(-Q, [0.0, 0.0], 1.0)
    c = np.array(coef)
    model = affine_model(c[:4].reshape(2, 2), c[4:6], c[6:10].reshape(2, 2), [0.0, 0.0])

    s = np.linspace(0, 2 * np.pi, 200_001)
    xb = (R @ (np.stack([np.cos(s), np.sin(s)]) / np.sqrt(np.array(q))[:, None])).T
    alpha_dense, beta_dense = viability_margins(model, spec, np.zeros(len(s)), xb)

    rng = np.random.default_rng(0)
    cloud = rng.normal(size=(4000, 2))
    rep = check_viability(model, spec, np.zeros(len(cloud)), cloud)
    scale = 1.0 + np.max(np.abs(alpha_dense))
    # Min over a subset of the boundary can only sit above the dense min.
    assert rep["VM1"].value >= alpha_dense.min() - 1e-6 * scale
    assert rep["VM1"].value == pytest.approx(alpha_dense.min(), abs=2e-2 * scale)
    assert rep["VM2"].value == pytest.approx(beta_dense.max(), abs=2e-2 * (1 + beta_dense.max()))


def test_enlarging_the_cloud_never_raises_the_margin():
    model = affine_model([[0.2, -0.5], [0.3, 0.1]], [0.1, -0.2], np.eye(2) * 0.3, [0.0, 0.0])
    spec = quadratic_boundary(-np.eye(2), [0.0, 0.0], 1.0)
    x = np.random.default_rng(3).normal(size=(600, 2))
    t = np.zeros(600)
    small = check_viability(model, spec, t[:100], x[:100])
    big = check_viability(model, spec, t, x)
    assert big["VM1"].value <= small["VM1"].value
    assert big["VM2"].value >= small["VM2"].value


# --- positivity ----------------------------------------------------------


def test_cir_positivity():
    assert check_positivity(cir_model(0.1, 1.0), 1, 1.0).passed


def test_negative_constant_drift_fails_positivity():
    model = MixedModel(1, 0, 0, drift=lambda t, x: np.full(x.shape, -1.0))
    rep = check_positivity(model, 1, 1.0)
    assert not rep["P2:drift"].passed
    assert rep["P2:drift"].value == -1.0
    assert rep["P2:drift"].witness["x"] == [0.0]


def test_negative_initial_state_fails_p1():
    rep = check_positivity(cir_model(0.1, 1.0), 1, -0.5)
    assert not rep["P1"].passed


def test_coupled_drift_needs_the_second_coordinate_restricted():
    model = coupled_model()
    assert check_positivity(model, 2, [1.0, 1.0]).passed
    rep = check_positivity(model, 1, [1.0, 1.0])
    assert not rep["P2:drift"].passed
    assert rep["P2:drift"].witness["x"][1] < 0


def test_dprime_out_of_range():
    with pytest.raises(ConfigError):
        check_positivity(coupled_model(), 3, [1.0, 1.0])


# --- comparison ------------------------------------------------------------


def test_identical_models_pass_with_zero_margin():
    m = cir_model(0.1, 1.0)
    rep = check_comparison(m, m, 0, (1.0, 1.0))
    assert rep.passed
    assert rep["CM1"].value == 0.0 and rep["CM2"].value == 0.0


def test_ordered_drifts_pass():
    rep = check_comparison(cir_model(0.05, 1.0), cir_model(0.1, 1.0), 0, (1.0, 1.0))
    assert rep.passed
    assert rep["CM2"].value >= 0


def test_reversed_drifts_fail_with_witness():
    rep = check_comparison(cir_model(0.1, 1.0), cir_model(0.05, 1.0), 0, (1.0, 1.0))
    assert not rep["CM2"].passed
    assert rep["CM2"].witness["x1"] == rep["CM2"].witness["x2"]
    assert rep["CM2"].value < 0


def test_initial_order_checked():
    m = cir_model(0.1, 1.0)
    assert not check_comparison(m, m, 0, (2.0, 1.0))["CM1"].passed


def test_different_diffusions_are_a_structural_error():
    with pytest.raises(StructuralError):
        check_comparison(cir_model(0.1, 1.0), cir_model(0.1, 2.0), 0, (1.0, 1.0))


def test_diffusion_depending_on_other_coordinates_is_structural_error():
    m = coupled_model()
    with pytest.raises(StructuralError):
        check_comparison(m, m, 0, ([1.0, 1.0], [1.0, 1.0]))


def test_report_serialises():
    rep = check_comparison(cir_model(0.05, 1.0), cir_model(0.1, 1.0), 0, (1.0, 1.0))
    d = rep.to_dict()
    assert d["passed"] is True
    assert [c["name"] for c in d["conditions"]] == ["CM1", "CM2"]
    assert '"CM2"' in rep.to_json()


# --- empirical checks ------------------------------------------------------


GRID = TimeGrid(1.0, 256)


@pytest.mark.parametrize("seed", [0, 7, 123])
def test_identical_models_never_violate(seed):
    m = linear_model()
    s = empirical_comparison(m, m, 0, (1.0, 1.0), 50, GRID, seed, tol=1e-12)
    assert s.n_violations == 0
    assert s.max_violation == 0.0


def test_cir_drift_ordering_holds_on_paths():
    s = empirical_comparison(cir_model(0.05, 1.0), cir_model(0.1, 1.0), 0, (1.0, 1.0), 1000, TimeGrid(10.0, 512), 3)
    assert s.n_violations == 0
    assert s.n_nodes == 513


def test_reversed_drifts_violate_on_paths():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = empirical_comparison(cir_model(0.1, 1.0), cir_model(0.05, 1.0), 0, (1.0, 1.0), 200, GRID, 3)
    assert s.n_violations > 0
    assert s.max_violation > 0
    assert s.path_flags.any()


def test_reversed_drifts_warn():
    with pytest.warns(UserWarning, match="hypotheses"):
        empirical_comparison(cir_model(0.1, 1.0), cir_model(0.05, 1.0), 0, (1.0, 1.0), 4, GRID, 3)


def test_empirical_comparison_csv():
    m = linear_model()
    csv = empirical_comparison(m, m, 0, (1.0, 1.0), 3, GRID, 0).to_csv().splitlines()
    assert csv[0] == "path,violated,max_violation"
    assert len(csv) == 4


def test_cir_stays_in_half_line():
    s = empirical_viability(cir_model(0.1, 1.0), half_space(), 1.0, 300, GRID, 5)
    assert s.n_violations == 0
    assert s.extra["min_phi"] >= 0


def test_tangency_violation_shows_on_paths():
    s = empirical_viability(constant_noise_model(1.0), half_space(), 0.1, 200, GRID, 5)
    assert s.violation_fraction > 0


def test_initial_state_outside_domain_rejected():
    with pytest.raises(BoundarySpecError):
        empirical_viability(cir_model(0.1, 1.0), half_space(shift=2.0), 1.0, 10, GRID, 0)


def test_empirical_viability_thread_invariant():
    m = cir_model(0.1, 1.0)
    a = empirical_viability(m, half_space(), 1.0, 40, GRID, SeedSpec(9), threads=1, batch_size=7)
    b = empirical_viability(m, half_space(), 1.0, 40, GRID, SeedSpec(9), threads=4, batch_size=16)
    assert a.summary() == b.summary()


# --- random-coefficient reformulation ------------------------------------


def _drivers(k, H=0.8):
    grid = TimeGrid(1.0, 256)
    return [gen_fbm(grid, H, SeedSpec(s)) for s in range(k)]


def test_smoothed_model_has_no_hoelder_noise():
    m = smoothed_drift_model(cir_model(0.1, 1.0), _drivers(1)[0], 16)
    assert m.r == 0 and m.m == 1
    x = np.array([[1.0], [2.0]])
    assert m.a(np.array([[0.5], [0.5]]), x).shape == (2, 1)


def test_smoothed_model_checks_dimension():
    with pytest.raises(ConfigError):
        smoothed_drift_model(MixedModel(1, 0, 0, drift=lambda t, x: x), _drivers(1)[0], 4)


def test_random_coefficient_viability_cir():
    t, x = sample_box(Box(0, 1, (0.0,), (3.0,)), 100, seed=2)
    rep = check_viability_random(cir_model(0.1, 1.0), half_space(), _drivers(3), 16, t, x)
    assert rep.passed
    assert [c.name for c in rep.conditions] == ["V1", "V2"]
    assert "realization" in rep["V1"].witness


def test_random_coefficient_viability_reports_worst_realization():
    # Additive Hoelder noise turns into a drift of either sign: V1 fails somewhere.
    m = MixedModel(
        1, 0, 1,
        drift=lambda t, x: np.zeros(x.shape),
        diff_z=lambda t, x: np.ones(x.shape[:-1] + (1, 1)),
    )
    t = np.linspace(0.1, 1.0, 50)
    rep = check_viability_random(m, half_space(), _drivers(4), 16, t, np.ones((50, 1)))
    assert not rep["V1"].passed
