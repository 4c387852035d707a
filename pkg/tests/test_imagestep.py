"""Image gradients (finite-difference checked) and step-size policies."""

import numpy as np
import pytest

from phasedict import (
    ArmijoPolicy,
    HeuristicPolicy,
    PatchGeometry,
    data_fit_value,
    grad_data_fit,
    grad_patch_fit,
    measure,
    patch_fit_value,
    project_box,
    x_step_armijo,
    x_step_heuristic,
)
from test_operators import make_operator


def finite_difference(fun, x, h_scale=1e-6):
    """Central-difference gradient with per-entry step size."""
    grad = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        h = h_scale * (1.0 + abs(x[idx]))
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        grad[idx] = (fun(xp) - fun(xm)) / (2.0 * h)
    return grad


@pytest.mark.parametrize("kind", ["gx", "gxg", "gxh", "cdp"])
def test_grad_data_fit_matches_finite_differences(kind):
    n1, n2 = (5, 5) if kind == "gxg" else (5, 4)
    op = make_operator(kind, n1, n2, seed=8)
    rng = np.random.default_rng(9)
    x_true = rng.random((n1, n2))
    mset = measure(op, x_true, 15.0, 3)
    x = rng.random((n1, n2))
    want = finite_difference(lambda z: data_fit_value(z, mset), x)
    got = grad_data_fit(x, mset)
    scale = max(np.abs(want).max(), 1.0)
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-4 * scale)


@pytest.mark.parametrize("geom", [
    PatchGeometry(3, 3, 3, 3, 6, 9),
    PatchGeometry(3, 3, 2, 2, 7, 9),
    PatchGeometry(4, 2, 1, 2, 6, 8),
])
def test_grad_patch_fit_matches_finite_differences(geom):
    rng = np.random.default_rng(10)
    x = rng.random((geom.image_rows, geom.image_cols))
    d = rng.standard_normal((geom.patch_size, 2 * geom.patch_size))
    codes = rng.standard_normal((2 * geom.patch_size, geom.patch_count)) * 0.2
    mu = 0.7
    synth = d @ codes
    want = finite_difference(
        lambda z: patch_fit_value(z, synth, mu, geom), x)
    got = grad_patch_fit(x, d, codes, mu, geom)
    scale = max(np.abs(want).max(), 1.0)
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-4 * scale)


def test_patch_fit_value_zero_mu_short_circuits():
    geom = PatchGeometry(2, 2, 2, 2, 4, 4)
    x = np.random.default_rng(0).random((4, 4))
    assert patch_fit_value(x, np.zeros((4, 4)), 0.0, geom) == 0.0


def test_data_fit_value_hand_case():
    # 1x1 image, operator G = [[2]], y = 9: f = 0.25*(9 - 4x^2)^2
    from phasedict import GaussianLeft, MeasurementSet
    op = GaussianLeft(matrix=np.array([[2.0 + 0j]]))
    mset = MeasurementSet(measurements=np.array([[9.0]]), operator=op,
                          image_shape=(1, 1))
    x = np.array([[0.5]])
    assert np.isclose(data_fit_value(x, mset), 0.25 * (9 - 1.0) ** 2)
    # gradient: d/dx 0.25*(4x^2-9)^2 = (4x^2-9)*4x = (1-9)*2 = -16
    assert np.isclose(grad_data_fit(x, mset)[0, 0], -16.0)


def test_project_box():
    z = np.array([[-0.5, 0.25], [1.5, 1.0]])
    np.testing.assert_array_equal(project_box(z),
                                  [[0.0, 0.25], [1.0, 1.0]])


def quad_eval(center):
    return lambda img: 0.5 * float(np.sum((img - center) ** 2))


def test_heuristic_step_converges_on_toy_quadratic():
    # f(x) = 0.5*(x - 0.5)^2 on a single pixel starting at 0
    center = np.array([[0.5]])
    evaluate = quad_eval(center)
    x = np.array([[0.0]])
    policy = HeuristicPolicy(gamma=1e4)
    for _ in range(30):
        grad = x - center
        result, policy = x_step_heuristic(x, grad, policy, evaluate)
        x = result.image
    assert abs(x[0, 0] - 0.5) < 1e-6


def test_heuristic_zero_gradient_is_accepted_no_move():
    x = np.array([[0.3, 0.7]])
    policy = HeuristicPolicy(gamma=2.0)
    result, new_policy = x_step_heuristic(
        x, np.zeros_like(x), policy, quad_eval(x))
    assert result.trials == 1
    assert not result.stalled
    np.testing.assert_array_equal(result.image, x)
    assert result.gamma == 2.0
    assert np.isclose(new_policy.gamma, 2.0 * 1.68)


def test_heuristic_regrows_accepted_step():
    center = np.array([[0.5]])
    x = np.array([[0.0]])
    policy = HeuristicPolicy(gamma=0.25)
    result, new_policy = x_step_heuristic(
        x, x - center, policy, quad_eval(center))
    assert result.gamma == 0.25  # first trial already decreases
    assert result.trials == 1
    assert np.isclose(new_policy.gamma, 0.25 * 1.68)


def test_heuristic_halves_until_decrease():
    # start with a huge step that overshoots past the symmetric point;
    # strict decrease needs |x_new - c| < |x - c|
    center = np.array([[0.5]])
    x = np.array([[0.25]])
    policy = HeuristicPolicy(gamma=8.0)
    result, _ = x_step_heuristic(x, x - center, policy, quad_eval(center))
    assert result.trials > 1
    assert result.objective_after < result.objective_before


def test_heuristic_stall_returns_unchanged():
    x = np.array([[0.4]])
    policy = HeuristicPolicy(gamma=1.0, max_trials=5)
    # a constant objective can never strictly decrease
    result, new_policy = x_step_heuristic(
        x, np.ones_like(x), policy, lambda img: 1.0)
    assert result.stalled
    assert result.gamma == 0.0
    np.testing.assert_array_equal(result.image, x)
    # regrowth applies to the last tried (un-halved) value: the final
    # halving is undone before scaling
    assert np.isclose(new_policy.gamma, 1.0 * 0.5 ** 4 * 1.68)


def test_armijo_accepts_exact_quadratic_step():
    # f(x) = 0.5*(x - 0.25)^2 from x = 0.5 with eta_bar = 1: the unit step
    # hits the minimizer and satisfies the bound with equality
    center = np.array([[0.25]])
    x = np.array([[0.5]])
    policy = ArmijoPolicy(eta_bar=1.0)
    result, new_policy = x_step_armijo(
        x, x - center, policy, quad_eval(center))
    assert result.trials == 1
    assert result.gamma == 1.0
    np.testing.assert_allclose(result.image, center)
    assert result.armijo_margin >= 0.0
    assert new_policy.eta_bar == 1.0


def test_armijo_backtracks_and_warm_starts():
    center = np.array([[0.5]])
    x = np.array([[0.0]])
    policy = ArmijoPolicy(eta_bar=64.0)
    result, new_policy = x_step_armijo(
        x, x - center, policy, quad_eval(center))
    assert result.trials > 1
    assert result.gamma < 64.0
    assert new_policy.eta_bar == result.gamma
    # decrease bound held at acceptance
    diff = result.image - x
    lhs = result.objective_after - result.objective_before
    assert lhs <= -0.5 / result.gamma * float(np.sum(diff * diff)) + 1e-15


def test_armijo_stall_on_ascent_direction():
    center = np.array([[0.5]])
    x = np.array([[0.25]])
    policy = ArmijoPolicy(eta_bar=1.0, max_trials=25)
    # feeding the negated gradient walks uphill; no gamma can pass
    result, new_policy = x_step_armijo(
        x, -(x - center), policy, quad_eval(center))
    assert result.stalled
    assert result.gamma == 0.0
    np.testing.assert_array_equal(result.image, x)
    assert new_policy.eta_bar == 1.0


@pytest.mark.parametrize("seed", range(5))
def test_armijo_margin_nonnegative_on_random_quadratics(seed):
    rng = np.random.default_rng(seed + 20)
    n = 6
    a = rng.standard_normal((n, n))
    q = a.T @ a + 0.1 * np.eye(n)
    c = rng.random((n, 1)).T

    def evaluate(img):
        v = img.ravel() - c.ravel()
        return 0.5 * float(v @ q @ v)

    x = rng.random((1, n))
    grad = ((x.ravel() - c.ravel()) @ q).reshape(1, n)
    policy = ArmijoPolicy(eta_bar=10.0)
    result, _ = x_step_armijo(x, grad, policy, evaluate)
    assert not result.stalled
    assert result.armijo_margin >= 0.0
    assert result.objective_after <= result.objective_before


def test_steps_respect_box_constraints():
    center = np.array([[2.0]])  # pulls the iterate past the upper bound
    x = np.array([[0.9]])
    policy = HeuristicPolicy(gamma=10.0)
    result, _ = x_step_heuristic(x, x - center, policy, quad_eval(center))
    assert 0.0 <= result.image[0, 0] <= 1.0
    apolicy = ArmijoPolicy(eta_bar=10.0)
    result, _ = x_step_armijo(x, x - center, apolicy, quad_eval(center))
    assert 0.0 <= result.image[0, 0] <= 1.0
