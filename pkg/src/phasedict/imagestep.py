"""Projected gradient steps on the image variable.

The smooth objective for the image is
    f(X) = 0.25 * ||Y - |F(X)|^2||_F^2  +  (mu/2) * ||E(X) - D A||_F^2
with F the measurement operator and E the patch extractor; steps move
along -grad f and project onto the box [0, 1].  Two step-size policies
are provided: a halve-until-decrease heuristic with 1.68x regrowth, and a
projected-Armijo backtracking line search.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import operators as ops
from . import patches as po


def data_fit_value(image: np.ndarray, mset) -> float:
    """0.25 * ||Y - |F(X)|^2||_F^2."""
    resid = ops.squared_modulus(ops.forward(mset.operator, image))
    resid = resid - mset.measurements
    return 0.25 * float(np.sum(resid * resid))


def grad_data_fit(image: np.ndarray, mset) -> np.ndarray:
    """Gradient Re(F^*(F(X) * (|F(X)|^2 - Y))) of the data-fit term."""
    fx = ops.forward(mset.operator, image)
    weight = ops.squared_modulus(fx) - mset.measurements
    return np.real(ops.adjoint(mset.operator, fx * weight))


def patch_fit_value(image: np.ndarray, synth: np.ndarray, mu: float,
                    geom: po.PatchGeometry) -> float:
    """(mu/2) * ||E(X) - synth||_F^2 for a fixed patch synthesis D A."""
    if mu == 0.0:
        return 0.0
    resid = po.extract(image, geom) - synth
    return 0.5 * mu * float(np.sum(resid * resid))


def grad_patch_fit(image: np.ndarray, dictionary: np.ndarray,
                   codes: np.ndarray, mu: float,
                   geom: po.PatchGeometry) -> np.ndarray:
    """Gradient mu * E^*(E(X) - D A); E^* sums contributions per pixel."""
    resid = po.extract(image, geom) - dictionary @ codes
    return mu * po.extract_adjoint(resid, geom)


def project_box(z: np.ndarray) -> np.ndarray:
    """Clamp entries to [0, 1]."""
    return np.clip(z, 0.0, 1.0)


@dataclass(frozen=True)
class HeuristicPolicy:
    """Halving line search with regrowth.

    Starts each step at gamma; candidates that fail to decrease the
    objective halve the step, up to max_trials attempts.  The next step
    starts at growth times the accepted (or last tried) value.
    """

    gamma: float
    growth: float = 1.68
    max_trials: int = 100


@dataclass(frozen=True)
class ArmijoPolicy:
    """Projected-gradient Armijo rule.

    Accepts the largest gamma in {eta_bar * eta^k} whose projected step
    satisfies f(P(X - gamma*G)) - f(X) <= -(1/(2*gamma)) * ||P(X - gamma*G) - X||^2;
    eta_bar warm-starts at the previously accepted gamma.
    """

    eta_bar: float
    eta: float = 0.5
    max_trials: int = 10_000


@dataclass(frozen=True)
class StepResult:
    """Outcome of one projected gradient step."""

    image: np.ndarray
    gamma: float            # accepted step size, 0.0 on stall
    trials: int
    stalled: bool
    objective_before: float
    objective_after: float
    armijo_margin: float    # rhs - lhs >= 0 at acceptance, NaN for heuristic


def x_step_heuristic(image, grad, policy: HeuristicPolicy, evaluate):
    """Accept the first halved step that strictly decreases the objective.

    evaluate maps a candidate image to the smooth objective value.  A
    candidate identical to the current image (zero or vanishing gradient)
    is accepted as a no-move step so the search terminates; the step size
    still regrows for the next round.  After max_trials failures the image
    is returned unchanged with the stall flag set.
    """
    f_cur = evaluate(image)
    gamma = policy.gamma
    for trial in range(1, policy.max_trials + 1):
        candidate = project_box(image - gamma * grad)
        if np.array_equal(candidate, image):
            return StepResult(image, gamma, trial, False, f_cur, f_cur,
                              np.nan), replace(policy, gamma=gamma * policy.growth)
        f_new = evaluate(candidate)
        if f_new < f_cur:
            return StepResult(candidate, gamma, trial, False, f_cur, f_new,
                              np.nan), replace(policy, gamma=gamma * policy.growth)
        gamma *= 0.5
    gamma *= 2.0  # undo the final halving: regrow from the last tried value
    return StepResult(image, 0.0, policy.max_trials, True, f_cur, f_cur,
                      np.nan), replace(policy, gamma=gamma * policy.growth)


def x_step_armijo(image, grad, policy: ArmijoPolicy, evaluate):
    """Largest gamma in {eta_bar * eta^k} passing the projected Armijo test.

    The accepted step satisfies
        f(candidate) - f(X) <= -(1/(2*gamma)) * ||candidate - X||_F^2
    and the accepted gamma seeds eta_bar for the next step.  Exceeding
    max_trials returns the image unchanged with the stall flag set.
    """
    f_cur = evaluate(image)
    gamma = policy.eta_bar
    for trial in range(1, policy.max_trials + 1):
        candidate = project_box(image - gamma * grad)
        diff = candidate - image
        lhs = evaluate(candidate) - f_cur
        rhs = -0.5 / gamma * float(np.sum(diff * diff))
        if lhs <= rhs:
            return StepResult(candidate, gamma, trial, False, f_cur,
                              lhs + f_cur, rhs - lhs), replace(policy, eta_bar=gamma)
        gamma *= policy.eta
    return StepResult(image, 0.0, policy.max_trials, True, f_cur, f_cur,
                      np.nan), policy
