"""Sparse code updates: one-step proximal gradient (l1) and greedy OMP (l0).

Each patch column is treated independently.  The l1 route takes a single
ISTA step per column on 0.5*||D a - x||^2 + (lambda/mu)*||a||_1 with
backtracking on the smooth part; the l0 route recomputes each column from
scratch by orthogonal matching pursuit under a hard sparsity cap.
"""

from dataclasses import dataclass

import numpy as np


def soft_threshold(z: np.ndarray, tau: float) -> np.ndarray:
    """Entrywise shrinkage max{0, |z| - tau} * sign(z)."""
    if tau < 0:
        raise ValueError("threshold must be >= 0")
    return np.sign(z) * np.maximum(np.abs(z) - tau, 0.0)


@dataclass(frozen=True)
class IstaConfig:
    """Settings for the per-column ISTA step.

    reg is the ratio lambda/mu multiplying the l1 term.  Backtracking
    starts from a per-column Lipschitz estimate (initial_lipschitz when no
    warm start is available), grows it by backtrack_growth on each failed
    sufficient-decrease check, and gives up after max_backtracks trials.
    Each step first probes one shrink below the carried estimate so the
    step sizes can track the local curvature instead of staying pinned at
    a conservative initial bound.
    """

    reg: float
    initial_lipschitz: float
    backtrack_growth: float = 2.0
    max_backtracks: int = 60

    def __post_init__(self):
        if self.reg < 0:
            raise ValueError("reg must be >= 0")
        if self.initial_lipschitz <= 0:
            raise ValueError("initial_lipschitz must be > 0")
        if self.backtrack_growth <= 1:
            raise ValueError("backtrack_growth must be > 1")


def lipschitz_bound(dictionary: np.ndarray) -> float:
    """Upper bound ||D||_1 * ||D||_inf on the Gram spectral norm."""
    one = np.abs(dictionary).sum(axis=0).max()
    inf = np.abs(dictionary).sum(axis=1).max()
    return float(one * inf)


def ista_column_step(a: np.ndarray, x: np.ndarray, dictionary: np.ndarray,
                     cfg: IstaConfig, lipschitz: float | None = None):
    """One proximal gradient step on a single code column.

    Returns (a_new, gamma_used) where gamma_used = 1/L for the accepted
    Lipschitz estimate, or 0.0 when backtracking exhausts its budget (the
    column is then returned unchanged).  The accepted step satisfies the
    sufficient-decrease bound
        F(a_new) - F(a) <= -(1/(2*gamma)) * ||a_new - a||^2
    for F(a) = 0.5*||D a - x||^2 + reg*||a||_1.
    """
    lip = cfg.initial_lipschitz if lipschitz is None else lipschitz
    # optimistic first trial one level below the carried estimate; the
    # growth loop walks it back up whenever the majorization check fails
    lip /= cfg.backtrack_growth
    resid = dictionary @ a - x
    f_a = 0.5 * float(resid @ resid)
    grad = dictionary.T @ resid
    for _ in range(cfg.max_backtracks):
        gamma = 1.0 / lip
        a_new = soft_threshold(a - gamma * grad, gamma * cfg.reg)
        delta = a_new - a
        sq = float(delta @ delta)
        r_new = dictionary @ a_new - x
        f_new = 0.5 * float(r_new @ r_new)
        # quadratic majorization check at the candidate
        if f_new <= f_a + float(grad @ delta) + 0.5 * lip * sq:
            return a_new, gamma
        lip *= cfg.backtrack_growth
    return a.copy(), 0.0


@dataclass(frozen=True)
class CodeUpdateResult:
    codes: np.ndarray
    gammas: np.ndarray      # accepted step per column, 0.0 where stalled
    lipschitz: np.ndarray   # per-column warm starts for the next sweep


def update_codes_l1(codes: np.ndarray, patches: np.ndarray,
                    dictionary: np.ndarray, cfg: IstaConfig,
                    lipschitz: np.ndarray | None = None) -> CodeUpdateResult:
    """One ISTA step on every code column.

    lipschitz carries per-column warm starts from the previous sweep; when
    absent every column starts at cfg.initial_lipschitz.  Columns are
    independent, so results do not depend on evaluation order.  Stalled
    columns (gamma 0.0) keep their previous value and warm start.
    """
    n, p = codes.shape
    if patches.shape != (dictionary.shape[0], p):
        raise ValueError("patch matrix does not match codes and dictionary")
    if lipschitz is None:
        lipschitz = np.full(p, cfg.initial_lipschitz)
    new_codes = np.empty_like(codes)
    gammas = np.empty(p)
    new_lip = lipschitz.copy()
    for i in range(p):
        a_new, gamma = ista_column_step(
            codes[:, i], patches[:, i], dictionary, cfg, lipschitz[i])
        new_codes[:, i] = a_new
        gammas[i] = gamma
        if gamma > 0.0:
            new_lip[i] = 1.0 / gamma
    return CodeUpdateResult(codes=new_codes, gammas=gammas, lipschitz=new_lip)


def omp_encode(x: np.ndarray, dictionary: np.ndarray, k: int,
               eps: float = 0.1) -> np.ndarray:
    """Orthogonal matching pursuit for one column.

    Greedily adds the atom with the largest absolute residual correlation
    (ties resolved to the lowest index) and refits by least squares on the
    active set each round, until ||a||_0 = k or the residual norm drops
    to eps.  A rank-deficient active set is refit once with a 1e-12 ridge
    and the search stops there.
    """
    if k < 0:
        raise ValueError("sparsity target k must be >= 0")
    if eps < 0:
        raise ValueError("eps must be >= 0")
    s, n = dictionary.shape
    a = np.zeros(n)
    if k == 0:
        return a
    x = np.asarray(x, dtype=np.float64)
    residual = x.copy()
    support: list[int] = []
    coef = np.empty(0)
    while len(support) < k and float(residual @ residual) > eps * eps:
        corr = dictionary.T @ residual
        j = int(np.argmax(np.abs(corr)))
        if corr[j] == 0.0 or j in support:
            break
        support.append(j)
        sub = dictionary[:, support]
        gram = sub.T @ sub
        rhs = sub.T @ x
        degenerate = False
        try:
            coef = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError:
            degenerate = True
        if not degenerate and not np.all(np.isfinite(coef)):
            degenerate = True
        if degenerate:
            coef = np.linalg.solve(
                gram + 1e-12 * np.eye(len(support)), rhs)
        residual = x - sub @ coef
        if degenerate:
            break
    a[support] = coef
    return a


def update_codes_l0(patches: np.ndarray, dictionary: np.ndarray, k: int,
                    eps: float = 0.1) -> np.ndarray:
    """Recompute every code column from scratch by OMP."""
    s, p = patches.shape
    n = dictionary.shape[1]
    codes = np.empty((n, p))
    for i in range(p):
        codes[:, i] = omp_encode(patches[:, i], dictionary, k, eps)
    return codes
