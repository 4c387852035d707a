"""Alternating reconstruction of an image and a patch dictionary.

Given noisy squared-magnitude measurements Y of an unknown image X in
[0, 1]^(N1 x N2), the solver alternates three block updates on

    min_{X, D, A}  0.25*||Y - |F(X)|^2||_F^2
                   + (mu/2)*||E(X) - D A||_F^2  +  lam*sum_i ||a_i||_1

one sparse-coding sweep on A, one projected gradient step on X, and (in
the second iteration phase) one block-coordinate sweep on D.  Variants:

* "l1"    ISTA code updates, dictionary learned in phase 2 (default)
* "l0"    OMP code updates under a hard sparsity cap that switches with
          mu at the phase boundary; no l1 penalty
* "prwf"  l1 updates with the dictionary frozen at its initialization
* "wf"    plain projected Wirtinger Flow (mu = lam = 0, no codes)

mu and lam are specified as multiples of the measurement entry count.
The total objective is non-increasing across iterations for the l1-type
variants; this is checked at runtime with 1e-9 relative slack.
"""

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from . import dictionary as dl
from . import imagestep as im
from . import patches as po
from . import sparse
from .operators import MeasurementSet

SNAPSHOT_VERSION = 1
VARIANTS = ("l1", "l0", "wf", "prwf")
MONOTONE_SLACK = 1e-9


class MonotonicityError(RuntimeError):
    """The total objective increased beyond floating-point slack."""


class SnapshotError(ValueError):
    """A snapshot file is malformed or from a different format version."""


@dataclass(frozen=True)
class SolverConfig:
    """Settings for one reconstruction run.

    mu and lam multiply the measurement entry count to give the absolute
    weights; for the l0 variant mu applies to phase 1 and mu_phase2
    (default 1.68 * mu) to phase 2, while lam is ignored.  iters_k1 and
    iters_k2 are the two phase lengths; dictionary updates run only in
    phase 2.  code_steps and dict_steps repeat the A and D updates within
    an iteration (both default 1).
    """

    variant: str
    geometry: po.PatchGeometry
    mu: float = 0.05
    lam: float = 0.003
    mu_phase2: float | None = None
    k1_sparsity: int = 4
    k2_sparsity: int = 8
    omp_eps: float = 0.1
    iters_k1: int = 25
    iters_k2: int = 50
    step: str = "heuristic"
    seed: int = 0
    code_steps: int = 1
    dict_steps: int = 1
    armijo_eta: float = 0.5
    ista_growth: float = 2.0
    ista_max_backtracks: int = 60
    heuristic_growth: float = 1.68
    heuristic_max_trials: int = 100
    armijo_max_trials: int = 10_000

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.step not in ("heuristic", "armijo"):
            raise ValueError(f"unknown step policy {self.step!r}")
        if self.mu < 0 or self.lam < 0:
            raise ValueError("mu and lam must be >= 0")
        if self.variant in ("l1", "prwf", "l0") and self.mu == 0:
            raise ValueError(f"variant {self.variant!r} needs mu > 0")
        if self.mu_phase2 is not None and self.mu_phase2 <= 0:
            raise ValueError("mu_phase2 must be > 0")
        if self.iters_k1 < 0 or self.iters_k2 < 0:
            raise ValueError("iteration counts must be >= 0")
        if self.k1_sparsity < 0 or self.k2_sparsity < 0:
            raise ValueError("sparsity targets must be >= 0")
        if self.omp_eps < 0:
            raise ValueError("omp_eps must be >= 0")
        if self.code_steps < 1 or self.dict_steps < 1:
            raise ValueError("code_steps and dict_steps must be >= 1")

    @property
    def total_iterations(self) -> int:
        return self.iters_k1 + self.iters_k2


def default_config(variant: str, geometry: po.PatchGeometry,
                   **overrides) -> SolverConfig:
    """SolverConfig with the customary per-variant defaults filled in."""
    base = dict(variant=variant, geometry=geometry)
    if variant == "l1":
        base.update(mu=0.05, lam=0.003, iters_k1=25, iters_k2=50)
    elif variant == "l0":
        base.update(mu=0.005, lam=0.0, iters_k1=25, iters_k2=25)
    elif variant == "wf":
        base.update(mu=0.0, lam=0.0, iters_k1=25, iters_k2=50)
    elif variant == "prwf":
        base.update(mu=0.05, lam=0.003, iters_k1=75, iters_k2=0)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    base.update(overrides)
    return SolverConfig(**base)


@dataclass(frozen=True)
class ObjectiveValue:
    """The three objective terms and their sum at one iterate."""

    data_fit: float
    patch_fit: float
    sparsity_penalty: float

    @property
    def total(self) -> float:
        return self.data_fit + self.patch_fit + self.sparsity_penalty


@dataclass(frozen=True)
class StepRecord:
    """Per-iteration X-step telemetry."""

    gamma: float
    trials: int
    stalled: bool
    objective_before: float
    objective_after: float
    armijo_margin: float
    code_stalls: int


@dataclass(frozen=True)
class TraceRow:
    """One objective-trace entry; row 0 is the initial state."""

    iteration: int
    data_fit: float
    patch_fit: float
    sparsity_penalty: float
    total: float
    gamma_x: float
    mean_code_sparsity: float


@dataclass
class SolverState:
    """Mutable iterate owned by JointSolver; snapshot() makes it durable."""

    config: SolverConfig
    image: np.ndarray
    dictionary: np.ndarray | None
    codes: np.ndarray | None
    code_lipschitz: np.ndarray | None
    rng: np.random.Generator
    policy: object
    iteration: int = 0
    trace: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    early_stop: bool = False
    monotone_violations: int = 0


@dataclass(frozen=True)
class ReconstructionPair:
    """Final image estimate and, for dictionary variants, the clamped
    reassembly of the sparse patch approximations."""

    image: np.ndarray
    patch_image: np.ndarray | None


def evaluate_objective(image, dictionary, codes, mset: MeasurementSet,
                       mu_abs: float, lam_abs: float,
                       geometry: po.PatchGeometry) -> ObjectiveValue:
    """All objective terms at one iterate, with absolute weights."""
    data = im.data_fit_value(image, mset)
    patch = 0.0
    pen = 0.0
    if dictionary is not None and codes is not None:
        patch = im.patch_fit_value(image, dictionary @ codes, mu_abs,
                                   geometry)
        pen = lam_abs * float(np.abs(codes).sum())
    return ObjectiveValue(data, patch, pen)


def least_squares_codes(dictionary: np.ndarray,
                        patch_matrix: np.ndarray) -> np.ndarray:
    """Codes minimizing ||patches - D A||_F via the normal equations.

    Falls back to a 1e-12 ridge when the Gram matrix is singular (the
    identity-plus-DCT start always is) or the direct solve misbehaves.
    """
    gram = dictionary.T @ dictionary
    rhs = dictionary.T @ patch_matrix
    try:
        sol = np.linalg.solve(gram, rhs)
        bad = not np.all(np.isfinite(sol))
        if not bad:
            resid = np.linalg.norm(dictionary @ sol - patch_matrix)
            bad = resid > np.linalg.norm(patch_matrix) * (1 + 1e-6) + 1e-9
    except np.linalg.LinAlgError:
        bad = True
    if bad:
        ridge = gram + 1e-12 * np.eye(gram.shape[0])
        sol = np.linalg.solve(ridge, rhs)
    return sol


def initial_image(shape, rng) -> np.ndarray:
    """Random start with i.i.d. uniform [0, 1] pixels."""
    return rng.random(shape)


def initial_gamma(f0: float) -> float:
    """Step-size seed 1e4 / f0, guarded against degenerate objectives."""
    if not np.isfinite(f0) or f0 <= 0.0:
        return 1.0
    return 1e4 / f0


def _make_policy(config: SolverConfig, gamma0: float):
    if config.step == "heuristic":
        return im.HeuristicPolicy(gamma=gamma0,
                                  growth=config.heuristic_growth,
                                  max_trials=config.heuristic_max_trials)
    return im.ArmijoPolicy(eta_bar=gamma0, eta=config.armijo_eta,
                           max_trials=config.armijo_max_trials)


class JointSolver:
    """Runs the alternating updates and owns all iteration state."""

    def __init__(self, mset: MeasurementSet, config: SolverConfig,
                 state: SolverState | None = None):
        if tuple(mset.image_shape) != (config.geometry.image_rows,
                                       config.geometry.image_cols):
            raise ValueError(
                f"geometry {config.geometry.image_rows}x"
                f"{config.geometry.image_cols} does not match measurement "
                f"image shape {tuple(mset.image_shape)}")
        self.mset = mset
        self.config = config
        self.measurement_count = mset.measurements.size
        if state is not None:
            if state.config != config:
                raise ValueError("state was produced under a different config")
            self.state = state
        else:
            self.state = self._fresh_state()

    # -- setup ---------------------------------------------------------

    def _fresh_state(self) -> SolverState:
        cfg = self.config
        geom = cfg.geometry
        rng = np.random.default_rng(cfg.seed)
        image = initial_image(tuple(self.mset.image_shape), rng)
        if cfg.variant == "wf":
            dictionary = codes = lipschitz = None
            f0 = im.data_fit_value(image, self.mset)
        else:
            dictionary = dl.init_dictionary(geom.patch_rows, geom.patch_cols)
            # start the codes at the least-squares fit of the initial
            # patches, the same point the initial step size is derived
            # from; starting cold at zero makes the patch-fit pull point
            # at the zero image and the very first image step collapses
            codes = least_squares_codes(dictionary, po.extract(image, geom))
            lipschitz = np.full(geom.patch_count,
                                sparse.lipschitz_bound(dictionary))
            f0 = evaluate_objective(
                image, dictionary, codes, self.mset,
                self._mu_abs(0), self._lam_abs(), geom).total
        policy = _make_policy(cfg, initial_gamma(f0))
        state = SolverState(config=cfg, image=image, dictionary=dictionary,
                            codes=codes, code_lipschitz=lipschitz, rng=rng,
                            policy=policy)
        obj = self._objective(state, 0)
        state.trace.append(TraceRow(
            iteration=0, data_fit=obj.data_fit, patch_fit=obj.patch_fit,
            sparsity_penalty=obj.sparsity_penalty, total=obj.total,
            gamma_x=0.0, mean_code_sparsity=self._code_sparsity(state)))
        return state

    # -- phase-dependent weights ----------------------------------------

    def _mu_abs(self, iteration: int) -> float:
        cfg = self.config
        if cfg.variant == "wf":
            return 0.0
        mu = cfg.mu
        if cfg.variant == "l0" and iteration >= cfg.iters_k1:
            mu = cfg.mu_phase2 if cfg.mu_phase2 is not None else 1.68 * cfg.mu
        return mu * self.measurement_count

    def _lam_abs(self) -> float:
        if self.config.variant in ("wf", "l0"):
            return 0.0
        return self.config.lam * self.measurement_count

    def _sparsity_target(self, iteration: int) -> int:
        if iteration >= self.config.iters_k1:
            return self.config.k2_sparsity
        return self.config.k1_sparsity

    def _objective(self, state: SolverState, iteration: int) -> ObjectiveValue:
        return evaluate_objective(
            state.image, state.dictionary, state.codes, self.mset,
            self._mu_abs(iteration), self._lam_abs(), self.config.geometry)

    def _code_sparsity(self, state: SolverState) -> float:
        if state.codes is None:
            return 0.0
        return float(np.mean((state.codes != 0.0).sum(axis=0)))

    # -- iteration -------------------------------------------------------

    def step(self) -> None:
        """Run one outer iteration (A update, X update, maybe D update)."""
        cfg = self.config
        st = self.state
        geom = cfg.geometry
        i = st.iteration
        if i >= cfg.total_iterations or st.early_stop:
            raise RuntimeError("iteration budget already exhausted")
        mu_abs = self._mu_abs(i)
        lam_abs = self._lam_abs()

        code_stalls = 0
        all_code_stalled = False
        if cfg.variant in ("l1", "prwf"):
            ista_cfg = sparse.IstaConfig(
                reg=cfg.lam / cfg.mu,
                initial_lipschitz=float(st.code_lipschitz.max()),
                backtrack_growth=cfg.ista_growth,
                max_backtracks=cfg.ista_max_backtracks)
            patch_matrix = po.extract(st.image, geom)
            for _ in range(cfg.code_steps):
                res = sparse.update_codes_l1(
                    st.codes, patch_matrix, st.dictionary, ista_cfg,
                    st.code_lipschitz)
                st.codes = res.codes
                st.code_lipschitz = res.lipschitz
            code_stalls = int(np.sum(res.gammas == 0.0))
            all_code_stalled = bool(np.all(res.gammas == 0.0))
        elif cfg.variant == "l0":
            patch_matrix = po.extract(st.image, geom)
            for _ in range(cfg.code_steps):
                st.codes = sparse.update_codes_l0(
                    patch_matrix, st.dictionary, self._sparsity_target(i),
                    cfg.omp_eps)

        if cfg.variant == "wf":
            evaluate = lambda x: im.data_fit_value(x, self.mset)
            grad = im.grad_data_fit(st.image, self.mset)
        else:
            synth = st.dictionary @ st.codes
            evaluate = lambda x: (im.data_fit_value(x, self.mset)
                                  + im.patch_fit_value(x, synth, mu_abs, geom))
            grad = (im.grad_data_fit(st.image, self.mset)
                    + im.grad_patch_fit(st.image, st.dictionary, st.codes,
                                        mu_abs, geom))
        step_fn = (im.x_step_heuristic if cfg.step == "heuristic"
                   else im.x_step_armijo)
        result, st.policy = step_fn(st.image, grad, st.policy, evaluate)
        st.image = result.image

        if cfg.variant in ("l1", "l0") and i >= cfg.iters_k1:
            patch_matrix = po.extract(st.image, geom)
            for _ in range(cfg.dict_steps):
                st.dictionary = dl.bcd_pass(st.dictionary, st.codes,
                                            patch_matrix, st.rng)

        st.iteration = i + 1
        obj = self._objective(st, i)
        st.trace.append(TraceRow(
            iteration=st.iteration, data_fit=obj.data_fit,
            patch_fit=obj.patch_fit, sparsity_penalty=obj.sparsity_penalty,
            total=obj.total, gamma_x=result.gamma,
            mean_code_sparsity=self._code_sparsity(st)))
        st.steps.append(StepRecord(
            gamma=result.gamma, trials=result.trials, stalled=result.stalled,
            objective_before=result.objective_before,
            objective_after=result.objective_after,
            armijo_margin=result.armijo_margin, code_stalls=code_stalls))
        self._check_monotone(i)

        if result.stalled:
            if cfg.variant == "wf" or (cfg.variant in ("l1", "prwf")
                                       and all_code_stalled):
                st.early_stop = True

    def _check_monotone(self, iteration: int) -> None:
        """Total objective may not increase beyond relative slack.

        Enforced for the l1-type variants where every block update is a
        descent step.  The l0 variant's greedy recoding carries no such
        guarantee and its weights switch at the phase boundary, so there
        violations are only counted (and the boundary row is skipped).
        """
        st = self.state
        if self.config.variant == "l0" and iteration == self.config.iters_k1:
            return  # mu and the sparsity cap changed; totals not comparable
        prev, cur = st.trace[-2].total, st.trace[-1].total
        if cur <= prev + MONOTONE_SLACK * max(prev, 1.0):
            return
        if self.config.variant == "l0":
            st.monotone_violations += 1
            return
        raise MonotonicityError(
            f"objective increased at iteration {st.iteration}: "
            f"{prev!r} -> {cur!r}")

    def run(self, callback=None) -> SolverState:
        """Iterate until the budget is spent or every sub-update stalls.

        callback, when given, is invoked as callback(state) after each
        completed iteration.
        """
        while (self.state.iteration < self.config.total_iterations
               and not self.state.early_stop):
            self.step()
            if callback is not None:
                callback(self.state)
        return self.state

    def reconstruction(self) -> ReconstructionPair:
        st = self.state
        if st.dictionary is None:
            return ReconstructionPair(image=st.image, patch_image=None)
        synth = po.reassemble(st.dictionary @ st.codes, self.config.geometry)
        return ReconstructionPair(image=st.image,
                                  patch_image=im.project_box(synth))


def run_joint(mset: MeasurementSet, config: SolverConfig, callback=None):
    """Run a full reconstruction; returns (SolverState, ReconstructionPair)."""
    solver = JointSolver(mset, config)
    solver.run(callback)
    return solver.state, solver.reconstruction()


def run_patch_regularized_wf(mset: MeasurementSet, config: SolverConfig,
                             callback=None):
    """Sparse patch regularization with the dictionary fixed at its start."""
    config = dataclasses.replace(config, variant="prwf")
    return run_joint(mset, config, callback)


def run_wf_baseline(mset: MeasurementSet, iterations: int,
                    step: str = "heuristic", x0: np.ndarray | None = None,
                    seed: int = 0, callback=None):
    """Plain projected Wirtinger Flow with the same step-size machinery.

    Mirrors the solver's "wf" variant exactly: same initialization (when
    x0 is omitted it is drawn from default_rng(seed) like the solver
    does), same step policies and defaults, same stall handling.  Returns
    the final image estimate.
    """
    if step not in ("heuristic", "armijo"):
        raise ValueError(f"unknown step policy {step!r}")
    if x0 is None:
        x0 = initial_image(tuple(mset.image_shape), np.random.default_rng(seed))
    image = np.asarray(x0, dtype=np.float64)
    evaluate = lambda x: im.data_fit_value(x, mset)
    gamma0 = initial_gamma(evaluate(image))
    if step == "heuristic":
        policy = im.HeuristicPolicy(gamma=gamma0)
        step_fn = im.x_step_heuristic
    else:
        policy = im.ArmijoPolicy(eta_bar=gamma0)
        step_fn = im.x_step_armijo
    for _ in range(iterations):
        grad = im.grad_data_fit(image, mset)
        result, policy = step_fn(image, grad, policy, evaluate)
        image = result.image
        if callback is not None:
            callback(image)
        if result.stalled:
            break
    return image


# -- snapshots -----------------------------------------------------------


def _policy_to_dict(policy) -> dict:
    if isinstance(policy, im.HeuristicPolicy):
        return {"kind": "heuristic", "gamma": policy.gamma,
                "growth": policy.growth, "max_trials": policy.max_trials}
    return {"kind": "armijo", "eta_bar": policy.eta_bar, "eta": policy.eta,
            "max_trials": policy.max_trials}


def _policy_from_dict(d: dict):
    if d["kind"] == "heuristic":
        return im.HeuristicPolicy(gamma=d["gamma"], growth=d["growth"],
                                  max_trials=d["max_trials"])
    return im.ArmijoPolicy(eta_bar=d["eta_bar"], eta=d["eta"],
                           max_trials=d["max_trials"])


def _config_to_dict(config: SolverConfig) -> dict:
    d = dataclasses.asdict(config)
    d["geometry"] = dataclasses.asdict(config.geometry)
    return d


def _config_from_dict(d: dict) -> SolverConfig:
    d = dict(d)
    d["geometry"] = po.PatchGeometry(**d["geometry"])
    return SolverConfig(**d)


def snapshot(state: SolverState, path) -> None:
    """Write a lossless, versioned snapshot of the solver state.

    Arrays are stored raw; everything else (config, policy, RNG position,
    traces) goes into an embedded JSON header.  restore() reproduces the
    state bit-exactly, so a resumed run matches an uninterrupted one.
    """
    meta = {
        "version": SNAPSHOT_VERSION,
        "config": _config_to_dict(state.config),
        "iteration": state.iteration,
        "policy": _policy_to_dict(state.policy),
        "rng_state": state.rng.bit_generator.state,
        "early_stop": state.early_stop,
        "monotone_violations": state.monotone_violations,
        "trace": [dataclasses.asdict(row) for row in state.trace],
        "steps": [dataclasses.asdict(rec) for rec in state.steps],
        "has_dictionary": state.dictionary is not None,
    }
    blob = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    arrays = {"meta": blob, "image": state.image}
    if state.dictionary is not None:
        arrays["dictionary"] = state.dictionary
        arrays["codes"] = state.codes
        arrays["code_lipschitz"] = state.code_lipschitz
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def restore(path) -> SolverState:
    """Rebuild a SolverState written by snapshot()."""
    with np.load(path, allow_pickle=False) as data:
        try:
            meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        except (KeyError, ValueError) as exc:
            raise SnapshotError(f"{path}: not a solver snapshot") from exc
        if meta.get("version") != SNAPSHOT_VERSION:
            raise SnapshotError(
                f"{path}: snapshot version {meta.get('version')} is not "
                f"{SNAPSHOT_VERSION}")
        image = data["image"].copy()
        if meta["has_dictionary"]:
            dictionary = data["dictionary"].copy()
            codes = data["codes"].copy()
            lipschitz = data["code_lipschitz"].copy()
        else:
            dictionary = codes = lipschitz = None
    rng = np.random.default_rng()
    rng.bit_generator.state = meta["rng_state"]
    return SolverState(
        config=_config_from_dict(meta["config"]),
        image=image, dictionary=dictionary, codes=codes,
        code_lipschitz=lipschitz, rng=rng,
        policy=_policy_from_dict(meta["policy"]),
        iteration=meta["iteration"],
        trace=[TraceRow(**row) for row in meta["trace"]],
        steps=[StepRecord(**rec) for rec in meta["steps"]],
        early_stop=meta["early_stop"],
        monotone_violations=meta["monotone_violations"])
