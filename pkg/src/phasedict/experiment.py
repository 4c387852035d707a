"""Experiment orchestration: replicated solves, metrics and reports.

Seeds are derived deterministically from the experiment base seed.  For
image index ii (0-based) and replicate r:

    solver seed  (start image, dead-atom redraws) = base + r + 10000*ii
    noise seed                                    = base + r + 10000*ii
    operator seed (matrices/masks)                = base + 1000000 + r + 10000*ii

so a repeated invocation reproduces every run bit for bit.  Multi-channel
images run one solve per channel, sharing the replicate's operator and
noise stream.  Wall-clock timings are nondeterministic by nature and are
therefore kept out of runs.csv and summary.csv; they live in timings.csv.
"""

import hashlib
import math
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import images as img_io
from . import metrics as mt
from . import operators as ops
from . import solver as sv
from .patches import PatchGeometry

OPERATOR_KINDS = ("gx", "gxg", "gxh", "cdp")
OPERATOR_SEED_OFFSET = 1_000_000
IMAGE_SEED_STRIDE = 10_000

RUNS_SCHEMA = "# phasedict runs csv v1"
SUMMARY_SCHEMA = "# phasedict summary csv v1"
TIMINGS_SCHEMA = "# phasedict timings csv v1"
TRACE_SCHEMA = "# phasedict trace csv v1"


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to reproduce a measurement + solve sweep."""

    image_paths: tuple
    operator: str = "cdp"
    masks: int = 2
    alphabet: str = "ternary"
    oversample: float = 4.0
    snr_db: float | None = 20.0
    variant: str = "l1"
    mu: float | None = None
    lam: float | None = None
    mu_phase2: float | None = None
    k1_sparsity: int = 4
    k2_sparsity: int = 8
    omp_eps: float = 0.1
    iters_k1: int | None = None
    iters_k2: int | None = None
    patch: tuple = (8, 8)
    stride: tuple | None = None
    step: str = "heuristic"
    seed: int = 0
    replicates: int = 3
    wf_baseline: bool = True
    save_sets: bool = True
    out_dir: str = "runs"

    def __post_init__(self):
        if self.operator not in OPERATOR_KINDS:
            raise ValueError(f"unknown operator kind {self.operator!r}")
        if self.variant not in sv.VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.masks < 1:
            raise ValueError("mask count must be >= 1")
        if self.oversample <= 0:
            raise ValueError("oversample must be > 0")
        if not self.image_paths:
            raise ValueError("at least one image path is required")


def spec_hash(spec: ExperimentSpec) -> str:
    """Short stable digest of every reproducibility-relevant field."""
    parts = []
    for key, value in sorted(asdict(spec).items()):
        if key == "out_dir":
            continue
        parts.append(f"{key}={value!r}")
    digest = hashlib.sha256("\n".join(parts).encode("utf-8")).hexdigest()
    return digest[:12]


def build_operator(spec: ExperimentSpec, image_shape, rng):
    """Draw the realized measurement operator for one replicate."""
    n1, n2 = image_shape
    m1 = int(round(spec.oversample * n1))
    if spec.operator == "gx":
        return ops.GaussianLeft(ops.sample_gaussian_matrix(m1, n1, rng))
    if spec.operator == "gxg":
        if n1 != n2:
            raise ValueError("gxg needs a square image")
        return ops.GaussianTwoSided(ops.sample_gaussian_matrix(m1, n1, rng))
    if spec.operator == "gxh":
        m2 = int(round(spec.oversample * n2))
        return ops.GaussianAsymmetric(
            left=ops.sample_gaussian_matrix(m1, n1, rng),
            right=ops.sample_gaussian_matrix(m2, n2, rng))
    return ops.sample_cdp_operator(n1, n2, spec.masks, spec.alphabet, rng)


def build_geometry(spec: ExperimentSpec, image_shape) -> PatchGeometry:
    s1, s2 = spec.patch
    t1, t2 = spec.stride if spec.stride is not None else spec.patch
    return PatchGeometry(s1, s2, t1, t2, image_shape[0], image_shape[1])


def build_config(spec: ExperimentSpec, geometry: PatchGeometry,
                 seed: int) -> sv.SolverConfig:
    overrides = dict(seed=seed, step=spec.step,
                     k1_sparsity=spec.k1_sparsity,
                     k2_sparsity=spec.k2_sparsity,
                     omp_eps=spec.omp_eps)
    for name in ("mu", "lam", "mu_phase2", "iters_k1", "iters_k2"):
        value = getattr(spec, name)
        if value is not None:
            overrides[name] = value
    return sv.default_config(spec.variant, geometry, **overrides)


@dataclass(frozen=True)
class RunRecord:
    """One reconstruction's metrics; estimator is x, patch or wf."""

    image: str
    channel: int
    replicate: int
    seed: int
    estimator: str
    report: mt.QualityReport
    early_stop: bool
    config_hash: str


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    records: list = field(default_factory=list)
    timings: list = field(default_factory=list)   # (image, ch, rep, kind, sec)
    files: list = field(default_factory=list)
    any_early_stop: bool = False


def _fmt(value) -> str:
    """CSV cell formatting: shortest round-trip floats, empty for None."""
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def write_trace_csv(trace, path) -> None:
    """Objective trace rows as CSV (row 0 is the initial state)."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(TRACE_SCHEMA + "\n")
        fh.write("iteration,data_fit,patch_fit,sparsity_penalty,total,"
                 "gamma_x,mean_code_sparsity\n")
        for row in trace:
            fh.write(",".join([
                str(row.iteration), _fmt(row.data_fit), _fmt(row.patch_fit),
                _fmt(row.sparsity_penalty), _fmt(row.total),
                _fmt(row.gamma_x), _fmt(row.mean_code_sparsity)]) + "\n")


def write_runs_csv(records, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(RUNS_SCHEMA + "\n")
        fh.write("image,channel,replicate,seed,estimator,psnr_db,ssim,"
                 "mean_code_sparsity,early_stop,config\n")
        for rec in records:
            fh.write(",".join([
                rec.image, str(rec.channel), str(rec.replicate),
                str(rec.seed), rec.estimator, _fmt(rec.report.psnr_db),
                _fmt(rec.report.ssim), _fmt(rec.report.mean_code_sparsity),
                str(int(rec.early_stop)), rec.config_hash]) + "\n")


def read_runs_csv(path) -> list:
    """Rows of a runs.csv as dicts with parsed numeric fields."""
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.rstrip("\n") for ln in fh if not ln.startswith("#")]
    header = lines[0].split(",")
    for line in lines[1:]:
        if not line:
            continue
        cells = line.split(",")
        row = dict(zip(header, cells))
        for key in ("psnr_db", "ssim", "mean_code_sparsity"):
            row[key] = float(row[key]) if row[key] else None
        rows.append(row)
    return rows


def summarize(records_or_rows) -> list:
    """Per-estimator means: arithmetic PSNR/SSIM (SSIM clamped to [0, 1]
    after averaging), arithmetic sparsity.  Returns rows of dicts."""
    groups: dict = {}
    for rec in records_or_rows:
        if isinstance(rec, RunRecord):
            est = rec.estimator
            vals = (rec.report.psnr_db, rec.report.ssim,
                    rec.report.mean_code_sparsity)
        else:
            est = rec["estimator"]
            vals = (rec["psnr_db"], rec["ssim"], rec["mean_code_sparsity"])
        groups.setdefault(est, []).append(vals)
    out = []
    for est in sorted(groups):
        vals = groups[est]
        psnrs = [v[0] for v in vals if v[0] is not None]
        ssims = [v[1] for v in vals if v[1] is not None]
        sparsities = [v[2] for v in vals if v[2] is not None]
        out.append({
            "estimator": est,
            "count": len(vals),
            "psnr_mean_db": float(np.mean(psnrs)) if psnrs else None,
            "ssim_mean": (min(1.0, max(0.0, float(np.mean(ssims))))
                          if ssims else None),
            "sparsity_mean": (float(np.mean(sparsities))
                              if sparsities else None),
        })
    return out


def write_summary_csv(summary_rows, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(SUMMARY_SCHEMA + "\n")
        fh.write("estimator,count,psnr_mean_db,ssim_mean,sparsity_mean\n")
        for row in summary_rows:
            fh.write(",".join([
                row["estimator"], str(row["count"]), _fmt(row["psnr_mean_db"]),
                _fmt(row["ssim_mean"]), _fmt(row["sparsity_mean"])]) + "\n")


def write_timings_csv(timings, path) -> None:
    """Wall-clock seconds per run plus a geometric-mean row per kind."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(TIMINGS_SCHEMA + "\n")
        fh.write("image,channel,replicate,kind,seconds\n")
        by_kind: dict = {}
        for image, channel, replicate, kind, seconds in timings:
            by_kind.setdefault(kind, []).append(seconds)
            fh.write(f"{image},{channel},{replicate},{kind},{seconds!r}\n")
        for kind in sorted(by_kind):
            geo = math.exp(float(np.mean(np.log(by_kind[kind]))))
            fh.write(f"all,,geomean,{kind},{geo!r}\n")


def write_manifest(result: ExperimentResult, out_dir: Path) -> Path:
    path = out_dir / "manifest.txt"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("manifest_version = 1\n")
        fh.write(f"config_hash = {spec_hash(result.spec)}\n")
        for key, value in sorted(asdict(result.spec).items()):
            if key == "out_dir":
                continue
            fh.write(f"spec.{key} = {value!r}\n")
        for rel in result.files:
            fh.write(f"file = {rel}\n")
    return path


def _record_file(result: ExperimentResult, out_dir: Path, path: Path):
    result.files.append(str(path.relative_to(out_dir)))


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Measure and solve every (image, replicate, channel) combination.

    Writes per-run artifacts (trace CSV, reconstructions, dictionary and
    codes for the learned variants, measurement sets), the aggregate
    runs.csv / summary.csv / timings.csv, and a manifest listing every
    emitted file.  Returns the in-memory records.
    """
    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = ExperimentResult(spec=spec)
    chash = spec_hash(spec)

    for ii, image_path in enumerate(spec.image_paths):
        channels = img_io.load_image_channels(image_path)
        stem = Path(image_path).stem
        for r in range(spec.replicates):
            run_seed = spec.seed + r + IMAGE_SEED_STRIDE * ii
            op_seed = OPERATOR_SEED_OFFSET + run_seed
            op_rng = np.random.default_rng(op_seed)
            operator = build_operator(spec, channels[0].shape, op_rng)
            noise_rng = (run_seed if len(channels) == 1
                         else np.random.default_rng(run_seed))
            rep_dir = out_dir / stem / f"rep{r:03d}"
            for ch, reference in enumerate(channels):
                run_dir = rep_dir if len(channels) == 1 else rep_dir / f"ch{ch}"
                run_dir.mkdir(parents=True, exist_ok=True)
                mset = ops.measure(operator, reference, spec.snr_db, noise_rng)
                if spec.save_sets:
                    mpath = run_dir / "measurements.bin"
                    ops.save_measurements(mset, mpath)
                    _record_file(result, out_dir, mpath)
                _solve_one(spec, result, out_dir, run_dir, mset, reference,
                           stem, ch, r, run_seed, chash)
    write_runs_csv(result.records, out_dir / "runs.csv")
    write_summary_csv(summarize(result.records), out_dir / "summary.csv")
    write_timings_csv(result.timings, out_dir / "timings.csv")
    for name in ("runs.csv", "summary.csv", "timings.csv", "manifest.txt"):
        result.files.append(name)
    write_manifest(result, out_dir)
    return result


def _solve_one(spec, result, out_dir, run_dir, mset, reference, stem, ch, r,
               run_seed, chash):
    geometry = build_geometry(spec, reference.shape)
    config = build_config(spec, geometry, run_seed)

    begin = time.perf_counter()
    state, recon = sv.run_joint(mset, config)
    elapsed = time.perf_counter() - begin
    result.timings.append((stem, ch, r, spec.variant, elapsed))
    result.any_early_stop = result.any_early_stop or state.early_stop

    write_trace_csv(state.trace, run_dir / "trace.csv")
    _record_file(result, out_dir, run_dir / "trace.csv")
    img_io.save_image(recon.image, run_dir / "recon_x.png", bit_depth=16)
    _record_file(result, out_dir, run_dir / "recon_x.png")

    def add(estimator, estimate, codes):
        rep = mt.QualityReport(
            psnr_db=mt.psnr(reference, estimate),
            ssim=mt.ssim(reference, estimate),
            mean_code_sparsity=(None if codes is None
                                else mt.mean_sparsity(codes)))
        result.records.append(RunRecord(
            image=stem, channel=ch, replicate=r, seed=run_seed,
            estimator=estimator, report=rep, early_stop=state.early_stop,
            config_hash=chash))

    add("x", recon.image, state.codes)
    if recon.patch_image is not None:
        img_io.save_image(recon.patch_image, run_dir / "recon_patch.png",
                          bit_depth=16)
        _record_file(result, out_dir, run_dir / "recon_patch.png")
        add("patch", recon.patch_image, state.codes)
    if state.dictionary is not None:
        img_io.save_dictionary(state.dictionary, run_dir / "dictionary.bin")
        img_io.save_dictionary_atlas(state.dictionary, geometry.patch_rows,
                                     geometry.patch_cols,
                                     run_dir / "atlas.png")
        img_io.export_codes_csv(state.codes, run_dir / "codes.csv")
        for name in ("dictionary.bin", "atlas.png", "codes.csv"):
            _record_file(result, out_dir, run_dir / name)

    if spec.wf_baseline and spec.variant != "wf":
        x0 = sv.initial_image(reference.shape,
                              np.random.default_rng(run_seed))
        begin = time.perf_counter()
        wf_image = sv.run_wf_baseline(mset, config.total_iterations,
                                      step=spec.step, x0=x0)
        result.timings.append((stem, ch, r, "wf",
                               time.perf_counter() - begin))
        img_io.save_image(wf_image, run_dir / "recon_wf.png", bit_depth=16)
        _record_file(result, out_dir, run_dir / "recon_wf.png")
        rep = mt.QualityReport(psnr_db=mt.psnr(reference, wf_image),
                               ssim=mt.ssim(reference, wf_image))
        result.records.append(RunRecord(
            image=stem, channel=ch, replicate=r, seed=run_seed,
            estimator="wf", report=rep, early_stop=False,
            config_hash=chash))
