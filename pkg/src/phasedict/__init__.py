"""Phase retrieval with learned patch dictionaries.

Reconstructs an image in [0, 1] from noisy magnitude-squared linear
measurements while simultaneously learning a patch dictionary that
sparsely codes the iterate.  Ships four measurement operator families
(left Gaussian, two-sided Gaussian, asymmetric two-sided Gaussian and
coded diffraction patterns), an l1 and an l0 coding variant, a plain
Wirtinger Flow baseline, and an experiment harness with CSV reporting.
"""

from .patches import (
    GeometryError,
    PatchGeometry,
    extract,
    extract_adjoint,
    multiplicity,
    reassemble,
)
from .operators import (
    CodedDiffraction,
    GaussianAsymmetric,
    GaussianLeft,
    GaussianTwoSided,
    MeasurementSet,
    adjoint,
    forward,
    load_measurements,
    measure,
    output_shape,
    realized_snr_db,
    sample_cdp_operator,
    sample_gaussian_matrix,
    save_measurements,
    squared_modulus,
)
from .sparse import (
    CodeUpdateResult,
    IstaConfig,
    ista_column_step,
    lipschitz_bound,
    omp_encode,
    soft_threshold,
    update_codes_l0,
    update_codes_l1,
)
from .dictionary import (
    bcd_pass,
    init_dictionary,
    project_unit_ball,
)
from .imagestep import (
    ArmijoPolicy,
    HeuristicPolicy,
    StepResult,
    data_fit_value,
    grad_data_fit,
    grad_patch_fit,
    patch_fit_value,
    project_box,
    x_step_armijo,
    x_step_heuristic,
)
from .metrics import (
    QualityReport,
    evaluate_quality,
    mean_sparsity,
    psnr,
    ssim,
)
from .solver import (
    JointSolver,
    MonotonicityError,
    ObjectiveValue,
    ReconstructionPair,
    SnapshotError,
    SolverConfig,
    SolverState,
    TraceRow,
    default_config,
    evaluate_objective,
    initial_image,
    restore,
    run_joint,
    run_patch_regularized_wf,
    run_wf_baseline,
    snapshot,
)
from .images import (
    export_codes_csv,
    load_codes_csv,
    load_dictionary,
    load_image,
    load_image_channels,
    render_atlas,
    save_dictionary,
    save_dictionary_atlas,
    save_image,
)
from .experiment import (
    ExperimentResult,
    ExperimentSpec,
    RunRecord,
    read_runs_csv,
    run_experiment,
    summarize,
    write_runs_csv,
    write_summary_csv,
)

__version__ = "0.1.0"

__all__ = [
    "GeometryError", "PatchGeometry", "extract", "extract_adjoint",
    "multiplicity", "reassemble",
    "CodedDiffraction", "GaussianAsymmetric", "GaussianLeft",
    "GaussianTwoSided", "MeasurementSet", "adjoint", "forward",
    "load_measurements", "measure", "output_shape", "realized_snr_db",
    "sample_cdp_operator", "sample_gaussian_matrix", "save_measurements",
    "squared_modulus",
    "CodeUpdateResult", "IstaConfig", "ista_column_step", "lipschitz_bound",
    "omp_encode", "soft_threshold", "update_codes_l0", "update_codes_l1",
    "bcd_pass", "init_dictionary", "project_unit_ball",
    "ArmijoPolicy", "HeuristicPolicy", "StepResult", "data_fit_value",
    "grad_data_fit", "grad_patch_fit", "patch_fit_value", "project_box",
    "x_step_armijo", "x_step_heuristic",
    "QualityReport", "evaluate_quality", "mean_sparsity", "psnr", "ssim",
    "JointSolver", "MonotonicityError", "ObjectiveValue",
    "ReconstructionPair", "SnapshotError", "SolverConfig", "SolverState",
    "TraceRow", "default_config", "evaluate_objective", "initial_image",
    "restore", "run_joint", "run_patch_regularized_wf", "run_wf_baseline",
    "snapshot",
    "export_codes_csv", "load_codes_csv", "load_dictionary", "load_image",
    "load_image_channels", "render_atlas", "save_dictionary",
    "save_dictionary_atlas", "save_image",
    "ExperimentResult", "ExperimentSpec", "RunRecord", "read_runs_csv",
    "run_experiment", "summarize", "write_runs_csv", "write_summary_csv",
    "__version__",
]
