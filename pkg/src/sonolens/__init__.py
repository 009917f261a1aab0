"""Differentiable design of thickness-only acoustic hologram lenses.

The package covers the full pipeline: heterogeneous voxel media, a
split-step spectral wave solver with exact adjoint gradients, a smooth
2D-design-to-3D-lens mapping, the loss stack and Adam loop that optimize
lens geometry end to end, phase-map baselines (gradient phase retrieval,
time reversal), and the evaluation suite (focal metrics, cross-domain
PSNR, bioheat thermal simulation, robustness sweeps).
"""

from .grid import (
    AGILUS30,
    BONE,
    FORM_CLEAR,
    NEPER_PER_DB,
    VEROCLEAR,
    WATER,
    GridSpec,
    MaterialProperties,
    SourceSpec,
)
from .medium import (
    AcousticMedium,
    HUCalibration,
    embed_lens,
    ingest_hu_volume,
    make_homogeneous,
    make_skull_phantom,
)
from .lensmap import (
    BetaSchedule,
    DesignField,
    LensVolume,
    binarize,
    fabrication_filter,
)
from .solver import (
    ComplexField,
    SolverConfig,
    apply_phase_delays,
    backproject,
    propagate,
    propagate_adjoint,
    propagate_with_lens,
)
from .optim import (
    Adam,
    DesignResult,
    LossReport,
    OptimConfig,
    TargetSpec,
    gradcheck,
    loss_acc,
    loss_and_gradient,
    loss_balance,
    loss_energy,
    optimize_lens_geometry,
)
from .baselines import (
    PhaseMap,
    fabricate_and_simulate,
    full_cycle_thickness,
    optimize_phase_map,
    phase_to_thickness,
    thickness_to_phase,
    time_reversal,
)
from .analysis import (
    PSNR_CAP_DB,
    FocalReport,
    FocusMetrics,
    ThermalConfig,
    bioheat_simulate,
    cross_domain_psnr,
    focal_metrics,
    perturb_lens,
    segment_foci,
    sweep_material,
)

__version__ = "0.1.0"

__all__ = [
    "AGILUS30", "BONE", "FORM_CLEAR", "NEPER_PER_DB", "VEROCLEAR", "WATER",
    "GridSpec", "MaterialProperties", "SourceSpec",
    "AcousticMedium", "HUCalibration", "embed_lens", "ingest_hu_volume",
    "make_homogeneous", "make_skull_phantom",
    "BetaSchedule", "DesignField", "LensVolume", "binarize",
    "fabrication_filter",
    "ComplexField", "SolverConfig", "apply_phase_delays", "backproject",
    "propagate", "propagate_adjoint", "propagate_with_lens",
    "Adam", "DesignResult", "LossReport", "OptimConfig", "TargetSpec",
    "gradcheck", "loss_acc", "loss_and_gradient", "loss_balance",
    "loss_energy", "optimize_lens_geometry",
    "PhaseMap", "fabricate_and_simulate", "full_cycle_thickness",
    "optimize_phase_map", "phase_to_thickness", "thickness_to_phase",
    "time_reversal",
    "PSNR_CAP_DB", "FocalReport", "FocusMetrics", "ThermalConfig",
    "bioheat_simulate", "cross_domain_psnr", "focal_metrics", "perturb_lens",
    "segment_foci", "sweep_material",
]
