"""Phase-only hologram baselines and the common fabrication pipeline.

Phase-domain designs (gradient phase retrieval, time reversal) live in an
idealized optimization domain where the phase map acts directly on the
source plane. For physical evaluation they are converted into a
thickness-modulated lens, hard-voxelized, fabrication-filtered, embedded
in the medium, and re-simulated ("fabrication domain").
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridSpec, MaterialProperties, SourceSpec
from .medium import AcousticMedium, embed_lens
from . import lensmap
from .lensmap import LensVolume
from .solver import (
    ComplexField,
    SolverConfig,
    _propagate_arrays,
    _total_field,
    apply_phase_delays,
    propagate,
    propagate_adjoint,
)
from .optim import Adam, LossReport, OptimConfig, TargetSpec, loss_and_gradient

TWO_PI = 2.0 * np.pi


@dataclass
class PhaseMap:
    """Aperture phase delays, wrapped to [0, 2*pi)."""

    phi: np.ndarray

    def __post_init__(self):
        self.phi = np.mod(np.asarray(self.phi, dtype=np.float64), TWO_PI)
        if self.phi.ndim != 2:
            raise ValueError("phase map must be 2D")


def optimize_phase_map(
    src: SourceSpec,
    medium: AcousticMedium,
    target: TargetSpec,
    cfg: OptimConfig,
    init: np.ndarray | None = None,
) -> tuple[PhaseMap, LossReport]:
    """Gradient phase retrieval: optimize phi through the wave solver.

    No lens volume is embedded; the phase acts directly on the source
    plane (the phase-only optimization domain). Uses the same loss stack
    and Adam settings as the geometry optimization.
    """
    grid = medium.grid
    phi = (np.zeros((grid.nx, grid.ny)) if init is None
           else np.asarray(init, dtype=np.float64).copy())
    adam = Adam(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    report = LossReport(cfg.lambda_energy, cfg.lambda_balance)
    mask = src.amplitude * src.aperture_mask

    for it in range(cfg.iterations):
        plane = apply_phase_delays(src, phi, grid)
        p, cache = propagate(src, medium, cfg.solver, source_plane=plane)
        l_acc, l_en, l_bal, upstream = loss_and_gradient(
            p.values, target, cfg.lambda_energy, cfg.lambda_balance
        )
        total = report.append(l_acc, l_en, l_bal)
        if not np.isfinite(total):
            raise RuntimeError(f"phase optimization diverged at iteration {it}")
        adj = propagate_adjoint(cache, upstream)
        # d plane / d phi = i * A * exp(i*phi) on the aperture
        g_phi = np.real(adj.source_plane * 1j * mask * np.exp(1j * phi))
        phi = adam.step(phi, g_phi)

    return PhaseMap(phi), report


def full_cycle_thickness(frequency: float, c0: float, c_lens: float) -> float:
    """Thickness producing a full 2*pi relative phase shift, in meters."""
    if c_lens == c0:
        raise ValueError("lens and medium sound speeds must differ")
    return 1.0 / (frequency * abs(1.0 / c0 - 1.0 / c_lens))


def phase_to_thickness(
    phi: np.ndarray,
    frequency: float,
    c0: float,
    c_lens: float,
    t_min: float = 250e-6,
    t_max: float | None = None,
) -> np.ndarray:
    """Convert a wrapped phase-delay map into a lens thickness map (m).

    For a lens material faster than the medium (c_lens > c0) a thicker
    lens advances the phase, so larger delay maps to thinner material
    (delay-complement convention):

        T = t_min + ((2*pi - phi) mod 2*pi) / (2*pi) * T_2pi

    The result is clamped to [t_min, t_max]; t_max defaults to
    t_min + T_2pi.
    """
    phi = np.mod(np.asarray(getattr(phi, "phi", phi), dtype=np.float64), TWO_PI)
    t_2pi = full_cycle_thickness(frequency, c0, c_lens)
    if c_lens > c0:
        frac = np.mod(TWO_PI - phi, TWO_PI) / TWO_PI
    else:
        frac = phi / TWO_PI
    thickness = t_min + frac * t_2pi
    hi = t_min + t_2pi if t_max is None else t_max
    return np.clip(thickness, t_min, hi)


def thickness_to_phase(
    thickness: np.ndarray,
    frequency: float,
    c0: float,
    c_lens: float,
    t_min: float = 250e-6,
) -> np.ndarray:
    """Relative transmission phase of a thickness map, inverse of the above."""
    t_2pi = full_cycle_thickness(frequency, c0, c_lens)
    frac = (np.asarray(thickness) - t_min) / t_2pi
    if c_lens > c0:
        return np.mod(TWO_PI - frac * TWO_PI, TWO_PI)
    return np.mod(frac * TWO_PI, TWO_PI)


def _aperture_field_from_foci(
    src: SourceSpec,
    medium: AcousticMedium,
    foci,
    cfg: SolverConfig | None = None,
) -> np.ndarray:
    """Sum of point-source fields back-propagated to the source plane."""
    if cfg is None:
        cfg = SolverConfig()
    grid = medium.grid
    att_np = medium.attenuation_np_per_m()
    total = np.zeros((grid.nx, grid.ny), dtype=np.complex128)
    for ix, iy, iz in foci:
        ix, iy, iz = int(ix), int(iy), int(iz)
        if not (0 <= ix < grid.nx and 0 <= iy < grid.ny and 0 < iz < grid.nz):
            raise ValueError(
                f"focus ({ix}, {iy}, {iz}) is degenerate or outside the grid"
            )
        delta = np.zeros((grid.nx, grid.ny), dtype=np.complex128)
        delta[ix, iy] = 1.0
        cache = _propagate_arrays(
            grid, cfg, medium.c, medium.rho, att_np, delta,
            source_slice=iz, initial_direction=-1,
        )
        total += _total_field(cache).values[:, :, 0]
    return total


def time_reversal(
    src: SourceSpec,
    medium: AcousticMedium,
    foci,
    cfg: SolverConfig | None = None,
) -> PhaseMap:
    """Aberration-corrected phases by back-propagation from the targets.

    A point source at each focus is marched backward through the
    heterogeneous medium to the source plane; the aperture phase is the
    conjugate of the summed field's phase. Multi-focus patterns combine
    by complex summation.
    """
    field_at_aperture = _aperture_field_from_foci(src, medium, foci, cfg)
    return PhaseMap(-np.angle(field_at_aperture))


def fabricate_and_simulate(
    design,
    src: SourceSpec,
    medium: AcousticMedium,
    lens_mat: MaterialProperties,
    cfg: SolverConfig | None = None,
    z_offset: int = 0,
    t_min: float = 250e-6,
    t_max: float | None = None,
    n_v: int | None = None,
    fab_cutoff: float | None = None,
    threshold: float = 0.9,
) -> tuple[ComplexField, LensVolume]:
    """Fabrication-domain field of any hologram design.

    A PhaseMap is first converted to a thickness profile; a LensVolume is
    used as-is. Either way the lens is hard-binarized, low-pass filtered
    to emulate printer resolution, embedded at the 0.9 occupancy
    threshold, and propagated.
    """
    grid = medium.grid
    if cfg is None:
        cfg = SolverConfig()
    dz = grid.dz
    if isinstance(design, PhaseMap) or (
        isinstance(design, np.ndarray) and design.ndim == 2
    ):
        thickness_m = phase_to_thickness(
            design, grid.frequency, grid.c_ref, lens_mat.sound_speed, t_min, t_max
        )
        t_vox = thickness_m / dz
        depth = n_v if n_v is not None else int(np.ceil(t_vox.max()))
        lens = LensVolume(
            np.zeros((grid.nx, grid.ny, depth)), t_vox,
            v_min=float(t_vox.min()), v_max=float(depth),
        )
        lens = lensmap.binarize(lens)
    elif isinstance(design, LensVolume):
        lens = lensmap.binarize(design)
    else:
        raise TypeError("design must be a PhaseMap, phase array, or LensVolume")

    cutoff = fab_cutoff if fab_cutoff is not None else 2.0 * grid.dx
    lens = lensmap.fabrication_filter(lens, cutoff, grid.dx)
    embedded = embed_lens(medium, lens.occupancy, lens_mat, z_offset, threshold)
    field_, _ = propagate(src, embedded, cfg)
    return field_, lens
