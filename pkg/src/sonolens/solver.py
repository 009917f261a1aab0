"""Steady-state single-frequency propagation through voxelized media.

Split-step spatial marching: for each axial step the field is advanced by
a spectral diffraction kernel exp(i*kz*dz) with kz = sqrt(k0^2 - kx^2 - ky^2),
then corrected in the spatial domain by a heterogeneity phase screen
exp(i*k0*(c_ref/c - 1)*dz), an absorption screen exp(-a*dz) (a in Np/m),
and a pressure transmission factor 2*Z2/(Z1+Z2) wherever the impedance
Z = rho*c changes between slices. Interface reflections with coefficient
(Z2-Z1)/(Z2+Z1) are recorded and swept in the opposite direction,
recursively up to the configured reflection order; the total field is the
coherent sum over all sweeps.

Every operation in the chain is complex-linear in the field, so the exact
reverse-mode gradient is obtained by transposing each step. The adjoint
returns gradients with respect to the per-voxel properties (and, when the
forward run embedded a lens with linearly interpolated properties, with
respect to the lens occupancy) plus the source-plane cotangent.

Gradient pairing convention: an upstream cotangent g satisfies
dL = Re(sum(g * dP)) (plain product, no conjugation inside the sum).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.fft import fft2, ifft2

from .grid import GridSpec, MaterialProperties, SourceSpec
from .medium import AcousticMedium


@dataclass
class SolverConfig:
    reflection_order: int = 4
    evanescent_mode: str = "decay"  # "decay" | "truncate"
    angular_cutoff: float = 1.0     # fraction of k0

    def __post_init__(self):
        if not 0 <= self.reflection_order <= 8:
            raise ValueError("reflection_order must lie in [0, 8]")
        if self.evanescent_mode not in ("decay", "truncate"):
            raise ValueError("evanescent_mode must be 'decay' or 'truncate'")
        if self.angular_cutoff <= 0:
            raise ValueError("angular_cutoff must be positive")


@dataclass
class ComplexField:
    """Complex pressure over the full grid (normalized pascals)."""

    values: np.ndarray
    grid: GridSpec

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    def amplitude(self) -> np.ndarray:
        return np.abs(self.values)


def _diffraction_kernel(grid: GridSpec, cfg: SolverConfig) -> np.ndarray:
    """Per-step angular-spectrum transfer function on the FFT grid."""
    k0 = grid.k0
    kx = 2.0 * np.pi * np.fft.fftfreq(grid.nx, d=grid.dx)
    ky = 2.0 * np.pi * np.fft.fftfreq(grid.ny, d=grid.dy)
    kt2 = kx[:, None] ** 2 + ky[None, :] ** 2
    kz2 = k0**2 - kt2
    prop = kz2 >= 0
    H = np.zeros(kt2.shape, dtype=np.complex128)
    H[prop] = np.exp(1j * np.sqrt(kz2[prop]) * grid.dz)
    if cfg.evanescent_mode == "decay":
        H[~prop] = np.exp(-np.sqrt(-kz2[~prop]) * grid.dz)
    # hard angular cutoff (evanescent content is removed whenever cutoff <= 1)
    H[kt2 > (cfg.angular_cutoff * k0) ** 2] = 0.0
    return H


def _diffract(u: np.ndarray, H: np.ndarray) -> np.ndarray:
    return ifft2(H * fft2(u, axes=(0, 1)), axes=(0, 1))


def _diffract_transpose(ubar: np.ndarray, H: np.ndarray) -> np.ndarray:
    # transpose (not conjugate-transpose) of the diffraction operator
    return fft2(H * ifft2(ubar, axes=(0, 1)), axes=(0, 1))


@dataclass
class _Sweep:
    direction: int                      # +1 or -1 along z
    u: list                             # per-slice contribution (None where zero)
    v: list                             # post-diffraction field per visited slice
    inject: dict                        # slice -> injected source (consumed)


@dataclass
class SliceCache:
    """Forward-run state retained for the adjoint sweep."""

    grid: GridSpec
    cfg: SolverConfig
    H: np.ndarray
    c: np.ndarray
    rho: np.ndarray
    att_np: np.ndarray
    sweeps: list = field(default_factory=list)
    # lens embedding for d/d occupancy (None when no lens was embedded)
    lens_z_offset: int | None = None
    lens_dc: np.ndarray | None = None
    lens_drho: np.ndarray | None = None
    lens_datt: np.ndarray | None = None


@dataclass
class AdjointResult:
    """Gradients from a reverse sweep.

    occupancy: dL/d(lens occupancy), present only for lens-embedded runs
    source_plane: holomorphic cotangent of the complex source plane
    c, rho, att_np: full-grid gradients w.r.t. the raw properties
    """

    source_plane: np.ndarray
    c: np.ndarray
    rho: np.ndarray
    att_np: np.ndarray
    occupancy: np.ndarray | None = None


def _screens(grid: GridSpec, c: np.ndarray, att_np: np.ndarray) -> np.ndarray:
    """Combined phase + absorption screen per voxel."""
    k0, dz = grid.k0, grid.dz
    return np.exp(1j * k0 * (grid.c_ref / c - 1.0) * dz - att_np * dz)


def _march(
    grid: GridSpec,
    H: np.ndarray,
    screen: np.ndarray,
    Z: np.ndarray,
    direction: int,
    inject: dict,
    collect_reflections: bool,
) -> tuple[_Sweep, dict]:
    """One directional sweep; returns the sweep record and reflected sources."""
    nz = grid.nz
    order = range(nz) if direction > 0 else range(nz - 1, -1, -1)
    order = list(order)
    u_list: list = [None] * nz
    v_list: list = [None] * nz
    refl: dict = {}

    u = inject.get(order[0])
    u_list[order[0]] = u
    for prev, s in zip(order[:-1], order[1:]):
        src = inject.get(s)
        if u is None:
            u_list[s] = src
            u = src
            continue
        v = _diffract(u, H)
        v_list[s] = v
        Z1, Z2 = Z[:, :, prev], Z[:, :, s]
        t = 2.0 * Z2 / (Z1 + Z2)
        if collect_reflections:
            r = (Z2 - Z1) / (Z1 + Z2)
            if np.any(r != 0.0):
                refl[prev] = r * v
        u = t * v * screen[:, :, s]
        if src is not None:
            u = u + src
        u_list[s] = u
    return _Sweep(direction, u_list, v_list, dict(inject)), refl


def propagate(
    src: SourceSpec,
    medium: AcousticMedium,
    cfg: SolverConfig | None = None,
    source_plane: np.ndarray | None = None,
    source_slice: int = 0,
) -> tuple[ComplexField, SliceCache]:
    """Forward simulation from a planar source.

    source_plane overrides the flat-phase plane built from `src` (used for
    phase-modulated sources). Returns the total field and the cache needed
    by `propagate_adjoint`.
    """
    if cfg is None:
        cfg = SolverConfig()
    grid = medium.grid
    for arr in (medium.c, medium.rho, medium.att):
        if np.any(~np.isfinite(arr)):
            raise ValueError("medium contains non-finite values")
    if source_plane is None:
        source_plane = src.source_plane(grid)
    else:
        source_plane = np.asarray(source_plane, dtype=np.complex128)
        if source_plane.shape != (grid.nx, grid.ny):
            raise ValueError("source plane shape does not match grid")
    att_np = medium.attenuation_np_per_m()
    cache = _propagate_arrays(
        grid, cfg, medium.c, medium.rho, att_np, source_plane, source_slice
    )
    return _total_field(cache), cache


def _propagate_arrays(
    grid: GridSpec,
    cfg: SolverConfig,
    c: np.ndarray,
    rho: np.ndarray,
    att_np: np.ndarray,
    source_plane: np.ndarray,
    source_slice: int = 0,
    initial_direction: int = 1,
) -> SliceCache:
    H = _diffraction_kernel(grid, cfg)
    screen = _screens(grid, c, att_np)
    Z = rho * c
    cache = SliceCache(grid, cfg, H, c, rho, att_np)

    inject = {source_slice: source_plane}
    direction = initial_direction
    for order in range(cfg.reflection_order + 1):
        collect = order < cfg.reflection_order
        sweep, refl = _march(grid, H, screen, Z, direction, inject, collect)
        cache.sweeps.append(sweep)
        if not refl:
            break
        inject = refl
        direction = -direction
    return cache


def _total_field(cache: SliceCache) -> ComplexField:
    grid = cache.grid
    total = np.zeros(grid.shape, dtype=np.complex128)
    for sweep in cache.sweeps:
        for s, u in enumerate(sweep.u):
            if u is not None:
                total[:, :, s] += u
    return ComplexField(total, grid)


def propagate_adjoint(cache: SliceCache, upstream: np.ndarray) -> AdjointResult:
    """Exact reverse-mode sweep through the cached forward chain.

    upstream is dL/dP over the full grid in the pairing dL = Re(sum(g*dP)).
    """
    grid, cfg = cache.grid, cache.cfg
    if upstream.shape != grid.shape:
        raise ValueError("upstream gradient shape does not match the cached grid")
    nz = grid.nz
    H = cache.H
    c, rho, att_np = cache.c, cache.rho, cache.att_np
    screen = _screens(grid, c, att_np)
    Z = rho * c
    k0, dz = grid.k0, grid.dz

    gc = np.zeros(grid.shape)
    grho = np.zeros(grid.shape)
    gatt = np.zeros(grid.shape)
    source_cot = np.zeros((grid.nx, grid.ny), dtype=np.complex128)

    # cotangents of the reflections a sweep emitted, filled in while
    # processing the consuming (later) sweep
    refl_cot: dict = {}
    for sweep in reversed(cache.sweeps):
        inject_cot = _sweep_adjoint(
            grid, cfg, H, screen, Z, c, rho, sweep, upstream, refl_cot,
            gc, grho, gatt,
        )
        refl_cot = inject_cot
    # whatever remains feeds the original source plane
    for s, g in refl_cot.items():
        source_cot += g

    result = AdjointResult(source_cot, gc, grho, gatt)
    if cache.lens_z_offset is not None:
        z0 = cache.lens_z_offset
        n_v = cache.lens_dc.shape[2]
        sl = np.s_[:, :, z0 : z0 + n_v]
        result.occupancy = (
            gc[sl] * cache.lens_dc
            + grho[sl] * cache.lens_drho
            + gatt[sl] * cache.lens_datt
        )
    return result


def _sweep_adjoint(
    grid, cfg, H, screen, Z, c, rho, sweep: _Sweep, upstream, refl_cot,
    gc, grho, gatt,
):
    """Reverse one sweep; returns cotangents of its consumed injections."""
    nz = grid.nz
    k0, dz = grid.k0, grid.dz
    direction = sweep.direction
    order = list(range(nz)) if direction > 0 else list(range(nz - 1, -1, -1))
    # restrict to the part of the march where the field was live
    live = [s for s in order if sweep.u[s] is not None]
    if not live:
        return {}
    start = order.index(live[0])
    order = order[start:]

    inject_cot: dict = {}
    carry = np.zeros((grid.nx, grid.ny), dtype=np.complex128)
    for prev, s in zip(reversed(order[:-1]), reversed(order[1:])):
        if sweep.u[s] is None:
            continue
        ub = carry + upstream[:, :, s]
        if s in sweep.inject:
            inject_cot[s] = ub.copy()
        v = sweep.v[s]
        if v is None:
            # march had not started yet at this slice (pure injection)
            carry = np.zeros_like(carry)
            continue
        Z1, Z2 = Z[:, :, prev], Z[:, :, s]
        denom = Z1 + Z2
        t = 2.0 * Z2 / denom
        scr = screen[:, :, s]

        vbar = ub * t * scr
        gt = np.real(ub * v * scr)
        gr = None
        if prev in refl_cot:
            r = (Z2 - Z1) / denom
            vbar = vbar + refl_cot[prev] * r
            gr = np.real(refl_cot[prev] * v)

        # screen derivative: d screen/dc = screen * (-i*k0*c_ref*dz/c^2),
        #                    d screen/da = -dz * screen
        gscr = ub * t * v
        gc[:, :, s] += np.real(gscr * scr * (-1j) * k0 * grid.c_ref * dz) / (
            c[:, :, s] ** 2
        )
        gatt[:, :, s] += np.real(gscr * scr) * (-dz)

        # impedance chain: dt/dZ1 = -2*Z2/denom^2, dt/dZ2 = 2*Z1/denom^2
        #                  dr/dZ1 = -2*Z2/denom^2, dr/dZ2 = 2*Z1/denom^2
        gZ1 = gt * (-2.0 * Z2 / denom**2)
        gZ2 = gt * (2.0 * Z1 / denom**2)
        if gr is not None:
            gZ1 += gr * (-2.0 * Z2 / denom**2)
            gZ2 += gr * (2.0 * Z1 / denom**2)
        gc[:, :, prev] += gZ1 * rho[:, :, prev]
        grho[:, :, prev] += gZ1 * c[:, :, prev]
        gc[:, :, s] += gZ2 * rho[:, :, s]
        grho[:, :, s] += gZ2 * c[:, :, s]

        carry = _diffract_transpose(vbar, H)

    s0 = order[0]
    ub0 = carry + upstream[:, :, s0]
    if s0 in sweep.inject:
        inject_cot[s0] = ub0
    return inject_cot


def propagate_with_lens(
    src: SourceSpec,
    base: AcousticMedium,
    occupancy: np.ndarray,
    lens_mat: MaterialProperties,
    z_offset: int = 0,
    cfg: SolverConfig | None = None,
    source_plane: np.ndarray | None = None,
) -> tuple[ComplexField, SliceCache]:
    """Differentiable forward run with a lens relaxed into the medium.

    Properties inside the lens slab interpolate linearly in occupancy
    between the background and the lens material (a straight-through
    relaxation of the hard embedding threshold), so the returned cache
    yields exact occupancy gradients via `propagate_adjoint`.
    """
    if cfg is None:
        cfg = SolverConfig()
    grid = base.grid
    occupancy = np.asarray(getattr(occupancy, "occupancy", occupancy), dtype=np.float64)
    if occupancy.shape[:2] != (grid.nx, grid.ny):
        raise ValueError("lens lateral shape does not match grid")
    n_v = occupancy.shape[2]
    if z_offset < 0 or z_offset + n_v > grid.nz:
        raise ValueError("lens exceeds the axial extent of the grid")
    if source_plane is None:
        source_plane = src.source_plane(grid)

    att_np = base.attenuation_np_per_m()
    lens_att_np = lens_mat.attenuation_np_per_m(grid.frequency)
    sl = np.s_[:, :, z_offset : z_offset + n_v]
    dc = lens_mat.sound_speed - base.c[sl]
    drho = lens_mat.density - base.rho[sl]
    datt = lens_att_np - att_np[sl]

    c = base.c.copy()
    rho = base.rho.copy()
    att = att_np.copy()
    c[sl] += occupancy * dc
    rho[sl] += occupancy * drho
    att[sl] += occupancy * datt

    cache = _propagate_arrays(grid, cfg, c, rho, att,
                              np.asarray(source_plane, dtype=np.complex128))
    cache.lens_z_offset = z_offset
    cache.lens_dc = dc
    cache.lens_drho = drho
    cache.lens_datt = datt
    return _total_field(cache), cache


def apply_phase_delays(
    src: SourceSpec, phase: np.ndarray, grid: GridSpec
) -> np.ndarray:
    """Complex source plane A*exp(i*phi) on the aperture, zero elsewhere."""
    phase = np.asarray(phase, dtype=np.float64)
    if phase.shape != (grid.nx, grid.ny):
        raise ValueError("phase map shape does not match grid")
    src.validate(grid)
    return src.amplitude * src.aperture_mask * np.exp(1j * phase)


def backproject(
    plane: np.ndarray,
    grid: GridSpec,
    distances,
    cfg: SolverConfig | None = None,
) -> np.ndarray:
    """Angular-spectrum backprojection of a measured complex plane.

    Propagates `plane` by the conjugate kernel over each requested
    distance (positive = toward the source) assuming homogeneous water.
    Returns an (nx, ny, len(distances)) complex volume.
    """
    if cfg is None:
        cfg = SolverConfig()
    plane = np.asarray(plane, dtype=np.complex128)
    if plane.shape != (grid.nx, grid.ny):
        raise ValueError("plane shape does not match grid")
    distances = np.atleast_1d(np.asarray(distances, dtype=np.float64))
    if distances.size == 0:
        raise ValueError("at least one backprojection distance is required")
    domain = grid.nz * grid.dz
    if np.any(np.abs(distances) > domain):
        raise ValueError("backprojection distance exceeds the domain depth")

    k0 = grid.k0
    kx = 2.0 * np.pi * np.fft.fftfreq(grid.nx, d=grid.dx)
    ky = 2.0 * np.pi * np.fft.fftfreq(grid.ny, d=grid.dy)
    kt2 = kx[:, None] ** 2 + ky[None, :] ** 2
    kz2 = k0**2 - kt2
    prop = kz2 >= 0
    kz = np.sqrt(np.abs(kz2))
    spec = fft2(plane)
    out = np.zeros((grid.nx, grid.ny, distances.size), dtype=np.complex128)
    for i, d in enumerate(distances):
        Hb = np.zeros(kt2.shape, dtype=np.complex128)
        Hb[prop] = np.exp(-1j * kz[prop] * d)
        if cfg.evanescent_mode == "decay":
            Hb[~prop] = np.exp(-kz[~prop] * abs(d))
        Hb[kt2 > (cfg.angular_cutoff * k0) ** 2] = 0.0
        out[:, :, i] = ifft2(Hb * spec)
    return out
