"""Simulation grid, material catalog, and source descriptions.

All physical quantities are SI (meters, Hz, m/s, kg/m^3) except the
attenuation coefficient, which follows the ultrasound convention
dB/(MHz^y * cm) with a frequency power law exponent y.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

NEPER_PER_DB = np.log(10.0) / 20.0


@dataclass(frozen=True)
class GridSpec:
    """Uniform voxel grid for single-frequency field simulation.

    The lateral spacings must be isotropic (dx == dy) because diffraction
    is handled in the 2D spatial-frequency domain. The axial sampling must
    resolve the wavelength in the reference medium: at least 4 points per
    wavelength, with a warning below 6.
    """

    nx: int
    ny: int
    nz: int
    dx: float
    dy: float
    dz: float
    frequency: float
    c_ref: float = 1500.0

    def __post_init__(self):
        for name in ("nx", "ny", "nz"):
            n = getattr(self, name)
            if not isinstance(n, (int, np.integer)) or n < 4:
                raise ValueError(f"{name} must be an integer >= 4, got {n!r}")
        for name in ("dx", "dy", "dz", "frequency", "c_ref"):
            v = getattr(self, name)
            if not v > 0:
                raise ValueError(f"{name} must be positive, got {v!r}")
        if not np.isclose(self.dx, self.dy, rtol=1e-12):
            raise ValueError("lateral spacing must be isotropic (dx == dy)")
        ppw = self.points_per_wavelength
        if ppw < 4:
            raise ValueError(
                f"axial sampling too coarse: {ppw:.2f} points per wavelength (need >= 4)"
            )
        if ppw < 6:
            warnings.warn(
                f"marginal axial sampling: {ppw:.2f} points per wavelength (< 6)",
                stacklevel=2,
            )

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def wavelength(self) -> float:
        """Wavelength in the reference medium."""
        return self.c_ref / self.frequency

    @property
    def points_per_wavelength(self) -> float:
        return self.c_ref / (self.frequency * self.dz)

    @property
    def k0(self) -> float:
        """Reference wavenumber 2*pi*f/c_ref."""
        return 2.0 * np.pi * self.frequency / self.c_ref

    @property
    def voxel_volume(self) -> float:
        return self.dx * self.dy * self.dz


@dataclass(frozen=True)
class MaterialProperties:
    """Acoustic bulk properties of a single material.

    attenuation_coeff is in dB/(MHz^y * cm); attenuation_power is the
    frequency power-law exponent y.
    """

    sound_speed: float
    density: float
    attenuation_coeff: float = 0.0
    attenuation_power: float = 1.0

    def __post_init__(self):
        if not self.sound_speed > 0:
            raise ValueError("sound_speed must be positive")
        if not self.density > 0:
            raise ValueError("density must be positive")
        if self.attenuation_coeff < 0:
            raise ValueError("attenuation_coeff must be non-negative")
        if not 0.5 <= self.attenuation_power <= 2.0:
            raise ValueError("attenuation_power must lie in [0.5, 2]")

    @property
    def impedance(self) -> float:
        """Characteristic acoustic impedance rho*c in Rayl."""
        return self.density * self.sound_speed

    def attenuation_np_per_m(self, frequency: float) -> float:
        """Power-law attenuation at `frequency` (Hz), in Np/m."""
        f_mhz = frequency / 1e6
        return (
            self.attenuation_coeff
            * f_mhz**self.attenuation_power
            * NEPER_PER_DB
            * 100.0
        )


# Measured properties of common coupling media and SLA printing resins.
WATER = MaterialProperties(sound_speed=1500.0, density=1000.0)
FORM_CLEAR = MaterialProperties(2591.0, 1178.0, 2.922, 1.044)
VEROCLEAR = MaterialProperties(2473.0, 1181.0, 3.696, 0.9958)
AGILUS30 = MaterialProperties(2035.0, 1128.0, 9.109, 1.017)

# Generic cortical-bone surrogate used by the synthetic skull phantom.
BONE = MaterialProperties(2800.0, 1850.0, 8.0, 1.0)


@dataclass
class SourceSpec:
    """Planar piston source at the first axial slice of the grid.

    The aperture mask is a hard-edged disk; amplitude is normalized so the
    emitted plane-wave pressure is 1 inside the aperture.
    """

    frequency: float
    aperture_diameter: float
    aperture_mask: np.ndarray
    amplitude: float = 1.0

    @classmethod
    def disk(cls, grid: GridSpec, aperture_diameter: float, amplitude: float = 1.0
             ) -> "SourceSpec":
        """Build a centered disk aperture on the given grid."""
        x = (np.arange(grid.nx) - (grid.nx - 1) / 2.0) * grid.dx
        y = (np.arange(grid.ny) - (grid.ny - 1) / 2.0) * grid.dy
        rr = x[:, None] ** 2 + y[None, :] ** 2
        mask = (rr <= (aperture_diameter / 2.0) ** 2).astype(np.float64)
        return cls(grid.frequency, aperture_diameter, mask, amplitude)

    @classmethod
    def full_plane(cls, grid: GridSpec, amplitude: float = 1.0) -> "SourceSpec":
        """Plane-wave source covering the whole lateral extent."""
        diag = np.hypot(grid.nx * grid.dx, grid.ny * grid.dy)
        mask = np.ones((grid.nx, grid.ny))
        return cls(grid.frequency, 2.0 * diag, mask, amplitude)

    def validate(self, grid: GridSpec) -> None:
        if not np.isclose(self.frequency, grid.frequency, rtol=1e-9):
            raise ValueError("source frequency must equal grid frequency")
        if self.aperture_mask.shape != (grid.nx, grid.ny):
            raise ValueError(
                f"aperture mask shape {self.aperture_mask.shape} does not match "
                f"grid ({grid.nx}, {grid.ny})"
            )
        x = (np.arange(grid.nx) - (grid.nx - 1) / 2.0) * grid.dx
        y = (np.arange(grid.ny) - (grid.ny - 1) / 2.0) * grid.dy
        rr = np.sqrt(x[:, None] ** 2 + y[None, :] ** 2)
        # half a voxel of slack for the rasterized disk edge
        outside = rr > self.aperture_diameter / 2.0 + grid.dx
        if np.any(self.aperture_mask[outside] != 0):
            raise ValueError("aperture mask is nonzero outside the stated diameter")

    def source_plane(self, grid: GridSpec) -> np.ndarray:
        """Complex pressure at the source plane (flat phase)."""
        self.validate(grid)
        return (self.amplitude * self.aperture_mask).astype(np.complex128)
