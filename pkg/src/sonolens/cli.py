"""Configuration-driven command line for reproducible design and analysis runs.

Subcommands: design, evaluate, sweep, backproject, gradcheck.
Configs are JSON with ``//`` line comments allowed; every physical
quantity carries its unit as a key suffix (``spacing_um``,
``radius_mm``, ``frequency_mhz``). Each run writes a resolved-config
snapshot (pure SI, comment-free) whose hash is embedded in the headers
of all exported arrays. Exit codes: 0 success, 2 configuration error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, baselines, io, lensmap, optim
from .grid import (
    AGILUS30, BONE, FORM_CLEAR, VEROCLEAR, WATER,
    GridSpec, MaterialProperties, SourceSpec,
)
from .lensmap import DesignField, LensVolume
from .medium import make_homogeneous, make_skull_phantom, ingest_hu_volume
from .optim import OptimConfig, TargetSpec
from .solver import SolverConfig, apply_phase_delays, backproject, propagate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

MATERIALS = {
    "water": WATER,
    "form_clear": FORM_CLEAR,
    "veroclear": VEROCLEAR,
    "agilus30": AGILUS30,
    "bone": BONE,
}

# Published measurement variants of the clear SLA resin used for the
# default material-robustness sweep (sound speed, density); attenuation
# is held at the catalog value.
CLEAR_RESIN_VARIANTS = [
    MaterialProperties(2424.0, 1100.0, 2.922, 1.044),
    MaterialProperties(2440.0, 1162.0, 2.922, 1.044),
    MaterialProperties(2591.0, 1178.0, 2.922, 1.044),
    MaterialProperties(2700.0, 1180.0, 2.922, 1.044),
]


class ConfigError(Exception):
    """Invalid or incomplete run configuration."""


# ------------------------------------------------------------------ config

_UNIT_SCALE = {
    "m": 1.0, "mm": 1e-3, "um": 1e-6, "nm": 1e-9,
    "hz": 1.0, "khz": 1e3, "mhz": 1e6,
    "s": 1.0, "ms": 1e-3, "us": 1e-6,
    "pa": 1.0, "kpa": 1e3, "mpa": 1e6,
}


def strip_comments(text: str) -> str:
    """Remove // line comments outside of string literals."""
    out = []
    for line in text.splitlines():
        in_str = False
        i = 0
        while i < len(line):
            ch = line[i]
            if ch == '"' and (i == 0 or line[i - 1] != "\\"):
                in_str = not in_str
            elif not in_str and ch == "/" and line[i : i + 2] == "//":
                line = line[:i]
                break
            i += 1
        out.append(line)
    return "\n".join(out)


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        return json.loads(strip_comments(path.read_text()))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc


def get_quantity(section: dict, base: str, default=None, required=False):
    """Fetch `base` with any recognized unit suffix, converted to SI."""
    hits = []
    for key, value in section.items():
        if key == base:
            hits.append((key, float(value)))
        elif key.startswith(base + "_"):
            suffix = key[len(base) + 1 :].lower()
            if suffix in _UNIT_SCALE:
                hits.append((key, float(value) * _UNIT_SCALE[suffix]))
    if len(hits) > 1:
        names = ", ".join(k for k, _ in hits)
        raise ConfigError(f"conflicting keys for '{base}': {names}")
    if hits:
        return hits[0][1]
    if required:
        raise ConfigError(f"{base}: required")
    return default


def _vector_quantity(section: dict, base: str, required=False):
    """Like get_quantity but for lists (or lists of lists) of numbers."""
    for key, value in section.items():
        if key == base:
            return np.asarray(value, dtype=np.float64)
        if key.startswith(base + "_"):
            suffix = key[len(base) + 1 :].lower()
            if suffix in _UNIT_SCALE:
                return np.asarray(value, dtype=np.float64) * _UNIT_SCALE[suffix]
    if required:
        raise ConfigError(f"{base}: required")
    return None


def _section(cfg: dict, name: str, required=True) -> dict:
    sec = cfg.get(name)
    if sec is None:
        if required:
            raise ConfigError(f"{name}: required")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(f"{name}: must be an object")
    return sec


def _material(name_or_obj, context: str) -> MaterialProperties:
    if isinstance(name_or_obj, str):
        key = name_or_obj.lower()
        if key not in MATERIALS:
            known = ", ".join(sorted(MATERIALS))
            raise ConfigError(f"{context}: unknown material '{name_or_obj}' "
                              f"(known: {known})")
        return MATERIALS[key]
    if isinstance(name_or_obj, dict):
        try:
            return MaterialProperties(
                float(name_or_obj["sound_speed"]),
                float(name_or_obj["density"]),
                float(name_or_obj.get("attenuation_coeff", 0.0)),
                float(name_or_obj.get("attenuation_power", 1.0)),
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{context}: bad material spec: {exc}") from exc
    raise ConfigError(f"{context}: material must be a name or an object")


def build_grid(cfg: dict) -> GridSpec:
    sec = _section(cfg, "grid")
    try:
        nx, ny, nz = (int(sec[k]) for k in ("nx", "ny", "nz"))
    except KeyError as exc:
        raise ConfigError(f"grid: missing {exc.args[0]}") from exc
    spacing = get_quantity(sec, "spacing")
    dx = get_quantity(sec, "dx", spacing)
    dy = get_quantity(sec, "dy", spacing)
    dz = get_quantity(sec, "dz", spacing)
    if dx is None or dy is None or dz is None:
        raise ConfigError("grid: spacing (or dx/dy/dz) required")
    frequency = get_quantity(sec, "frequency", required=True)
    c_ref = get_quantity(sec, "c_ref", 1500.0)
    try:
        return GridSpec(nx, ny, nz, dx, dy, dz, frequency, c_ref)
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc


def build_source(cfg: dict, grid: GridSpec) -> SourceSpec:
    sec = _section(cfg, "source")
    if sec.get("full_plane", False):
        return SourceSpec.full_plane(grid, float(sec.get("amplitude", 1.0)))
    diameter = get_quantity(sec, "aperture_diameter", required=True)
    try:
        return SourceSpec.disk(grid, diameter, float(sec.get("amplitude", 1.0)))
    except ValueError as exc:
        raise ConfigError(f"source: {exc}") from exc


def build_medium(cfg: dict, grid: GridSpec):
    sec = _section(cfg, "medium")
    kind = sec.get("kind", "homogeneous")
    try:
        if kind == "homogeneous":
            return make_homogeneous(grid, _material(sec.get("material", "water"),
                                                    "medium"))
        if kind == "phantom":
            center = _vector_quantity(sec, "center", required=True)
            inner = get_quantity(sec, "inner_radius", required=True)
            thick = get_quantity(sec, "thickness", required=True)
            bone = _material(sec.get("bone_material", "bone"), "medium")
            bg = _material(sec.get("background_material", "water"), "medium")
            return make_skull_phantom(grid, tuple(center), inner, thick, bone, bg)
        if kind == "hu_file":
            if "path" not in sec:
                raise ConfigError("medium: path required for kind hu_file")
            hu_grid, hu = io.load_hu_volume(sec["path"])
            if hu_grid.shape != grid.shape:
                raise ConfigError("medium: HU volume grid does not match config grid")
            return ingest_hu_volume(grid, hu)
    except FileNotFoundError as exc:
        raise ConfigError(f"medium: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"medium: {exc}") from exc
    raise ConfigError(f"medium: unknown kind '{kind}'")


def build_target(cfg: dict, grid: GridSpec) -> TargetSpec:
    sec = _section(cfg, "target")
    centers = _vector_quantity(sec, "focus_centers", required=True)
    centers = np.atleast_2d(centers)
    if centers.shape[1] != 3:
        raise ConfigError("target: focus centers must be (x, y, z) triples")
    radius = get_quantity(sec, "radius", required=True)
    try:
        return TargetSpec.from_spheres(grid, centers, radius)
    except ValueError as exc:
        raise ConfigError(f"target: {exc}") from exc


def build_solver(cfg: dict) -> SolverConfig:
    sec = _section(cfg, "solver", required=False)
    try:
        return SolverConfig(
            reflection_order=int(sec.get("reflection_order", 4)),
            evanescent_mode=sec.get("evanescent_mode", "decay"),
            angular_cutoff=float(sec.get("angular_cutoff", 1.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from exc


def build_optim(cfg: dict, solver: SolverConfig, seed) -> OptimConfig:
    sec = _section(cfg, "optim", required=False)
    try:
        schedule = lensmap.BetaSchedule(
            float(sec.get("beta_start", 1.0)),
            float(sec.get("beta_end", 20.0)),
            max(int(sec.get("iterations", 200)), 1),
        )
        return OptimConfig(
            learning_rate=float(sec.get("learning_rate", 1.0)),
            iterations=int(sec.get("iterations", 200)),
            lambda_energy=float(sec.get("lambda_energy", 0.2)),
            lambda_balance=float(sec.get("lambda_balance", 0.5)),
            beta_schedule=schedule,
            seed=seed,
            solver=solver,
        )
    except ValueError as exc:
        raise ConfigError(f"optim: {exc}") from exc


def build_lens_params(cfg: dict, grid: GridSpec) -> dict:
    sec = _section(cfg, "lens", required=False)
    material = _material(sec.get("material", "form_clear"), "lens")
    t_min = get_quantity(sec, "t_min", 250e-6)
    t_max = get_quantity(sec, "t_max", 1.9e-3)
    v_max = sec.get("v_max", t_max / grid.dz)
    params = {
        "material": material,
        "alpha": float(sec.get("alpha", 0.1)),
        "v_min": float(sec.get("v_min", max(t_min / grid.dz, 1.0))),
        "v_max": float(v_max),
        "z_offset": int(sec.get("z_offset", 0)),
        "t_min": t_min,
        "t_max": t_max,
        "kernel_size": int(sec.get("kernel_size", 9)),
        "smooth_sigma": float(sec.get("smooth_sigma", 1.5)),
        "fab_cutoff": get_quantity(sec, "fab_cutoff"),
    }
    if params["v_min"] >= params["v_max"]:
        raise ConfigError("lens: v_min must be smaller than v_max")
    return params


def resolved_config(cfg: dict, grid: GridSpec, seed, precision: str) -> dict:
    """Pure-SI snapshot of the effective run configuration."""
    snap = json.loads(json.dumps(cfg))  # deep copy
    snap["grid"] = {
        "nx": grid.nx, "ny": grid.ny, "nz": grid.nz,
        "dx_m": grid.dx, "dy_m": grid.dy, "dz_m": grid.dz,
        "frequency_hz": grid.frequency, "c_ref": grid.c_ref,
    }
    snap["seed"] = seed
    snap["precision"] = precision
    return snap


def config_hash(snapshot: dict) -> str:
    blob = json.dumps(snapshot, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_snapshot(out: Path, snapshot: dict) -> str:
    out.mkdir(parents=True, exist_ok=True)
    h = config_hash(snapshot)
    with open(out / "resolved_config.json", "w") as fh:
        json.dump({"config_hash": h, **snapshot}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return h


def _apply_precision(medium, precision: str):
    if precision == "f64":
        return medium
    med = medium.copy()
    for name in ("c", "rho", "att", "att_power"):
        setattr(med, name, getattr(med, name).astype(np.float32).astype(np.float64))
    return med


def _focus_seeds(target: TargetSpec):
    return [tuple(c) for c in target.focus_centers]


def _write_report(out: Path, field_, seeds, psnr=None, name="report.json"):
    segments = analysis.segment_foci(field_, seeds)
    if any(m.any() for m in segments):
        report = analysis.focal_metrics(field_, segments)
    else:
        # no seed reached the -6 dB level; report an empty focal pattern
        report = analysis.FocalReport([], None, None, 0)
    report.psnr_cross_domain = psnr
    report.to_json(out / name)
    rows = []
    by_label = {f.label: f for f in report.foci}
    for i in range(len(seeds)):
        f = by_label.get(i)
        if f is None:
            rows.append([i, 0.0, 0.0, 0.0, 0.0, 0.0])
        else:
            rows.append([i, f.peak_pressure, f.fwhm_lateral_x, f.fwhm_lateral_y,
                         f.fwhm_axial, f.volume_m3])
    np.savetxt(
        out / "foci.csv", np.asarray(rows), delimiter=",",
        header="focus,peak_pressure,fwhm_x_m,fwhm_y_m,fwhm_z_m,volume_m3",
        comments="",
    )
    return report


def _export_lens(out: Path, lens: LensVolume, grid: GridSpec):
    io.thickness_to_csv(out / "lens_thickness.csv", lens.thickness_map, grid.dz)
    io.thickness_to_pgm(out / "lens_thickness.pgm", lens.thickness_map,
                        lens.v_min, lens.v_max)
    io.thickness_to_stl(out / "lens.stl", lens.thickness_map, grid.dx, grid.dz)


# ------------------------------------------------------------------ design

def cmd_design(args) -> int:
    cfg = load_config(args.config)
    grid = build_grid(cfg)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    src = build_source(cfg, grid)
    medium = _apply_precision(build_medium(cfg, grid), args.precision)
    target = build_target(cfg, grid)
    solver = build_solver(cfg)
    ocfg = build_optim(cfg, solver, seed)
    lens_params = build_lens_params(cfg, grid)
    method = cfg.get("method", "thickness")
    if method not in ("thickness", "phase", "time_reversal"):
        raise ConfigError(f"method: unknown '{method}' "
                          "(use thickness | phase | time_reversal)")

    out = Path(args.out)
    snapshot = resolved_config(cfg, grid, seed, args.precision)
    h = write_snapshot(out, snapshot)
    extra = {"config_hash": h}
    mat = lens_params["material"]

    if method == "thickness":
        design = DesignField.random(
            grid.nx, grid.ny, lens_params["alpha"],
            lens_params["v_min"], lens_params["v_max"], seed=seed,
        )
        result = optim.optimize_lens_geometry(
            src, medium, target, design, ocfg, mat,
            z_offset=lens_params["z_offset"],
            kernel_size=lens_params["kernel_size"],
            smooth_sigma=lens_params["smooth_sigma"],
            fab_cutoff=lens_params["fab_cutoff"],
        )
        result.report.to_csv(out / "loss_history.csv")
        lens = result.lens
        p_opt = result.field_optimization
    else:
        if method == "phase":
            phase, report = baselines.optimize_phase_map(src, medium, target, ocfg)
            report.to_csv(out / "loss_history.csv")
        else:
            phase = baselines.time_reversal(
                src, medium, _focus_seeds(target), solver
            )
        np.savetxt(out / "phase_map.csv", phase.phi, delimiter=",")
        plane = apply_phase_delays(src, phase.phi, grid)
        p_opt, _ = propagate(src, medium, solver, source_plane=plane)
        lens = None

    design_obj = lens if method == "thickness" else phase
    p_fab, lens = baselines.fabricate_and_simulate(
        design_obj, src, medium, mat, solver,
        z_offset=lens_params["z_offset"],
        t_min=lens_params["t_min"], t_max=lens_params["t_max"],
        fab_cutoff=lens_params["fab_cutoff"],
    )

    _export_lens(out, lens, grid)
    io.save_field(out / "field_optimization", p_opt, extra)
    io.save_field(out / "field_fabrication", p_fab, extra)
    psnr = analysis.cross_domain_psnr(p_opt, p_fab)
    _write_report(out, p_fab, _focus_seeds(target), psnr)
    return EXIT_OK


# ---------------------------------------------------------------- evaluate

def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    grid = build_grid(cfg)
    target = build_target(cfg, grid)
    if args.field is None:
        raise ConfigError("evaluate: --field is required")
    p = io.load_field(args.field)
    if p.grid.shape != grid.shape or not np.allclose(
        (p.grid.dx, p.grid.dy, p.grid.dz), (grid.dx, grid.dy, grid.dz)
    ):
        raise ConfigError("evaluate: field header does not match config grid")

    psnr = None
    if args.field2 is not None:
        p2 = io.load_field(args.field2)
        if p2.grid.shape != p.grid.shape:
            raise ConfigError("evaluate: field headers do not match")
        psnr = analysis.cross_domain_psnr(p, p2)

    out = Path(args.out)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    snapshot = resolved_config(cfg, grid, seed, args.precision)
    write_snapshot(out, snapshot)
    _write_report(out, p, _focus_seeds(target), psnr)

    thermal_sec = cfg.get("thermal")
    if thermal_sec is not None:
        medium = build_medium(cfg, grid)
        try:
            tcfg = analysis.ThermalConfig(
                heat_time=get_quantity(thermal_sec, "heat_time", 10e-3),
                cool_time=get_quantity(thermal_sec, "cool_time", 190e-3),
                n_cycles=int(thermal_sec.get("n_cycles", 5)),
                reference_peak_pressure=get_quantity(
                    thermal_sec, "reference_peak_pressure", 1e6
                ),
                perfusion_rate=float(thermal_sec.get("perfusion_rate", 0.0)),
            )
        except ValueError as exc:
            raise ConfigError(f"thermal: {exc}") from exc
        dT = analysis.bioheat_simulate(p, medium, tcfg,
                                       normalize_mask=target.omega)
        header = io._header(grid, ["temperature_rise"], "float32",
                            {"units": "degC"})
        io._write(out / "thermal", header, dT.astype("<f4"))
    return EXIT_OK


# ------------------------------------------------------------------- sweep

def _load_lens(prefix_or_csv, grid: GridSpec, lens_params: dict) -> LensVolume:
    path = Path(prefix_or_csv)
    if not path.exists():
        raise ConfigError(f"sweep: lens file not found: {path}")
    thickness_m = np.loadtxt(path, delimiter=",")
    t_vox = np.atleast_2d(thickness_m) / grid.dz
    if t_vox.shape != (grid.nx, grid.ny):
        raise ConfigError("sweep: lens thickness map does not match the grid")
    depth = int(np.ceil(lens_params["v_max"]))
    lens = LensVolume(np.zeros((grid.nx, grid.ny, depth)), t_vox,
                      v_min=lens_params["v_min"], v_max=float(depth))
    return lensmap.binarize(lens)


def _sweep_case(payload):
    """One sweep realization; shared-nothing worker for the process pool."""
    (lens, src, medium, mat, z_offset, solver, seeds, axis, sigma, case_seed
     ) = payload
    if axis == "perturbation":
        lens = analysis.perturb_lens(lens, sigma, medium.grid.dz, seed=case_seed)
    from .medium import embed_lens
    embedded = embed_lens(medium, lens.occupancy, mat, z_offset)
    field_, _ = propagate(src, embedded, solver)
    segments = analysis.segment_foci(field_, seeds)
    if not any(m.any() for m in segments):
        return [float(np.abs(field_.values).max()), np.nan, np.nan, 0]
    report = analysis.focal_metrics(field_, segments)
    peak = max(f.peak_pressure for f in report.foci)
    return [peak, report.leakage_ratio, report.uniformity, report.n_components]


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    grid = build_grid(cfg)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    src = build_source(cfg, grid)
    medium = _apply_precision(build_medium(cfg, grid), args.precision)
    target = build_target(cfg, grid)
    solver = build_solver(cfg)
    lens_params = build_lens_params(cfg, grid)
    sec = _section(cfg, "sweep", required=False)

    lens_path = args.lens or sec.get("lens")
    if lens_path is None:
        raise ConfigError("sweep: a base design is required "
                          "(--lens or sweep.lens, a thickness CSV)")
    lens = _load_lens(lens_path, grid, lens_params)
    seeds = _focus_seeds(target)
    z_offset = lens_params["z_offset"]

    if args.axis == "material":
        if "materials" in sec:
            mats = [_material(m, "sweep") for m in sec["materials"]]
        else:
            mats = list(CLEAR_RESIN_VARIANTS)
        cases = [
            (lens, src, medium, m, z_offset, solver, seeds, "material", 0.0, None)
            for m in mats
        ]
        labels = [f"c={m.sound_speed:g},rho={m.density:g}" for m in mats]
    elif args.axis == "perturbation":
        sigma = get_quantity(sec, "sigma", 50e-6)
        n = int(sec.get("realizations", 50))
        if n < 0:
            raise ConfigError("sweep: realizations must be non-negative")
        mat = lens_params["material"]
        cases = [
            (lens, src, medium, mat, z_offset, solver, seeds, "perturbation",
             sigma, seed + i)
            for i in range(n)
        ]
        labels = [f"seed={seed + i}" for i in range(n)]
    else:
        raise ConfigError(f"sweep: unknown axis '{args.axis}'")

    if args.jobs > 1 and len(cases) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_case, cases))
    else:
        rows = [_sweep_case(c) for c in cases]

    out = Path(args.out)
    snapshot = resolved_config(cfg, grid, seed, args.precision)
    write_snapshot(out, snapshot)
    with open(out / "sweep.csv", "w") as fh:
        fh.write("case,peak_pressure,leakage_ratio,uniformity,n_components\n")
        for label, row in zip(labels, rows):
            fh.write(f"{label}," + ",".join(f"{v:.9g}" for v in row) + "\n")
    with open(out / "manifest.json", "w") as fh:
        json.dump({"axis": args.axis, "cases": labels, "seed": seed},
                  fh, indent=2)
        fh.write("\n")
    return EXIT_OK


# ------------------------------------------------------------- backproject

def cmd_backproject(args) -> int:
    cfg = load_config(args.config)
    grid = build_grid(cfg)
    if args.plane is None:
        raise ConfigError("backproject: --plane is required")
    try:
        header, plane = io.load_plane(args.plane)
    except (FileNotFoundError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"backproject: {exc}") from exc

    sec = _section(cfg, "backproject", required=False)
    if args.distances is not None:
        distances = np.asarray(
            [float(v) for v in args.distances.split(",") if v.strip()]
        ) * 1e-3
    else:
        distances = _vector_quantity(sec, "distances")
    if distances is None or np.size(distances) == 0:
        raise ConfigError("backproject: at least one distance is required "
                          "(--distances in mm or backproject.distances_mm)")

    solver = build_solver(cfg)
    try:
        volume = backproject(plane, grid, distances, solver)
    except ValueError as exc:
        raise ConfigError(f"backproject: {exc}") from exc

    out = Path(args.out)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    snapshot = resolved_config(cfg, grid, seed, args.precision)
    h = write_snapshot(out, snapshot)
    vol_header = io._header(grid, ["backprojection"], "complex64_interleaved",
                            {"config_hash": h,
                             "distances_m": list(map(float, distances))})
    vol_header["dims"] = [grid.nx, grid.ny, int(np.size(distances))]
    inter = np.empty(volume.size * 2, dtype="<f4")
    inter[0::2] = volume.real.ravel()
    inter[1::2] = volume.imag.ravel()
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "backprojection.json", "w") as fh:
        json.dump(vol_header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    inter.tofile(out / "backprojection.raw")
    return EXIT_OK


# --------------------------------------------------------------- gradcheck

def cmd_gradcheck(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    sec = _section(cfg, "gradcheck", required=False)
    if "grid" in cfg:
        grid = build_grid(cfg)
    else:
        grid = GridSpec(16, 16, 24, 125e-6, 125e-6, 125e-6, 2e6, 1500.0)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    medium = (build_medium(cfg, grid) if "medium" in cfg
              else make_homogeneous(grid, WATER))
    src = (build_source(cfg, grid) if "source" in cfg
           else SourceSpec.full_plane(grid))
    if "target" in cfg:
        target = build_target(cfg, grid)
    else:
        target = TargetSpec.from_spheres(
            grid,
            [(grid.nx // 2 * grid.dx, grid.ny // 2 * grid.dy,
              (grid.nz * 3 // 4) * grid.dz)],
            1.5 * grid.dx,
        )
    solver = build_solver(cfg)
    lens_params = build_lens_params(cfg, grid)
    mat = lens_params["material"]
    beta = float(sec.get("beta", 5.0))
    n_v = int(np.ceil(lens_params["v_max"]))
    tolerance = float(sec.get("tolerance",
                              1e-5 if solver.reflection_order == 0 else 1e-3))
    step = float(sec.get("step", 1e-4))
    n_coords = int(sec.get("n_coords", 32))

    def chain(theta):
        d = DesignField(theta, lens_params["alpha"],
                        lens_params["v_min"], lens_params["v_max"])
        lens = lensmap.forward(d, beta, n_v, lens_params["kernel_size"],
                               lens_params["smooth_sigma"])
        from .solver import propagate_adjoint, propagate_with_lens
        p, cache = propagate_with_lens(src, medium, lens.occupancy, mat,
                                       lens_params["z_offset"], solver)
        l_acc, l_en, l_bal, upstream = optim.loss_and_gradient(
            p.values, target, 0.2, 0.5
        )
        total = l_acc + 0.2 * l_en + 0.5 * l_bal
        adj = propagate_adjoint(cache, upstream)
        g = lensmap.backward(d, beta, adj.occupancy,
                             lens_params["kernel_size"],
                             lens_params["smooth_sigma"])
        return total, g

    rng = np.random.default_rng(seed)
    theta0 = rng.uniform(-1.0, 1.0, size=(grid.nx, grid.ny))
    err = optim.gradcheck(chain, theta0, step, n_coords=n_coords, seed=seed)
    print(f"gradcheck: max relative error {err:.3e} "
          f"(tolerance {tolerance:.1e}, reflection order "
          f"{solver.reflection_order})")
    if not np.isfinite(err) or err > tolerance:
        print("gradcheck: FAIL", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# -------------------------------------------------------------------- main

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sonolens",
        description="Design and evaluate thickness-modulated acoustic "
                    "hologram lenses.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config (// comments allowed)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--jobs", type=int, default=1,
                       help="worker processes for sweeps")
        p.add_argument("--precision", choices=("f32", "f64"), default="f64",
                       help="medium property precision")

    p = sub.add_parser("design", help="run a hologram design end to end")
    common(p)
    p = sub.add_parser("evaluate", help="compute focal metrics for a field")
    common(p)
    p.add_argument("--field", help="field file prefix")
    p.add_argument("--field2", help="second field prefix for cross-domain PSNR")
    p = sub.add_parser("sweep", help="robustness sweep over a fixed design")
    common(p)
    p.add_argument("--axis", choices=("material", "perturbation"),
                   required=True)
    p.add_argument("--lens", help="base design thickness CSV")
    p = sub.add_parser("backproject", help="reconstruct a volume from a plane")
    common(p)
    p.add_argument("--plane", help="complex plane file prefix")
    p.add_argument("--distances", help="comma-separated distances in mm")
    p = sub.add_parser("gradcheck", help="verify adjoint gradients")
    common(p)
    return parser


_COMMANDS = {
    "design": cmd_design,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "backproject": cmd_backproject,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command != "gradcheck" and args.config is None:
        print("error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
