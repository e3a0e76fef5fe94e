"""Experiment runner and command-line interface.

Named presets reproduce the benchmark reconstructions end to end at desk
scale: synthesize data for a phantom under one of the conformal speeds,
optionally perturb it with noise, run the preconditioned Landweber
iteration, and emit images (binary PGM plus a min/max sidecar), CSV data,
a conjugacy census, artifact metrics and a flat key=value summary.  All
outputs are byte-deterministic for a fixed configuration and seed.

Subcommands: run, census, filters, geodesics.  Exit codes: 0 success,
2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .grid import Grid2D, ScalarField2D, make_cutoff, make_speed
from .geodesics import PhasePoint, conjugate_locus, locus_to_csv, make_rayset, shoot
from .landweber import LandweberConfig, filter_g, filter_phi, landweber_run
from .microlocal import artifact_metrics, census, census_to_csv, locus_mask
from .phantoms import NoiseSpec, PhantomSpec, add_gaussian_noise, make_attenuation, make_phantom, poisson_modulate
from .xray import build_operator, estimate_opnorm, forward

__all__ = ["ExperimentConfig", "RunResult", "PRESETS", "preset_config", "run_experiment", "emit_image", "main"]

PRESET_NAMES = (
    "ex1", "ex2", "ex3", "ex4", "ex5", "ex_local",
    "ex6_clean", "ex6_gauss", "ex6_poisson", "custom",
)


@dataclass
class ExperimentConfig:
    name: str
    speed: str
    attenuation: str
    phantom: PhantomSpec
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    n: int = 128
    n_beta: int = 128
    n_alpha: int = 256
    gamma: object = "auto"  # "auto" or a float
    safety: float = 0.9
    gamma_scale: float = 1.0
    opnorm_iters: int = 60
    k_max: int = 101
    snapshots: tuple = (1, 101, 201)
    record_every: int = 1
    out_dir: str = "runs/out"
    seed: int = 12345
    dt: float | None = None
    locus_dirs: int = 720
    chi_radii: tuple = (0.88, 0.96)
    write_census: bool = True

    def validate(self):
        if self.name not in PRESET_NAMES:
            raise ValueError(f"unknown experiment name {self.name!r}")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.gamma != "auto":
            float(self.gamma)


def preset_config(name: str) -> ExperimentConfig:
    """Desk-scale configuration for one named experiment.

    The benchmark grid is 128^2 with a 128 x 256 fan-beam set, roughly
    0.43x the reference resolution on every axis.  Oscillatory phantoms are
    therefore widened to sigma = 0.15 so their wavelength spans the same
    number of grid cells and sinogram samples as at full scale; the
    stable-case phantom (ex6_*) is oriented so its singularities are
    conormal to transverse rays, which realizes the conjugate-point-free
    configuration without leaning on the coarsely sampled guided-ray
    family.  Step sizes are fractions of the contraction bound 2/||L||^2
    (the fraction is tuned per experiment, as is customary for these
    reconstructions).
    """
    coh_left = PhantomSpec("coherent", center=(-0.7, 0.0), sigma=0.15, angle=np.pi / 24)
    coh_center = PhantomSpec(
        "coherent_positive", center=(0.0, 0.0), sigma=0.15, angle=np.pi / 2 + np.pi / 24
    )
    presets = {
        "ex1": ExperimentConfig(
            "ex1", "c1", "zero",
            PhantomSpec("ellipse", center=(-0.6, 0.0), semi_axes=(0.30, 0.15), smoothing=0.05),
        ),
        "ex2": ExperimentConfig(
            "ex2", "c1", "gaussian_bump",
            PhantomSpec("ellipse", center=(-0.6, 0.0), semi_axes=(0.30, 0.15), smoothing=0.05),
        ),
        "ex3": ExperimentConfig(
            "ex3", "c2", "zero",
            PhantomSpec("coherent", center=(0.05, 0.1), sigma=0.15, angle=np.pi / 24),
        ),
        "ex4": ExperimentConfig("ex4", "c1", "zero", coh_left),
        "ex5": ExperimentConfig("ex5", "c1", "gaussian_bump", coh_left, k_max=201),
        "ex_local": ExperimentConfig(
            "ex_local", "c3", "disk2",
            PhantomSpec("bump", center=(-0.75, 0.0), sigma=0.04),
            gamma_scale=0.07,
        ),
        "ex6_clean": ExperimentConfig("ex6_clean", "c1", "zero", coh_center, k_max=201),
        "ex6_gauss": ExperimentConfig(
            "ex6_gauss", "c1", "zero", coh_center,
            noise=NoiseSpec("gaussian", level=0.17, seed=12345),
        ),
        "ex6_poisson": ExperimentConfig(
            "ex6_poisson", "c1", "zero", coh_center,
            noise=NoiseSpec("poisson", level=10.0, seed=12345),
        ),
    }
    if name not in presets:
        raise ValueError(f"no preset named {name!r} (custom runs need a config file)")
    return presets[name]


PRESETS = tuple(n for n in PRESET_NAMES if n != "custom")


@dataclass
class RunResult:
    summary: dict
    truth: ScalarField2D
    recon: ScalarField2D
    snapshots: dict
    state: object
    mask: ScalarField2D
    locus: np.ndarray
    metric: object
    config: ExperimentConfig


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def write_summary(summary: dict, path) -> None:
    with open(path, "w") as fh:
        for k, v in summary.items():
            fh.write(f"{k}={_fmt(v)}\n")


def emit_image(fld: ScalarField2D, path) -> None:
    """8-bit binary PGM of a field (linear [min, max] -> [0, 255], rounded
    half to even) with a sidecar recording the range for exact inversion.
    A constant field maps to all zeros."""
    vals = fld.values
    if not np.all(np.isfinite(vals)):
        raise ValueError("field must be finite")
    lo, hi = float(vals.min()), float(vals.max())
    if hi > lo:
        pix = np.rint((vals - lo) * (255.0 / (hi - lo))).astype(np.uint8)
    else:
        pix = np.zeros_like(vals, dtype=np.uint8)
    pix = pix[::-1, :]  # top row = y = +1
    n = fld.grid.n
    with open(path, "wb") as fh:
        fh.write(f"P5\n{n} {n}\n255\n".encode())
        fh.write(pix.tobytes())
    with open(str(path) + ".range.txt", "w") as fh:
        fh.write(f"min={_fmt(lo)}\nmax={_fmt(hi)}\n")


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    grid = Grid2D(cfg.n)
    metric = make_speed(cfg.speed, grid)
    atten = make_attenuation(cfg.attenuation, grid)
    rays = make_rayset(cfg.n_beta, cfg.n_alpha)
    truth = make_phantom(cfg.phantom, grid)
    chi = make_cutoff(grid, *cfg.chi_radii)

    op = build_operator(metric, atten, rays, dt=cfg.dt)
    psi = forward(op, truth)
    if cfg.noise.kind == "gaussian":
        psi = add_gaussian_noise(psi, cfg.noise.level, cfg.noise.seed)
    elif cfg.noise.kind == "poisson":
        peak = cfg.noise.level if cfg.noise.level > 0 else 10.0
        psi = poisson_modulate(psi, peak=peak, seed=cfg.noise.seed)

    if cfg.gamma == "auto":
        opnorm_sq = estimate_opnorm(op, chi, iters=cfg.opnorm_iters, seed=cfg.seed)
        # fraction of the full contraction bound 2/||L||^2
        gamma = cfg.gamma_scale * cfg.safety * (2.0 / opnorm_sq)
    else:
        gamma = float(cfg.gamma)
        opnorm_sq = float("nan")

    snaps = tuple(k for k in cfg.snapshots if 1 <= k <= cfg.k_max)
    lw_cfg = LandweberConfig(
        gamma=gamma, k_max=cfg.k_max, chi=chi, record_every=cfg.record_every, snapshot_at=snaps
    )
    state = landweber_run(op, psi, lw_cfg)
    recon = ScalarField2D(grid, state.f)

    locus = conjugate_locus(metric, cfg.phantom.center, cfg.locus_dirs, dt=cfg.dt)
    mask = locus_mask(grid, locus)
    amp_ratio, a2s = artifact_metrics(recon, truth, mask)

    tmax = float(np.max(np.abs(truth.values)))
    linf_rel = float(np.max(np.abs(recon.values - truth.values))) / tmax if tmax > 0 else 0.0

    # files
    emit_image(truth, out / "truth.pgm")
    emit_image(recon, out / f"recon_k{cfg.k_max}.pgm")
    snapshots = {}
    for k, fv in state.snapshots.items():
        snapshots[k] = ScalarField2D(grid, fv)
        if k != cfg.k_max:
            emit_image(snapshots[k], out / f"recon_k{k}.pgm")
    psi.to_csv(out / "sinogram.csv")
    rows = np.column_stack(
        [state.recorded_k, state.residual_history, state.preconditioned_residual_history]
    )
    np.savetxt(
        out / "residuals.csv", rows, fmt="%.17g", delimiter=",",
        header="k,residual,preconditioned_residual", comments="",
    )
    locus_to_csv(locus, out / "locus.csv")
    if cfg.write_census:
        census_to_csv(census(op), out / "census.csv")

    summary = {
        "name": cfg.name,
        "n": cfg.n,
        "n_beta": cfg.n_beta,
        "n_alpha": cfg.n_alpha,
        "speed": cfg.speed,
        "attenuation": cfg.attenuation,
        "phantom_kind": cfg.phantom.kind,
        "noise_kind": cfg.noise.kind,
        "seed": cfg.seed,
        "k_max": cfg.k_max,
        "gamma": float(gamma),
        "opnorm_sq": float(opnorm_sq),
        "final_residual": float(state.residual_history[-1]),
        "final_preconditioned_residual": float(state.preconditioned_residual_history[-1]),
        "linf_rel_error": linf_rel,
        "amp_ratio_true": float(amp_ratio),
        "artifact_to_signal": float(a2s),
        "locus_points": int(len(locus)),
    }
    write_summary(summary, out / "summary.txt")
    return RunResult(summary, truth, recon, snapshots, state, mask, locus, metric, cfg)


# ---------------------------------------------------------------------------
# configuration files: line-oriented UTF-8 key=value with dotted keys


def parse_config_text(text: str) -> dict:
    entries = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {ln}: expected key=value, got {raw!r}")
        key, val = line.split("=", 1)
        entries[key.strip()] = val.strip()
    return entries


def _as_tuple_of_int(s: str) -> tuple:
    return tuple(int(p) for p in s.split(",") if p.strip())


def config_from_entries(entries: dict) -> ExperimentConfig:
    entries = dict(entries)
    name = entries.pop("preset", entries.pop("name", "custom"))
    if name != "custom":
        cfg = preset_config(name)
    else:
        cfg = ExperimentConfig(
            "custom",
            entries.pop("speed", "unit"),
            entries.pop("attenuation", "zero"),
            PhantomSpec(entries.pop("phantom.kind", "bump")),
        )
    phantom = cfg.phantom
    noise = cfg.noise
    updates = {}
    for key, val in entries.items():
        if key == "n":
            updates["n"] = int(val)
        elif key == "rays.n_beta":
            updates["n_beta"] = int(val)
        elif key == "rays.n_alpha":
            updates["n_alpha"] = int(val)
        elif key == "speed":
            updates["speed"] = val
        elif key == "attenuation":
            updates["attenuation"] = val
        elif key == "seed":
            updates["seed"] = int(val)
        elif key == "out_dir":
            updates["out_dir"] = val
        elif key == "dt":
            updates["dt"] = float(val)
        elif key == "census":
            updates["write_census"] = val.lower() in ("1", "true", "yes")
        elif key == "locus.dirs":
            updates["locus_dirs"] = int(val)
        elif key == "landweber.gamma":
            updates["gamma"] = "auto" if val == "auto" else float(val)
        elif key == "landweber.safety":
            updates["safety"] = float(val)
        elif key == "landweber.gamma_scale":
            updates["gamma_scale"] = float(val)
        elif key == "landweber.k_max":
            updates["k_max"] = int(val)
        elif key == "landweber.record_every":
            updates["record_every"] = int(val)
        elif key == "landweber.opnorm_iters":
            updates["opnorm_iters"] = int(val)
        elif key == "landweber.snapshots":
            updates["snapshots"] = _as_tuple_of_int(val)
        elif key == "phantom.kind":
            phantom = replace(phantom, kind=val)
        elif key == "phantom.center_x":
            phantom = replace(phantom, center=(float(val), phantom.center[1]))
        elif key == "phantom.center_y":
            phantom = replace(phantom, center=(phantom.center[0], float(val)))
        elif key == "phantom.sigma":
            phantom = replace(phantom, sigma=float(val))
        elif key == "phantom.angle":
            phantom = replace(phantom, angle=float(val))
        elif key == "phantom.semi_a":
            phantom = replace(phantom, semi_axes=(float(val), phantom.semi_axes[1]))
        elif key == "phantom.semi_b":
            phantom = replace(phantom, semi_axes=(phantom.semi_axes[0], float(val)))
        elif key == "phantom.smoothing":
            phantom = replace(phantom, smoothing=float(val))
        elif key == "phantom.amplitude":
            phantom = replace(phantom, amplitude=float(val))
        elif key == "noise.kind":
            noise = replace(noise, kind=val)
        elif key == "noise.level":
            noise = replace(noise, level=float(val))
        elif key == "noise.seed":
            noise = replace(noise, seed=int(val))
        else:
            raise ValueError(f"unknown configuration key {key!r}")
    return replace(cfg, phantom=phantom, noise=noise, **updates)


# ---------------------------------------------------------------------------
# subcommands


def _cmd_run(args) -> int:
    entries = {}
    if args.config:
        entries = parse_config_text(Path(args.config).read_text(encoding="utf-8"))
    if args.preset:
        entries["preset"] = args.preset
    if args.n:
        entries["n"] = str(args.n)
    if args.kmax:
        entries["landweber.k_max"] = str(args.kmax)
    if args.seed is not None:
        entries["seed"] = str(args.seed)
    if args.out:
        entries["out_dir"] = args.out
    cfg = config_from_entries(entries)
    result = run_experiment(cfg)
    print(f"wrote {Path(cfg.out_dir) / 'summary.txt'}")
    for key in ("final_residual", "linf_rel_error", "amp_ratio_true", "artifact_to_signal"):
        print(f"{key}={_fmt(result.summary[key])}")
    return 0


def _cmd_census(args) -> int:
    grid = Grid2D(args.n)
    metric = make_speed(args.speed, grid)
    atten = make_attenuation(args.attenuation, grid)
    op = build_operator(metric, atten, make_rayset(args.nbeta, args.nalpha), dt=args.dt)
    reports = census(op)
    census_to_csv(reports, args.out)
    mult = max((r.multiplicity for r in reports), default=0)
    print(f"{len(reports)} conjugate pairs, max multiplicity {mult}; wrote {args.out}")
    return 0


def _cmd_filters(args) -> int:
    ks = _as_tuple_of_int(args.k)
    lam = np.linspace(0.0, args.lmax, args.points)
    cols = [lam]
    header = ["lambda"]
    for k in ks:
        cols.append(filter_phi(k, args.gamma, lam))
        header.append(f"phi_{k}")
    for k in ks:
        cols.append(filter_g(k, args.gamma, lam))
        header.append(f"g_{k}")
    np.savetxt(
        args.out, np.column_stack(cols), fmt="%.17g", delimiter=",",
        header=",".join(header), comments="",
    )
    print(f"wrote {args.out}")
    return 0


def _cmd_geodesics(args) -> int:
    grid = Grid2D(args.n)
    metric = make_speed(args.speed, grid)
    atten = make_attenuation(args.attenuation, grid)
    if args.x0 is not None:
        x0 = np.array([args.x0, args.y0])
        v0 = np.array([np.cos(args.theta), np.sin(args.theta)])
    else:
        beta, alpha = args.beta, args.alpha
        x0 = np.array([np.cos(beta), np.sin(beta)])
        v0 = -np.array([np.cos(beta + alpha), np.sin(beta + alpha)])
    path = shoot(metric, PhasePoint(x0, v0), dt=args.dt, atten=atten)
    path.to_csv(args.out)
    print(f"tau={path.tau:.6f}; wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="geoxray", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="run a named or configured experiment")
    pr.add_argument("--config", help="key=value configuration file")
    pr.add_argument("--preset", choices=PRESETS, help="named experiment")
    pr.add_argument("--n", type=int, help="grid points per axis")
    pr.add_argument("--kmax", type=int, help="iteration count")
    pr.add_argument("--seed", type=int)
    pr.add_argument("--out", help="output directory")
    pr.set_defaults(fn=_cmd_run)

    pc = sub.add_parser("census", help="conjugacy census over a fan-beam ray set")
    pc.add_argument("--speed", default="c1", choices=("c1", "c2", "c3", "unit"))
    pc.add_argument("--attenuation", default="zero", choices=("zero", "gaussian_bump", "disk2"))
    pc.add_argument("--n", type=int, default=128)
    pc.add_argument("--nbeta", type=int, default=128)
    pc.add_argument("--nalpha", type=int, default=256)
    pc.add_argument("--dt", type=float, default=None)
    pc.add_argument("--out", default="census.csv")
    pc.set_defaults(fn=_cmd_census)

    pf = sub.add_parser("filters", help="emit spectral filter curves")
    pf.add_argument("--k", default="5,20,40,80")
    pf.add_argument("--gamma", type=float, default=1.0)
    pf.add_argument("--lmax", type=float, default=1.0)
    pf.add_argument("--points", type=int, default=512)
    pf.add_argument("--out", default="filters.csv")
    pf.set_defaults(fn=_cmd_filters)

    pg = sub.add_parser("geodesics", help="trace one ray and export its path")
    pg.add_argument("--speed", default="c1", choices=("c1", "c2", "c3", "unit"))
    pg.add_argument("--attenuation", default="zero", choices=("zero", "gaussian_bump", "disk2"))
    pg.add_argument("--n", type=int, default=128)
    pg.add_argument("--beta", type=float, default=np.pi)
    pg.add_argument("--alpha", type=float, default=0.0)
    pg.add_argument("--x0", type=float, default=None)
    pg.add_argument("--y0", type=float, default=0.0)
    pg.add_argument("--theta", type=float, default=0.0)
    pg.add_argument("--dt", type=float, default=None)
    pg.add_argument("--out", default="geodesic.csv")
    pg.set_defaults(fn=_cmd_geodesics)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (FloatingPointError, RuntimeError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
