"""Phantom generators, attenuation profiles, and the two noise protocols."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .grid import Grid2D, ScalarField2D, smoothstep, warn_if_underresolved
from .xray import Sinogram

__all__ = [
    "PhantomSpec",
    "NoiseSpec",
    "make_phantom",
    "make_attenuation",
    "add_gaussian_noise",
    "poisson_modulate",
]

PHANTOM_KINDS = ("ellipse", "coherent", "coherent_positive", "bump")
ATTEN_KINDS = ("zero", "gaussian_bump", "disk2")
NOISE_KINDS = ("none", "gaussian", "poisson")

# Attenuation disk for the local-stability experiment: sits across every
# ray segment joining the probe point (-0.75, 0) to the lower half of its
# conjugate locus under the two-lens speed, while clearing the upper half.
DISK2_CENTER = (0.0, -0.35)
DISK2_RADIUS = 0.18
DISK2_ROLLOFF = 0.06


@dataclass
class PhantomSpec:
    """Parameters for one phantom.

    kind 'coherent': oscillatory Gaussian sin(y'/sigma^2) exp(-r'^2/(2 sigma^2))
    evaluated in coordinates rotated by ``angle`` about ``center``; its
    energy concentrates near one point and one direction.
    kind 'coherent_positive': the same plus its Gaussian envelope, so the
    result is non-negative.
    kind 'ellipse': C^2 smoothstep of the (first-order) signed distance to
    an axis-aligned ellipse, 1 inside, 0 outside, transition ``smoothing``
    wide.
    kind 'bump': Gaussian of width sigma (an approximate point source).
    """

    kind: str
    center: tuple = (0.0, 0.0)
    sigma: float = 0.1
    angle: float = np.pi / 24
    semi_axes: tuple = (0.45, 0.18)
    smoothing: float = 0.05
    amplitude: float = 1.0

    def __post_init__(self):
        if self.kind not in PHANTOM_KINDS:
            raise ValueError(f"unknown phantom kind {self.kind!r}")


@dataclass
class NoiseSpec:
    kind: str = "none"
    level: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.level < 0:
            raise ValueError("noise level must be >= 0")


def _rotated_coords(grid: Grid2D, center, angle):
    X, Y = grid.mesh()
    dx = X - center[0]
    dy = Y - center[1]
    ca, sa = np.cos(angle), np.sin(angle)
    return ca * dx + sa * dy, -sa * dx + ca * dy


def make_phantom(spec: PhantomSpec, grid: Grid2D) -> ScalarField2D:
    if spec.kind in ("coherent", "coherent_positive"):
        warn_if_underresolved(spec.sigma, grid, "coherent state")
        xr, yr = _rotated_coords(grid, spec.center, spec.angle)
        env = np.exp(-(xr ** 2 + yr ** 2) / (2.0 * spec.sigma ** 2))
        vals = np.sin(yr / spec.sigma ** 2) * env
        if spec.kind == "coherent_positive":
            vals = vals + env
        return ScalarField2D(grid, spec.amplitude * vals)
    if spec.kind == "bump":
        warn_if_underresolved(spec.sigma, grid, "bump phantom")
        X, Y = grid.mesh()
        r2 = (X - spec.center[0]) ** 2 + (Y - spec.center[1]) ** 2
        return ScalarField2D(grid, spec.amplitude * np.exp(-r2 / (2.0 * spec.sigma ** 2)))
    # ellipse: first-order signed distance d = (rho - 1)/|grad rho|
    warn_if_underresolved(spec.smoothing, grid, "ellipse smoothing")
    a, b = spec.semi_axes
    X, Y = grid.mesh()
    dx = (X - spec.center[0]) / a
    dy = (Y - spec.center[1]) / b
    rho = np.sqrt(dx ** 2 + dy ** 2)
    grad = np.sqrt((dx / a) ** 2 + (dy / b) ** 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        d = np.where(rho > 0, rho * (rho - 1.0) / np.maximum(grad, 1e-300), -min(a, b))
    w = spec.smoothing
    vals = 1.0 - smoothstep((d + 0.5 * w) / w)
    return ScalarField2D(grid, spec.amplitude * vals)


def make_attenuation(kind: str, grid: Grid2D) -> ScalarField2D:
    """Benchmark attenuation fields: none, a broad Gaussian bump over the
    disk center, or a plateau of 2 on a small disk (see DISK2_*)."""
    if kind not in ATTEN_KINDS:
        raise ValueError(f"unknown attenuation kind {kind!r}")
    X, Y = grid.mesh()
    if kind == "zero":
        return ScalarField2D(grid, np.zeros_like(X))
    if kind == "gaussian_bump":
        return ScalarField2D(grid, np.exp(-(X ** 2 + Y ** 2) / (2.0 * 0.35 ** 2)))
    rho = np.hypot(X - DISK2_CENTER[0], Y - DISK2_CENTER[1])
    vals = 2.0 * (1.0 - smoothstep((rho - DISK2_RADIUS) / DISK2_ROLLOFF))
    return ScalarField2D(grid, vals)


def add_gaussian_noise(s: Sinogram, rel_level: float, seed: int) -> Sinogram:
    """Add iid normal noise with std = rel_level * max |s|; seeded."""
    if rel_level < 0:
        raise ValueError("rel_level must be >= 0")
    if rel_level == 0:
        return s.copy_with(s.values)
    sigma = rel_level * float(np.max(np.abs(s.values)))
    rng = np.random.default_rng(seed)
    return s.copy_with(s.values + rng.normal(0.0, sigma, size=s.values.shape))


def poisson_modulate(s: Sinogram, peak: float = 10.0, seed: int = 0) -> Sinogram:
    """Scale the sinogram to range [0, peak], replace each entry by a
    Poisson sample with that mean, and scale back.  At the peak the noise-
    to-signal ratio is 1/sqrt(peak).  Negative entries are clipped to zero
    first (with a warning)."""
    if peak <= 0:
        raise ValueError("peak must be positive")
    vals = s.values
    if np.any(vals < 0):
        warnings.warn("clipping negative sinogram entries before Poisson modulation")
        vals = np.clip(vals, 0.0, None)
    top = float(vals.max())
    if top == 0.0:
        return s.copy_with(vals)
    rng = np.random.default_rng(seed)
    scaled = vals * (peak / top)
    noisy = rng.poisson(scaled).astype(float)
    return s.copy_with(noisy * (top / peak))
