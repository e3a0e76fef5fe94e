"""Uniform grids on [-1,1]^2, sampled scalar fields, and conformal ray metrics.

The computational domain is the closed unit disk embedded in the square
[-1,1]^2, discretized into an n x n lattice of nodes.  Fields are stored
sampled at the nodes (``values[iy, ix]`` with row = y, column = x) and
evaluated anywhere on the square by bilinear interpolation.

A positive speed profile c defines the conformal ray metric with line
element ``ds = c |dx|``: rays bend toward larger c, so a high-speed ridge
guides rays along it (a waveguide) and a localized speed bump acts as a
converging lens.  The Gauss curvature of this metric is

    K = -laplace(ln c) / c^2,

positive where rays focus (on top of ridges and bumps) and negative on
their flanks.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Grid2D",
    "ScalarField2D",
    "ConformalMetric",
    "make_speed",
    "gaussian_curvature",
    "metric_laplacian",
    "make_cutoff",
    "smoothstep",
]


@dataclass(frozen=True)
class Grid2D:
    """Uniform n x n node lattice covering [-1,1]^2 exactly."""

    n: int

    def __post_init__(self):
        if self.n < 16:
            raise ValueError(f"grid must have at least 16 points per axis, got n={self.n}")

    @property
    def spacing(self) -> float:
        return 2.0 / (self.n - 1)

    @property
    def origin(self) -> tuple[float, float]:
        return (-1.0, -1.0)

    def axis(self) -> np.ndarray:
        """Node coordinates along one axis, from -1 to 1 inclusive."""
        return -1.0 + self.spacing * np.arange(self.n)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """(X, Y) node coordinate arrays, each shaped (n, n) with rows = y."""
        ax = self.axis()
        return np.meshgrid(ax, ax, indexing="xy")

    @property
    def cell_area(self) -> float:
        return self.spacing ** 2


def _locate(grid: Grid2D, x, y):
    """Bilinear cell indices and fractional offsets for query points.

    Points outside the square are clamped to it, so evaluation is defined
    on all of [-1,1]^2 including the edges.
    """
    inv_h = 1.0 / grid.spacing
    u = (np.asarray(x, dtype=float) + 1.0) * inv_h
    v = (np.asarray(y, dtype=float) + 1.0) * inv_h
    ix = np.clip(np.floor(u).astype(np.int64), 0, grid.n - 2)
    iy = np.clip(np.floor(v).astype(np.int64), 0, grid.n - 2)
    fx = np.clip(u - ix, 0.0, 1.0)
    fy = np.clip(v - iy, 0.0, 1.0)
    return ix, iy, fx, fy


@dataclass
class ScalarField2D:
    """A scalar function on [-1,1]^2 sampled on a Grid2D.

    ``values[iy, ix]`` holds f(x_ix, y_iy); row 0 is y = -1.  Evaluation at
    arbitrary points uses bilinear interpolation of the node samples.
    """

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n, self.grid.n):
            raise ValueError(
                f"values shape {self.values.shape} does not match grid n={self.grid.n}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def evaluate(self, x, y):
        """Bilinear interpolation at points (x, y); broadcasts over arrays."""
        ix, iy, fx, fy = _locate(self.grid, x, y)
        v = self.values
        return (
            v[iy, ix] * (1 - fx) * (1 - fy)
            + v[iy, ix + 1] * fx * (1 - fy)
            + v[iy + 1, ix] * (1 - fx) * fy
            + v[iy + 1, ix + 1] * fx * fy
        )

    def copy_with(self, values: np.ndarray) -> "ScalarField2D":
        return ScalarField2D(self.grid, np.array(values, dtype=float))

    # -- serialization ---------------------------------------------------

    _MAGIC = struct.Struct("<II")

    def to_binary(self, path) -> None:
        """Write the 8-byte (n, reserved=0) header plus row-major float64."""
        with open(path, "wb") as fh:
            fh.write(self._MAGIC.pack(self.grid.n, 0))
            fh.write(self.values.astype("<f8").tobytes())

    @classmethod
    def from_binary(cls, path) -> "ScalarField2D":
        with open(path, "rb") as fh:
            n, reserved = cls._MAGIC.unpack(fh.read(8))
            if reserved != 0:
                raise ValueError(f"not a field file (reserved={reserved})")
            raw = np.frombuffer(fh.read(8 * n * n), dtype="<f8")
        return cls(Grid2D(n), raw.reshape(n, n).copy())

    def to_csv(self, path) -> None:
        """n rows of n comma-separated values; row i is the line y = y_i."""
        np.savetxt(path, self.values, fmt="%.17g", delimiter=",")


@dataclass
class ConformalMetric:
    """Conformal ray metric ds = c |dx| built from a sampled speed profile.

    ``speed`` is c (dimensionless, positive); ``log_speed`` is ln c sampled
    on the same grid.  Gradients of ln c are centered differences of the
    log-speed samples, themselves interpolated bilinearly, so the ray ODE
    and the finite-difference curvature see one consistent field.
    """

    speed: ScalarField2D
    log_speed: ScalarField2D = None
    _grad: tuple = field(default=None, repr=False)
    _curv: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if np.any(self.speed.values <= 0):
            raise ValueError("speed must be positive everywhere")
        if self.log_speed is None:
            self.log_speed = self.speed.copy_with(np.log(self.speed.values))
        err = np.max(np.abs(np.exp(self.log_speed.values) - self.speed.values))
        if err > 1e-12 * max(1.0, float(np.max(self.speed.values))):
            raise ValueError("log_speed is inconsistent with speed")

    @property
    def grid(self) -> Grid2D:
        return self.speed.grid

    @property
    def c_min(self) -> float:
        return float(self.speed.values.min())

    @property
    def c_max(self) -> float:
        return float(self.speed.values.max())

    def grad_log_speed(self) -> tuple[np.ndarray, np.ndarray]:
        """(d ln c/dx, d ln c/dy) node samples, centered in the interior."""
        if self._grad is None:
            h = self.grid.spacing
            gy, gx = np.gradient(self.log_speed.values, h, h)
            self._grad = (gx, gy)
        return self._grad

    def curvature_values(self) -> np.ndarray:
        """Gauss curvature samples, cached; see gaussian_curvature."""
        if self._curv is None:
            self._curv = gaussian_curvature(self).values
        return self._curv


_SPEED_KINDS = ("c1", "c2", "c3", "unit")


def make_speed(kind: str, grid: Grid2D) -> ConformalMetric:
    """Build one of the benchmark speed profiles on the given grid.

    ``c1``/``c2`` are Gaussian ridges along the x-axis (widths 0.25 and
    0.12) that guide near-horizontal rays; ``c3`` superposes two Gaussian
    lenses centered at (0, +-0.3); ``unit`` is the flat disk c == 1.
    """
    if kind not in _SPEED_KINDS:
        raise ValueError(f"unknown speed kind {kind!r}; expected one of {_SPEED_KINDS}")
    X, Y = grid.mesh()
    if kind == "unit":
        ln_c = np.zeros_like(X)
    elif kind == "c1":
        ln_c = 0.3 * np.exp(-(Y ** 2) / (2 * 0.25 ** 2))
    elif kind == "c2":
        ln_c = 0.3 * np.exp(-(Y ** 2) / (2 * 0.12 ** 2))
    else:  # c3
        s3 = 0.25
        ln_c = 0.65 * np.exp(-(X ** 2 + (Y - 0.3) ** 2) / (2 * s3 ** 2)) + 0.65 * np.exp(
            -(X ** 2 + (Y + 0.3) ** 2) / (2 * s3 ** 2)
        )
    speed = ScalarField2D(grid, np.exp(ln_c))
    return ConformalMetric(speed, ScalarField2D(grid, ln_c))


def gaussian_curvature(metric: ConformalMetric) -> ScalarField2D:
    """Gauss curvature K = -laplace(ln c)/c^2 of the ray metric.

    Interior nodes use the centered five-point Laplacian of the log-speed
    samples; the outermost ring copies the nearest interior value.  K is
    positive on speed ridges/bumps (focusing) and negative on their flanks.
    Requires n >= 32 so the second differences resolve the profiles.
    """
    grid = metric.grid
    if grid.n < 32:
        raise ValueError(f"grid too coarse for curvature (n={grid.n} < 32)")
    L = metric.log_speed.values
    h2 = grid.spacing ** 2
    lap = np.zeros_like(L)
    lap[1:-1, 1:-1] = (
        L[1:-1, 2:] + L[1:-1, :-2] + L[2:, 1:-1] + L[:-2, 1:-1] - 4.0 * L[1:-1, 1:-1]
    ) / h2
    K = -lap / metric.speed.values ** 2
    K[0, :] = K[1, :]
    K[-1, :] = K[-2, :]
    K[:, 0] = K[:, 1]
    K[:, -1] = K[:, -2]
    return ScalarField2D(grid, K)


def _inside_disk(grid: Grid2D) -> np.ndarray:
    X, Y = grid.mesh()
    return X ** 2 + Y ** 2 < 1.0


def metric_laplacian(metric: ConformalMetric, u: ScalarField2D) -> ScalarField2D:
    """Dirichlet Laplacian c^2 * (five-point laplace of u) on the unit disk.

    Nodes at radius >= 1 read as zero in the stencil and the output is zero
    there as well, which makes the operator symmetric in the inner product
    weighted by c^-2.
    """
    if u.grid.n != metric.grid.n:
        raise ValueError("field grid does not match metric grid")
    grid = metric.grid
    inside = _inside_disk(grid)
    uw = np.where(inside, u.values, 0.0)
    h2 = grid.spacing ** 2
    out = np.zeros_like(uw)
    out[1:-1, 1:-1] = (
        uw[1:-1, 2:] + uw[1:-1, :-2] + uw[2:, 1:-1] + uw[:-2, 1:-1] - 4.0 * uw[1:-1, 1:-1]
    ) / h2
    out *= metric.speed.values ** 2
    out[~inside] = 0.0
    return ScalarField2D(grid, out)


def smoothstep(t):
    """Quintic smoothstep: 0 at t<=0, 1 at t>=1, C^2 across the joins."""
    t = np.clip(t, 0.0, 1.0)
    return t ** 3 * (10.0 + t * (-15.0 + 6.0 * t))


def make_cutoff(grid: Grid2D, r_one: float = 0.88, r_zero: float = 0.96) -> ScalarField2D:
    """Radial C^2 cutoff: 1 for r <= r_one, 0 for r >= r_zero, monotone between."""
    if not (0.0 < r_one < r_zero <= 1.0):
        raise ValueError(f"need 0 < r_one < r_zero <= 1, got ({r_one}, {r_zero})")
    X, Y = grid.mesh()
    r = np.hypot(X, Y)
    chi = 1.0 - smoothstep((r - r_one) / (r_zero - r_one))
    return ScalarField2D(grid, chi)


def warn_if_underresolved(scale: float, grid: Grid2D, what: str) -> None:
    """Warn when a feature length scale is below two grid cells."""
    if scale < 2.0 * grid.spacing:
        warnings.warn(
            f"{what}: feature scale {scale:.4g} is under-resolved on an "
            f"n={grid.n} grid (spacing {grid.spacing:.4g})",
            stacklevel=3,
        )
