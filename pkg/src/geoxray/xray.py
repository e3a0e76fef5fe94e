"""Weighted/attenuated ray transform, its matched discrete adjoint, the
normal operator, and operator-norm estimation.

The forward map integrates kappa(t) f(gamma(t)) dt along every ray of a
fan-beam set with trapezoidal quadrature, where

    kappa(t) = exp(-(A(tau) - A(t))),   A(t) = int_0^t a(gamma(s)) ds,

so kappa is the attenuation accumulated from the current point to the exit
(kappa == 1 when a == 0, and kappa is non-decreasing along the ray for
a >= 0).  Each ray is traced once at build time; the per-sample bilinear
stencils, quadrature weights and kappa factors are folded into one sparse
matrix, and the adjoint is its exact transpose with respect to the discrete
inner products

    <f, g>_grid = sum f g h^2,    <s, t>_rays = sum s t w_ray,

which makes the normal operator symmetric positive semi-definite by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .grid import ConformalMetric, ScalarField2D, metric_laplacian
from .geodesics import RaySet, TraceBatch, default_dt, trace_rays

__all__ = [
    "Sinogram",
    "ForwardOperator",
    "build_operator",
    "forward",
    "adjoint",
    "normal_apply",
    "estimate_opnorm",
]

_BUILD_CHUNK = 8192


@dataclass
class Sinogram:
    """Ray-transform values on a RaySet, shaped (n_beta, n_alpha)."""

    rayset: RaySet
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.rayset.n_beta, self.rayset.n_alpha)
        if self.values.shape != expected:
            raise ValueError(f"sinogram shape {self.values.shape} != rayset {expected}")

    def copy_with(self, values: np.ndarray) -> "Sinogram":
        return Sinogram(self.rayset, np.array(values, dtype=float))

    def to_csv(self, path) -> None:
        np.savetxt(path, self.values, fmt="%.17g", delimiter=",")

    def to_binary(self, path) -> None:
        import struct

        with open(path, "wb") as fh:
            fh.write(struct.pack("<II", self.rayset.n_beta, self.rayset.n_alpha))
            fh.write(self.values.astype("<f8").tobytes())


@dataclass
class ForwardOperator:
    """Discretized attenuated ray transform for one metric/attenuation pair.

    ``mat`` maps node values (raveled row-major) to per-ray integrals;
    ``mat_t`` is its transpose stored CSR for fast adjoint application.
    Rebuild the operator when the attenuation changes: kappa is baked in.
    """

    metric: ConformalMetric
    attenuation: ScalarField2D
    rayset: RaySet
    dt: float
    mat: sp.csr_matrix = field(repr=False)
    mat_t: sp.csr_matrix = field(repr=False)
    tau: np.ndarray = field(repr=False)
    atten_total: np.ndarray = field(repr=False)

    @property
    def grid(self):
        return self.metric.grid

    @property
    def domain_shape(self) -> tuple[int, int]:
        n = self.grid.n
        return (n, n)

    @property
    def range_shape(self) -> tuple[int, int]:
        return (self.rayset.n_beta, self.rayset.n_alpha)

    @property
    def ray_weights(self) -> np.ndarray:
        return self.rayset.weights

    @property
    def cell_area(self) -> float:
        return self.grid.cell_area

    def apply(self, f_values: np.ndarray) -> np.ndarray:
        """Forward transform on a raw (n, n) array of node values."""
        return (self.mat @ np.asarray(f_values, dtype=float).ravel()).reshape(self.range_shape)

    def apply_adjoint(self, s_values: np.ndarray) -> np.ndarray:
        """Exact-transpose adjoint on a raw (n_beta, n_alpha) array."""
        weighted = np.asarray(s_values, dtype=float).ravel() * self.rayset.weights
        return (self.mat_t @ weighted).reshape(self.domain_shape) / self.cell_area

    def apply_normal(self, f_values: np.ndarray) -> np.ndarray:
        return self.apply_adjoint(self.apply(f_values))


def _chunk_matrix(op_grid_n: int, batch: TraceBatch, inv_h: float):
    """Fold one traced chunk into a CSR block: per-sample trapezoid weight
    times kappa times the four bilinear stencil weights."""
    n_rays, m = batch.positions.shape[:2]
    valid = np.arange(m)[None, :] < batch.n_samples[:, None]

    # trapezoid weights on the per-ray time grid 0, dt, ..., (m_i - 2) dt, tau_i
    dt = batch.dt
    w = np.full((n_rays, m), dt)
    rows = np.arange(n_rays)
    last = batch.n_samples - 1
    w[rows, np.maximum(last - 1, 0)] = 0.5 * (dt + batch.last_h)
    w[rows, last] = 0.5 * batch.last_h
    w[:, 0] = np.where(batch.n_samples > 2, 0.5 * dt, w[:, 0])
    two = batch.n_samples == 2
    w[two, 0] = 0.5 * batch.last_h[two]
    w[~valid] = 0.0

    coef = w
    coef *= np.exp(batch.atten - batch.atten_total[:, None])

    u = (batch.positions[:, :, 0] + 1.0) * inv_h
    v = (batch.positions[:, :, 1] + 1.0) * inv_h
    ix = np.minimum(u.astype(np.int32), op_grid_n - 2)
    iy = np.minimum(v.astype(np.int32), op_grid_n - 2)
    np.maximum(ix, 0, out=ix)
    np.maximum(iy, 0, out=iy)
    fx = np.clip(u - ix, 0.0, 1.0)
    fy = np.clip(v - iy, 0.0, 1.0)

    # padding samples carry zero weight, so their (grid-center) columns are
    # harmless and mostly merge away in sum_duplicates
    base = iy * np.int32(op_grid_n) + ix
    cols = np.empty((n_rays, m, 4), dtype=np.int32)
    cols[:, :, 0] = base
    cols[:, :, 1] = base + 1
    cols[:, :, 2] = base + op_grid_n
    cols[:, :, 3] = base + op_grid_n + 1
    wgt = np.empty((n_rays, m, 4))
    gx = 1.0 - fx
    gy = 1.0 - fy
    wgt[:, :, 0] = gx * gy * coef
    wgt[:, :, 1] = fx * gy * coef
    wgt[:, :, 2] = gx * fy * coef
    wgt[:, :, 3] = fx * fy * coef

    indptr = np.arange(n_rays + 1, dtype=np.int64) * (4 * m)
    csr = sp.csr_matrix(
        (wgt.ravel(), cols.ravel(), indptr), shape=(n_rays, op_grid_n * op_grid_n)
    )
    csr.sum_duplicates()
    csr.eliminate_zeros()
    return csr


def build_operator(
    metric: ConformalMetric,
    atten: ScalarField2D,
    rays: RaySet,
    dt: float | None = None,
) -> ForwardOperator:
    """Trace every ray once and assemble the sparse forward matrix."""
    if np.any(atten.values < 0):
        raise ValueError("attenuation must be non-negative")
    if atten.grid.n != metric.grid.n:
        raise ValueError("attenuation grid does not match metric grid")
    if dt is None:
        dt = default_dt(metric)
    n = metric.grid.n
    inv_h = 1.0 / metric.grid.spacing

    blocks = []
    taus = []
    atot = []
    for lo in range(0, rays.n_rays, _BUILD_CHUNK):
        hi = min(lo + _BUILD_CHUNK, rays.n_rays)
        batch = trace_rays(
            metric, rays.starts[lo:hi], rays.dirs[lo:hi], dt=dt, atten=atten, record=True
        )
        blocks.append(_chunk_matrix(n, batch, inv_h))
        taus.append(batch.tau)
        atot.append(batch.atten_total)
    mat = sp.vstack(blocks, format="csr")
    mat_t = mat.T.tocsr()
    return ForwardOperator(
        metric=metric,
        attenuation=atten,
        rayset=rays,
        dt=dt,
        mat=mat,
        mat_t=mat_t,
        tau=np.concatenate(taus),
        atten_total=np.concatenate(atot),
    )


def forward(op: ForwardOperator, f: ScalarField2D) -> Sinogram:
    if f.grid.n != op.grid.n:
        raise ValueError("field grid does not match operator grid")
    return Sinogram(op.rayset, op.apply(f.values))


def adjoint(op: ForwardOperator, s: Sinogram) -> ScalarField2D:
    if s.values.shape != op.range_shape:
        raise ValueError("sinogram shape does not match operator rayset")
    return ScalarField2D(op.grid, op.apply_adjoint(s.values))


def normal_apply(op: ForwardOperator, f: ScalarField2D) -> ScalarField2D:
    return ScalarField2D(op.grid, op.apply_normal(f.values))


def estimate_opnorm(
    op: ForwardOperator,
    chi: ScalarField2D,
    laplacian=None,
    iters: int = 100,
    seed: int = 0,
    return_history: bool = False,
):
    """Power-method estimate of ||L||^2 for L = (-Delta)^(1/2) chi X* X.

    Iterates the square-root-free composition T = X*X chi (-Delta) chi X*X
    (the same chain the reconstruction scheme applies) and returns the
    Rayleigh quotient, i.e. the largest eigenvalue of L*L.
    """
    if iters < 20:
        raise ValueError("need iters >= 20")
    if laplacian is None:
        def laplacian(u):
            return metric_laplacian(op.metric, ScalarField2D(op.grid, u)).values

    chi_v = chi.values if isinstance(chi, ScalarField2D) else np.asarray(chi, dtype=float)
    area = op.cell_area

    def t_apply(u):
        w = op.apply_normal(u)
        w = chi_v * w
        w = -laplacian(w)
        w = chi_v * w
        return op.apply_normal(w)

    rng = np.random.default_rng(seed)
    u = rng.standard_normal(op.domain_shape)
    u /= np.sqrt(np.sum(u * u) * area)
    history = []
    for _ in range(iters):
        w = t_apply(u)
        if not np.all(np.isfinite(w)):
            raise FloatingPointError("power iteration produced non-finite values")
        rq = float(np.sum(u * w) * area)
        history.append(rq)
        norm = np.sqrt(np.sum(w * w) * area)
        if norm == 0.0:
            history[-1] = 0.0
            break
        u = w / norm
    estimate = history[-1]
    if return_history:
        return estimate, np.asarray(history)
    return estimate
