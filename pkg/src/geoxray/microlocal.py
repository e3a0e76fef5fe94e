"""Stability diagnostics for conjugate-point pairs: the 2x2 directed-weight
matrix Q, its determinant, a per-ray conjugacy census, and artifact
measurement for reconstructions.

For a pair of conjugate points (p1, p2) on a ray, Q collects the four
directed attenuation weights

    Q = [[kappa(p1, v1),  kappa(p2, v2)],
         [kappa(p1, -v1), kappa(p2, -v2)]],

where kappa(p, v) integrates the attenuation from p to the exit in the
direction v.  With attenuation a >= 0,

    det Q = (exp(-2 B) - 1) * exp(-(A_total - B)),   B = int_{p1}^{p2} a,

so det Q < 0 exactly when the segment between the pair carries attenuation
(the pair's singularities are then separable) and det Q = 0 when it does
not (an unstable pair).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import Grid2D, ScalarField2D
from .geodesics import RaySet, trace_rays
from .xray import ForwardOperator

__all__ = [
    "ConjugatePairRecord",
    "StabilityReport",
    "build_Q",
    "pair_record_from_times",
    "census",
    "census_to_csv",
    "artifact_metrics",
    "locus_mask",
]

DETQ_TOL_FACTOR = 1e-6


@dataclass
class ConjugatePairRecord:
    """One conjugate pair on one ray.

    ``kappa_vals`` holds (kappa(p1,v1), kappa(p2,v2), kappa(p1,-v1),
    kappa(p2,-v2)); the reversed weights integrate the attenuation from the
    point back to the entry, which for positional attenuation equals the
    accumulated integral at that parameter.  ``bdot_ratio`` is |b'(t2)| /
    |b'(t1)| of the Jacobi coefficient.
    """

    ray_id: int
    t1: float
    t2: float
    p1: np.ndarray
    p2: np.ndarray
    kappa_vals: np.ndarray
    bdot_ratio: float

    def __post_init__(self):
        if not self.t1 < self.t2:
            raise ValueError("pair times must satisfy t1 < t2")


@dataclass
class StabilityReport:
    pair: ConjugatePairRecord
    det_q: float
    classification: str  # 'stable' (det Q < -tol) or 'unstable'
    multiplicity: int
    beta: float = np.nan
    alpha: float = np.nan


def build_Q(op: ForwardOperator, rec: ConjugatePairRecord) -> np.ndarray:
    """Assemble the 2x2 directed-weight matrix from a pair record."""
    k1f, k2f, k1r, k2r = rec.kappa_vals
    for k in rec.kappa_vals:
        if not (0.0 < k <= 1.0 + 1e-12):
            raise ValueError(f"kappa value {k} outside (0, 1]")
    return np.array([[k1f, k2f], [k1r, k2r]])


def _kappas_at(atten_at: float, atten_total: float) -> tuple[float, float]:
    """(forward, reversed) weights from the accumulated integral A(t)."""
    return float(np.exp(atten_at - atten_total)), float(np.exp(-atten_at))


def pair_record_from_times(
    op: ForwardOperator, path, sol, t1: float, t2: float, ray_id: int = -1
) -> ConjugatePairRecord:
    """Build a pair record for explicit parameter values on a traced path.

    Positions and the attenuation integral are interpolated on the path
    samples; used for synthetic configurations and spot checks (the census
    extracts the same data in bulk during its sweep).
    """
    ts = path.t
    A1 = float(np.interp(t1, ts, path.cum_atten))
    A2 = float(np.interp(t2, ts, path.cum_atten))
    At = float(path.cum_atten[-1])
    k1f, k1r = _kappas_at(A1, At)
    k2f, k2r = _kappas_at(A2, At)
    p1 = np.array([np.interp(t1, ts, path.x[:, 0]), np.interp(t1, ts, path.x[:, 1])])
    p2 = np.array([np.interp(t2, ts, path.x[:, 0]), np.interp(t2, ts, path.x[:, 1])])
    if sol is not None:
        bd1 = abs(float(np.interp(t1, sol.t, sol.b_dot)))
        bd2 = abs(float(np.interp(t2, sol.t, sol.b_dot)))
        ratio = bd2 / bd1 if bd1 > 0 else np.inf
    else:
        ratio = np.nan
    return ConjugatePairRecord(
        ray_id=ray_id,
        t1=t1,
        t2=t2,
        p1=p1,
        p2=p2,
        kappa_vals=np.array([k1f, k2f, k1r, k2r]),
        bdot_ratio=ratio,
    )


def _classify(det_q: float, q: np.ndarray) -> str:
    tol = DETQ_TOL_FACTOR * float(np.max(np.abs(q))) ** 2
    return "stable" if det_q < -tol else "unstable"


def census(op: ForwardOperator, rays: RaySet | None = None, chunk: int = 2048) -> list:
    """Conjugacy census over a ray set.

    Every ray is re-traced with its Jacobi coefficient; the chain of points
    conjugate to the entry (the entry itself plus the zero crossings of b)
    yields one report per consecutive pair.  The multiplicity stored on
    each report is the chain length, i.e. the number of mutually conjugate
    points counted along the ray, matching how waveguide geodesics are
    described (pairs for the wide gutter, triples for the narrow one).
    Rays without conjugate points contribute nothing.
    """
    if rays is None:
        rays = op.rayset
    reports: list[StabilityReport] = []
    for lo in range(0, rays.n_rays, chunk):
        hi = min(lo + chunk, rays.n_rays)
        batch = trace_rays(
            op.metric,
            rays.starts[lo:hi],
            rays.dirs[lo:hi],
            dt=op.dt,
            atten=op.attenuation,
            want_jacobi=True,
        )
        for i in np.nonzero(batch.conj_count > 0)[0]:
            cc = int(batch.conj_count[i])
            times = np.concatenate([[0.0], batch.conj_t[i, :cc]])
            attens = np.concatenate([[0.0], batch.conj_atten[i, :cc]])
            bdots = np.concatenate([[1.0], np.abs(batch.conj_bdot[i, :cc])])
            pos = np.vstack([rays.starts[lo + i], batch.conj_pos[i, :cc]])
            At = float(batch.atten_total[i])
            for j in range(cc):
                k1f, k1r = _kappas_at(attens[j], At)
                k2f, k2r = _kappas_at(attens[j + 1], At)
                rec = ConjugatePairRecord(
                    ray_id=lo + i,
                    t1=float(times[j]),
                    t2=float(times[j + 1]),
                    p1=pos[j].copy(),
                    p2=pos[j + 1].copy(),
                    kappa_vals=np.array([k1f, k2f, k1r, k2r]),
                    bdot_ratio=float(bdots[j + 1] / bdots[j]) if bdots[j] > 0 else np.inf,
                )
                q = build_Q(op, rec)
                det_q = float(q[0, 0] * q[1, 1] - q[0, 1] * q[1, 0])
                reports.append(
                    StabilityReport(
                        pair=rec,
                        det_q=det_q,
                        classification=_classify(det_q, q),
                        multiplicity=cc + 1,
                        beta=float(rays.beta[lo + i]),
                        alpha=float(rays.alpha[lo + i]),
                    )
                )
    return reports


def census_to_csv(reports: list, path) -> None:
    rows = np.array(
        [
            [
                r.pair.ray_id,
                r.beta,
                r.alpha,
                r.pair.t1,
                r.pair.t2,
                r.det_q,
                r.multiplicity,
                r.pair.bdot_ratio,
            ]
            for r in reports
        ]
    ).reshape(-1, 8)
    np.savetxt(
        path,
        rows,
        fmt="%.17g",
        delimiter=",",
        header="ray_id,beta,alpha,t1,t2,detQ,multiplicity,bdot_ratio",
        comments="",
    )


def locus_mask(grid: Grid2D, locus_points: np.ndarray, dilate_cells: int = 3) -> ScalarField2D:
    """Binary mask marking the conjugate-locus point cloud, dilated by a
    few grid cells; ``locus_points`` rows are (angle, qx, qy)."""
    mask = np.zeros((grid.n, grid.n), dtype=bool)
    if len(locus_points):
        inv_h = 1.0 / grid.spacing
        ix = np.clip(np.rint((locus_points[:, 1] + 1.0) * inv_h).astype(int), 0, grid.n - 1)
        iy = np.clip(np.rint((locus_points[:, 2] + 1.0) * inv_h).astype(int), 0, grid.n - 1)
        mask[iy, ix] = True
        if dilate_cells > 0:
            mask = ndimage.binary_dilation(mask, iterations=dilate_cells)
    return ScalarField2D(grid, mask.astype(float))


def artifact_metrics(
    recon: ScalarField2D,
    truth: ScalarField2D,
    mask: ScalarField2D,
    support_rel: float = 0.02,
) -> tuple[float, float]:
    """(amp_ratio_true, artifact_to_signal) for a reconstruction.

    The truth region is where |truth| exceeds ``support_rel`` of its peak.
    amp_ratio_true compares peak |recon| there against peak |truth|;
    artifact_to_signal compares the l2 mass of recon on the (clipped,
    truth-disjoint) locus mask against its l2 mass on the truth region.
    """
    if not (recon.grid.n == truth.grid.n == mask.grid.n):
        raise ValueError("fields must share a grid")
    tmax = float(np.max(np.abs(truth.values)))
    if tmax == 0.0:
        return 0.0, 0.0
    region = np.abs(truth.values) >= support_rel * tmax
    if not np.any(region):
        raise ValueError("empty truth region")
    m = mask.values * (~region)
    amp_ratio = float(np.max(np.abs(recon.values[region]))) / tmax
    sig = float(np.sqrt(np.sum(recon.values[region] ** 2)))
    art = float(np.sqrt(np.sum(recon.values ** 2 * m)))
    if np.count_nonzero(m) == 0:
        return amp_ratio, 0.0
    return amp_ratio, art / sig if sig > 0 else 0.0
