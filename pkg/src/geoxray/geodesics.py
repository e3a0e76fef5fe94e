"""Unit-speed ray tracing for the conformal metric, fan-beam ray sets,
Jacobi fields and conjugate-point extraction.

Rays are integrated with classical RK4 in the metric arclength parameter t,
so the Euclidean velocity satisfies |v| = 1/c(x) and is renormalized to
that shell after every step.  The scalar Jacobi coefficient b solves

    b'' + K(gamma(t)) b = 0,    b(0) = 0, b'(0) = 1,

with K the Gauss curvature of the metric sampled along the ray; its sign
changes mark conjugate points.  A batched integrator advances many rays at
once (positions, direction, attenuation integral and Jacobi state share one
RK4 step); the exit through |x| = 1 is refined by bisection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import ConformalMetric, Grid2D, ScalarField2D

__all__ = [
    "PhasePoint",
    "GeodesicPath",
    "RaySet",
    "JacobiSolution",
    "TraceBatch",
    "shoot",
    "make_rayset",
    "jacobi",
    "bdot_ratio",
    "conjugate_locus",
    "trace_rays",
]

MAX_STEPS_DEFAULT = 100_000
_CONJ_CAP = 12
_EXIT_BISECTIONS = 48


@dataclass
class PhasePoint:
    """Position and Euclidean direction of a ray; |v| = 1/c(x) at unit speed."""

    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).reshape(2)
        self.v = np.asarray(self.v, dtype=float).reshape(2)


@dataclass
class GeodesicPath:
    """A traced ray: sample times t, positions x, directions v, exit time tau,
    and the running attenuation integral cum_atten(t) = int_0^t a(gamma) ds."""

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    tau: float
    cum_atten: np.ndarray
    dt: float

    def to_csv(self, path) -> None:
        rows = np.column_stack(
            [self.t, self.x[:, 0], self.x[:, 1], self.v[:, 0], self.v[:, 1], self.cum_atten]
        )
        np.savetxt(
            path,
            rows,
            fmt="%.17g",
            delimiter=",",
            header="t,x,y,vx,vy,cum_atten",
            comments="",
        )


@dataclass
class RaySet:
    """Fan-beam family of inward boundary rays.

    Entry i*n_alpha + j has boundary angle beta_i (uniform on [0, 2pi)) and
    incidence angle alpha_j (midpoints of (-pi/2, pi/2), so tangent rays are
    excluded by half a cell).  ``dirs`` are Euclidean unit vectors; weights
    are the quadrature cells cos(alpha) * dbeta * dalpha.
    """

    n_beta: int
    n_alpha: int
    beta: np.ndarray
    alpha: np.ndarray
    starts: np.ndarray
    dirs: np.ndarray
    weights: np.ndarray

    @property
    def n_rays(self) -> int:
        return self.n_beta * self.n_alpha


def make_rayset(n_beta: int, n_alpha: int) -> RaySet:
    if n_beta < 8 or n_alpha < 8:
        raise ValueError("need n_beta, n_alpha >= 8")
    d_beta = 2.0 * np.pi / n_beta
    d_alpha = np.pi / n_alpha
    beta = d_beta * np.arange(n_beta)
    alpha = -0.5 * np.pi + d_alpha * (np.arange(n_alpha) + 0.5)
    B, A = np.meshgrid(beta, alpha, indexing="ij")
    B = B.ravel()
    A = A.ravel()
    starts = np.column_stack([np.cos(B), np.sin(B)])
    # inward normal rotated by alpha: -(cos(beta+alpha), sin(beta+alpha))
    dirs = -np.column_stack([np.cos(B + A), np.sin(B + A)])
    weights = np.cos(A) * d_beta * d_alpha
    return RaySet(n_beta, n_alpha, B, A, starts, dirs, weights)


class _FieldPack:
    """Shared bilinear sampler for the per-metric fields used inside RK4:
    grad ln c (2), curvature, attenuation, speed.  Samples are stored as
    rows of five so one gather fetches all fields per stencil corner."""

    def __init__(self, metric: ConformalMetric, atten: ScalarField2D | None):
        grid = metric.grid
        gx, gy = metric.grad_log_speed()
        K = metric.curvature_values()
        a = np.zeros_like(K) if atten is None else np.asarray(atten.values, dtype=float)
        n = grid.n
        self.flat = np.ascontiguousarray(
            np.stack([gx, gy, K, a, metric.speed.values]).reshape(5, n * n).T
        )
        self.n = n
        self.inv_h = 1.0 / grid.spacing

    def sample(self, x, y):
        """Return the (npts, 5) array of (gx, gy, K, a, c) at the points."""
        n = self.n
        u = (x + 1.0) * self.inv_h
        w = (y + 1.0) * self.inv_h
        ix = np.clip(u.astype(np.int64), 0, n - 2)
        iy = np.clip(w.astype(np.int64), 0, n - 2)
        fx = np.clip(u - ix, 0.0, 1.0)[:, None]
        fy = np.clip(w - iy, 0.0, 1.0)[:, None]
        base = iy * n + ix
        V = self.flat
        return (
            (V[base] * (1 - fx) + V[base + 1] * fx) * (1 - fy)
            + (V[base + n] * (1 - fx) + V[base + n + 1] * fx) * fy
        )


def _deriv(pack: _FieldPack, x, v, b, bd):
    """Time derivative of the joint ray state (x, v, b, b', A)."""
    f = pack.sample(x[:, 0], x[:, 1])
    gx, gy, K, a = f[:, 0], f[:, 1], f[:, 2], f[:, 3]
    gv = gx * v[:, 0] + gy * v[:, 1]
    v2 = v[:, 0] ** 2 + v[:, 1] ** 2
    acc = np.empty_like(v)
    acc[:, 0] = -2.0 * gv * v[:, 0] + v2 * gx
    acc[:, 1] = -2.0 * gv * v[:, 1] + v2 * gy
    return v.copy(), acc, bd.copy(), -K * b, a


def _rk4(pack: _FieldPack, h, x, v, b, bd, A):
    """One RK4 step of size h for the joint state; h may be a scalar or a
    per-ray array."""
    h = np.asarray(h, dtype=float)
    hc = h[:, None] if h.ndim else h
    k1x, k1v, k1b, k1bd, k1a = _deriv(pack, x, v, b, bd)
    k2x, k2v, k2b, k2bd, k2a = _deriv(
        pack, x + 0.5 * hc * k1x, v + 0.5 * hc * k1v, b + 0.5 * h * k1b, bd + 0.5 * h * k1bd
    )
    k3x, k3v, k3b, k3bd, k3a = _deriv(
        pack, x + 0.5 * hc * k2x, v + 0.5 * hc * k2v, b + 0.5 * h * k2b, bd + 0.5 * h * k2bd
    )
    k4x, k4v, k4b, k4bd, k4a = _deriv(pack, x + hc * k3x, v + hc * k3v, b + h * k3b, bd + h * k3bd)
    xn = x + (hc / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
    vn = v + (hc / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
    bn = b + (h / 6.0) * (k1b + 2 * k2b + 2 * k3b + k4b)
    bdn = bd + (h / 6.0) * (k1bd + 2 * k2bd + 2 * k3bd + k4bd)
    An = A + (h / 6.0) * (k1a + 2 * k2a + 2 * k3a + k4a)
    # project back on the unit-speed shell |v| = 1/c(x)
    c = pack.sample(xn[:, 0], xn[:, 1])[:, 4]
    vn *= (1.0 / (c * np.hypot(vn[:, 0], vn[:, 1])))[:, None]
    return xn, vn, bn, bdn, An


@dataclass
class TraceBatch:
    """Result of integrating a batch of rays.

    ``n_samples[i]`` samples are valid for ray i: the entry point, one per
    full RK4 step, and the bisected exit point.  Conjugate data hold the
    (linearly interpolated) zero crossings of the Jacobi coefficient.
    """

    dt: float
    tau: np.ndarray
    n_samples: np.ndarray
    last_h: np.ndarray
    trapped: np.ndarray
    positions: np.ndarray | None = None
    velocities: np.ndarray | None = None
    atten: np.ndarray | None = None
    atten_total: np.ndarray | None = None
    conj_count: np.ndarray | None = None
    conj_t: np.ndarray | None = None
    conj_bdot: np.ndarray | None = None
    conj_pos: np.ndarray | None = None
    conj_atten: np.ndarray | None = None
    b_samples: np.ndarray | None = field(default=None, repr=False)
    bd_samples: np.ndarray | None = field(default=None, repr=False)


def default_dt(metric: ConformalMetric) -> float:
    """Fixed step spacing/(2 c_max); spatial steps stay under half a cell."""
    return metric.grid.spacing / (2.0 * metric.c_max)


def trace_rays(
    metric: ConformalMetric,
    starts: np.ndarray,
    dirs: np.ndarray,
    dt: float | None = None,
    atten: ScalarField2D | None = None,
    want_jacobi: bool = False,
    record: bool = False,
    record_velocity: bool = False,
    max_steps: int = MAX_STEPS_DEFAULT,
) -> TraceBatch:
    """Integrate a batch of rays until each leaves the unit disk.

    ``starts`` may lie inside the disk or on its boundary (pointing inward);
    ``dirs`` are direction vectors of any positive length, rescaled to the
    unit-speed shell.  When ``record`` is set, every sample position (and
    the attenuation integral) is kept for quadrature; ``want_jacobi`` also
    advances the Jacobi coefficient and logs its zero crossings.
    """
    if dt is None:
        dt = default_dt(metric)
    if dt <= 0:
        raise ValueError("dt must be positive")
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    n = starts.shape[0]
    pack = _FieldPack(metric, atten)

    x = starts.copy()
    c0 = pack.sample(x[:, 0], x[:, 1])[:, 4]
    norm = np.hypot(dirs[:, 0], dirs[:, 1])
    if np.any(norm == 0):
        raise ValueError("zero direction vector")
    v = dirs / (norm * c0)[:, None]
    b = np.zeros(n)
    bd = np.ones(n)
    A = np.zeros(n)

    # conservative sample capacity: metric path length is at most a few
    # disk diameters times c_max
    cap = min(max_steps, int(np.ceil(8.0 * max(1.0, metric.c_max) / dt))) + 2
    positions = np.zeros((n, cap, 2)) if record else None
    velocities = np.zeros((n, cap, 2)) if (record and record_velocity) else None
    atten_s = np.zeros((n, cap)) if record else None
    b_s = np.zeros((n, cap)) if (record and want_jacobi) else None
    bd_s = np.zeros((n, cap)) if (record and want_jacobi) else None

    conj_count = np.zeros(n, dtype=np.int64)
    conj_t = np.zeros((n, _CONJ_CAP))
    conj_bdot = np.zeros((n, _CONJ_CAP))
    conj_pos = np.zeros((n, _CONJ_CAP, 2))
    conj_atten = np.zeros((n, _CONJ_CAP))

    tau = np.zeros(n)
    n_samples = np.ones(n, dtype=np.int64)
    last_h = np.full(n, dt)
    trapped = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)
    exit_step = np.zeros(n, dtype=np.int64)

    if record:
        positions[:, 0] = x
        if velocities is not None:
            velocities[:, 0] = v
        if want_jacobi:
            b_s[:, 0] = b
            bd_s[:, 0] = bd

    def log_crossings(rows, t_prev, h, xp, bp, bdp, Ap, xn, bn, bdn, An):
        """Record linear-interpolated zeros of b inside one step; ``rows``
        are global ray ids parallel to the per-step state slices."""
        crossed = (bp * bn < 0.0) & (np.abs(bp) > 0)
        if not np.any(crossed):
            return
        sub = np.nonzero(crossed)[0]
        frac = bp[sub] / (bp[sub] - bn[sub])
        rid = rows[sub]
        slots = conj_count[rid]
        ok = slots < _CONJ_CAP
        rid, sub, frac, slots = rid[ok], sub[ok], frac[ok], slots[ok]
        hh = h[sub] if np.ndim(h) else h
        conj_t[rid, slots] = t_prev[sub] + frac * hh
        conj_bdot[rid, slots] = bdp[sub] + frac * (bdn[sub] - bdp[sub])
        conj_pos[rid, slots] = xp[sub] + frac[:, None] * (xn[sub] - xp[sub])
        conj_atten[rid, slots] = Ap[sub] + frac * (An[sub] - Ap[sub])
        conj_count[rid] += 1

    # march with a fixed step; rays whose next step leaves the disk freeze
    # in their pre-exit state and are refined together afterwards
    step = 0
    while np.any(active):
        if step >= max_steps or step + 2 >= cap:
            trapped |= active
            break
        idx = np.nonzero(active)[0]
        xa, va, ba, bda, Aa = x[idx], v[idx], b[idx], bd[idx], A[idx]
        xn, vn, bn, bdn, An = _rk4(pack, dt, xa, va, ba, bda, Aa)
        out = xn[:, 0] ** 2 + xn[:, 1] ** 2 >= 1.0

        stay = ~out
        if np.any(stay):
            rows = idx[stay]
            x[rows], v[rows] = xn[stay], vn[stay]
            b[rows], bd[rows], A[rows] = bn[stay], bdn[stay], An[stay]
            if want_jacobi:
                log_crossings(
                    rows, np.full(len(rows), step * dt), dt,
                    xa[stay], ba[stay], bda[stay], Aa[stay],
                    xn[stay], bn[stay], bdn[stay], An[stay],
                )
            if record:
                positions[rows, step + 1] = xn[stay]
                if velocities is not None:
                    velocities[rows, step + 1] = vn[stay]
                atten_s[rows, step + 1] = An[stay]
                if want_jacobi:
                    b_s[rows, step + 1] = bn[stay]
                    bd_s[rows, step + 1] = bdn[stay]
            n_samples[rows] += 1
        if np.any(out):
            rows = idx[out]
            exit_step[rows] = step
            active[rows] = False
        step += 1

    if np.any(trapped):
        bad = int(np.count_nonzero(trapped))
        raise RuntimeError(f"{bad} ray(s) exceeded {max_steps} steps; possibly trapped")

    # refine every exit at once: bisect the final sub-step on |x(h)| = 1
    lo = np.zeros(n)
    hi = np.full(n, dt)
    for _ in range(_EXIT_BISECTIONS):
        mid = 0.5 * (lo + hi)
        xm = _rk4(pack, mid, x, v, b, bd, A)[0]
        outside = xm[:, 0] ** 2 + xm[:, 1] ** 2 >= 1.0
        hi = np.where(outside, mid, hi)
        lo = np.where(outside, lo, mid)
    h_star = 0.5 * (lo + hi)
    xf, vf, bf, bdf, Af = _rk4(pack, h_star, x, v, b, bd, A)
    if want_jacobi:
        log_crossings(
            np.arange(n), exit_step.astype(float) * dt, h_star, x, b, bd, A, xf, bf, bdf, Af
        )
    tau = exit_step * dt + h_star
    last_h = h_star
    rows = np.arange(n)
    if record:
        positions[rows, exit_step + 1] = xf
        if velocities is not None:
            velocities[rows, exit_step + 1] = vf
        atten_s[rows, exit_step + 1] = Af
        if want_jacobi:
            b_s[rows, exit_step + 1] = bf
            bd_s[rows, exit_step + 1] = bdf
    n_samples += 1
    x, v, b, bd, A = xf, vf, bf, bdf, Af

    m = int(n_samples.max())
    res = TraceBatch(
        dt=dt,
        tau=tau,
        n_samples=n_samples,
        last_h=last_h,
        trapped=trapped,
        atten_total=A.copy(),
        conj_count=conj_count if want_jacobi else None,
        conj_t=conj_t if want_jacobi else None,
        conj_bdot=conj_bdot if want_jacobi else None,
        conj_pos=conj_pos if want_jacobi else None,
        conj_atten=conj_atten if want_jacobi else None,
    )
    if record:
        res.positions = positions[:, :m]
        res.atten = atten_s[:, :m]
        if velocities is not None:
            res.velocities = velocities[:, :m]
        if want_jacobi:
            res.b_samples = b_s[:, :m]
            res.bd_samples = bd_s[:, :m]
    return res


def sample_times(batch: TraceBatch, i: int) -> np.ndarray:
    """Per-sample times of ray i: 0, dt, ..., (m-1) dt, tau."""
    m = batch.n_samples[i]
    t = batch.dt * np.arange(m, dtype=float)
    t[-1] = batch.tau[i]
    return t


def shoot(
    metric: ConformalMetric,
    start: PhasePoint,
    dt: float | None = None,
    atten: ScalarField2D | None = None,
    max_steps: int = MAX_STEPS_DEFAULT,
) -> GeodesicPath:
    """Trace a single ray from a phase point until it exits the disk."""
    batch = trace_rays(
        metric,
        start.x[None, :],
        start.v[None, :],
        dt=dt,
        atten=atten,
        record=True,
        record_velocity=True,
        max_steps=max_steps,
    )
    m = batch.n_samples[0]
    return GeodesicPath(
        t=sample_times(batch, 0),
        x=batch.positions[0, :m].copy(),
        v=batch.velocities[0, :m].copy(),
        tau=float(batch.tau[0]),
        cum_atten=batch.atten[0, :m].copy(),
        dt=batch.dt,
    )


@dataclass
class JacobiSolution:
    """Scalar Jacobi coefficient along a path: b(0) = 0, b'(0) = 1, with the
    recorded sign-change times (conjugate times) in (0, tau)."""

    t: np.ndarray
    b: np.ndarray
    b_dot: np.ndarray
    conjugate_times: np.ndarray


def jacobi(
    metric: ConformalMetric,
    path: GeodesicPath,
    curvature=None,
) -> JacobiSolution:
    """Integrate b'' + K b = 0 along a traced path.

    K is the metric's curvature interpolated at the path samples;
    ``curvature`` overrides it with a constant or a per-sample array (used
    by the constant-curvature checks).  Stages use the endpoint/midpoint
    values of K on each interval.
    """
    if curvature is None:
        kfield = ScalarField2D(metric.grid, metric.curvature_values())
        K = kfield.evaluate(path.x[:, 0], path.x[:, 1])
    else:
        K = np.broadcast_to(np.asarray(curvature, dtype=float), path.t.shape).astype(float)
    m = len(path.t)
    b = np.zeros(m)
    bd = np.ones(m)
    for j in range(m - 1):
        h = path.t[j + 1] - path.t[j]
        k0, k1 = K[j], K[j + 1]
        km = 0.5 * (k0 + k1)
        b0, bd0 = b[j], bd[j]
        k1b, k1bd = bd0, -k0 * b0
        k2b, k2bd = bd0 + 0.5 * h * k1bd, -km * (b0 + 0.5 * h * k1b)
        k3b, k3bd = bd0 + 0.5 * h * k2bd, -km * (b0 + 0.5 * h * k2b)
        k4b, k4bd = bd0 + h * k3bd, -k1 * (b0 + h * k3b)
        b[j + 1] = b0 + (h / 6.0) * (k1b + 2 * k2b + 2 * k3b + k4b)
        bd[j + 1] = bd0 + (h / 6.0) * (k1bd + 2 * k2bd + 2 * k3bd + k4bd)
    sign_change = (b[:-1] * b[1:] < 0.0) & (np.abs(b[:-1]) > 0)
    jidx = np.nonzero(sign_change)[0]
    frac = b[jidx] / (b[jidx] - b[jidx + 1])
    times = path.t[jidx] + frac * (path.t[jidx + 1] - path.t[jidx])
    return JacobiSolution(t=path.t.copy(), b=b, b_dot=bd, conjugate_times=times)


def bdot_ratio(sol: JacobiSolution, t0: float) -> float:
    """|b'(t0)| / |b'(0)| at a recorded conjugate time t0."""
    if len(sol.conjugate_times) == 0 or not np.any(
        np.isclose(sol.conjugate_times, t0, rtol=0.0, atol=1e-8 + 1e-8 * abs(t0))
    ):
        raise ValueError(f"t0={t0} is not a recorded conjugate time")
    bd_t0 = float(np.interp(t0, sol.t, sol.b_dot))
    return abs(bd_t0) / abs(float(sol.b_dot[0]))


def conjugate_locus(
    metric: ConformalMetric,
    p,
    n_dirs: int,
    dt: float | None = None,
) -> np.ndarray:
    """First conjugate points over a full fan of directions from p.

    Returns an array of rows (theta, qx, qy), one per direction whose first
    conjugate point occurs before the ray exits; empty for flat metrics.
    """
    p = np.asarray(p, dtype=float).reshape(2)
    if p[0] ** 2 + p[1] ** 2 >= 1.0:
        raise ValueError("locus base point must lie in the open disk")
    theta = 2.0 * np.pi * np.arange(n_dirs) / n_dirs
    starts = np.tile(p, (n_dirs, 1))
    dirs = np.column_stack([np.cos(theta), np.sin(theta)])
    batch = trace_rays(metric, starts, dirs, dt=dt, want_jacobi=True)
    hit = batch.conj_count > 0
    if not np.any(hit):
        return np.zeros((0, 3))
    return np.column_stack([theta[hit], batch.conj_pos[hit, 0, 0], batch.conj_pos[hit, 0, 1]])


def locus_to_csv(locus: np.ndarray, path) -> None:
    np.savetxt(path, locus, fmt="%.17g", delimiter=",", header="dir_angle,qx,qy", comments="")
