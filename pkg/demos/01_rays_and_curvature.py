"""Trace rays through the three benchmark speed profiles.

The conformal ray metric ds = c |dx| bends rays toward larger sound speed:
the Gaussian ridge of c1/c2 guides near-horizontal rays along the x-axis,
and the two bumps of c3 act as converging lenses.  This script draws a
few rays per profile over the Gauss curvature background and writes
demos/out/rays_<speed>.png.
"""

import os

import numpy as np

import geoxray as gx

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

grid = gx.Grid2D(129)

launches = {
    "c1": [(np.pi, a) for a in (-0.12, -0.06, 0.0, 0.06, 0.12)],
    "c2": [(np.pi, a) for a in (-0.12, -0.06, 0.0, 0.06, 0.12)],
    "c3": [(np.pi, a) for a in (-0.45, -0.25, 0.0, 0.25, 0.45)],
}

for speed, rays in launches.items():
    metric = gx.make_speed(speed, grid)
    K = gx.gaussian_curvature(metric)
    paths = []
    for beta, alpha in rays:
        x0 = np.array([np.cos(beta), np.sin(beta)])
        v0 = -np.array([np.cos(beta + alpha), np.sin(beta + alpha)])
        paths.append(gx.shoot(metric, gx.PhasePoint(x0, v0)))

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        for i, p in enumerate(paths):
            p.to_csv(os.path.join(OUT, f"ray_{speed}_{i}.csv"))
        print(f"{speed}: matplotlib unavailable, wrote path CSVs instead")
        continue

    fig, ax = plt.subplots(figsize=(5, 5))
    lim = max(abs(K.values.min()), abs(K.values.max()))
    ax.imshow(K.values, extent=(-1, 1, -1, 1), origin="lower",
              cmap="RdBu_r", vmin=-lim, vmax=lim, alpha=0.6)
    theta = np.linspace(0, 2 * np.pi, 256)
    ax.plot(np.cos(theta), np.sin(theta), "k-", lw=1)
    for p in paths:
        ax.plot(p.x[:, 0], p.x[:, 1], "k", lw=1.2)
    ax.set_title(f"rays through {speed} over curvature (red = focusing)")
    ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(os.path.join(OUT, f"rays_{speed}.png"), dpi=130)
    plt.close(fig)
    print(f"wrote {OUT}/rays_{speed}.png  (exit times: "
          + ", ".join(f"{p.tau:.2f}" for p in paths) + ")")
