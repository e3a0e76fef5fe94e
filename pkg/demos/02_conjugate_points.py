"""Conjugate points: Jacobi zeros, the fan envelope, and conjugate loci.

A fan of rays from one point refocuses where the Jacobi coefficient b
(solving b'' + K b = 0 with b(0) = 0) changes sign.  This script compares
the ODE prediction against the visible envelope of a fan, then maps the
full conjugate locus of a source point under the gutter and the two-lens
profiles: the mirror set where reconstruction artifacts appear.
"""

import os

import numpy as np

import geoxray as gx

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

grid = gx.Grid2D(129)
c1 = gx.make_speed("c1", grid)

# the ray straight down the waveguide from the rim: one refocus inside
path = gx.shoot(c1, gx.PhasePoint([-1.0, 0.0], [1.0, 0.0]))
sol = gx.jacobi(c1, path)
print(f"gutter axis ray: exit time {path.tau:.4f}, "
      f"conjugate times {np.round(sol.conjugate_times, 4)}")

for speed, p in (("c1", (-0.7, 0.0)), ("c3", (-0.75, 0.0))):
    metric = gx.make_speed(speed, grid)
    locus = gx.conjugate_locus(metric, p, 720)
    gx.geodesics.locus_to_csv(locus, os.path.join(OUT, f"locus_{speed}.csv"))
    print(f"{speed}: conjugate locus of {p} has {len(locus)} points, "
          f"x in [{locus[:,1].min():.2f}, {locus[:,1].max():.2f}], "
          f"y in [{locus[:,2].min():.2f}, {locus[:,2].max():.2f}]")

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        continue
    fig, ax = plt.subplots(figsize=(5, 5))
    theta = np.linspace(0, 2 * np.pi, 256)
    ax.plot(np.cos(theta), np.sin(theta), "k-", lw=1)
    for ang in np.linspace(0, 2 * np.pi, 48, endpoint=False):
        ray = gx.shoot(metric, gx.PhasePoint(p, [np.cos(ang), np.sin(ang)]))
        ax.plot(ray.x[:, 0], ray.x[:, 1], color="0.8", lw=0.5, zorder=1)
    ax.scatter(locus[:, 1], locus[:, 2], s=6, c="crimson", zorder=3, label="first conjugate points")
    ax.plot(*p, "b*", ms=12, zorder=3, label="source")
    ax.legend(loc="lower right", fontsize=8)
    ax.set_aspect("equal")
    ax.set_title(f"conjugate locus under {speed}")
    fig.tight_layout()
    fig.savefig(os.path.join(OUT, f"locus_{speed}.png"), dpi=130)
    plt.close(fig)
    print(f"wrote {OUT}/locus_{speed}.png")
