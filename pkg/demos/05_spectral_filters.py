"""Spectral view of the iteration: the filters phi_k and g_k.

The k-th iterate multiplies each singular component of the solution by
phi_k(lambda) = 1 - (1 - gamma lambda^2)^k, and applies g_k = phi_k/lambda
to data components: a smoothed cutoff of the exact inverse 1/lambda whose
peak grows like sqrt(k).  Early stopping is regularization.
"""

import os

import numpy as np

import geoxray as gx

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

lam = np.linspace(0.0, 1.0, 600)
ks = (5, 25, 50, 100)

rows = [lam]
for k in ks:
    rows.append(gx.filter_phi(k, 1.0, lam))
for k in (5, 20, 40, 80):
    rows.append(gx.filter_g(k, 1.0, lam))
np.savetxt(os.path.join(OUT, "filters.csv"), np.column_stack(rows), delimiter=",",
           header="lambda," + ",".join(f"phi_{k}" for k in ks)
                  + "," + ",".join(f"g_{k}" for k in (5, 20, 40, 80)),
           comments="")

for k in (5, 20, 40, 80):
    g = gx.filter_g(k, 1.0, lam[1:])
    print(f"k = {k:3d}: sup g_k = {g.max():.2f}  (vs 0.5 sqrt(k) = {0.5*np.sqrt(k):.2f}) "
          f"peak at lambda = {lam[1:][np.argmax(g)]:.3f}")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    for k in ks:
        ax1.plot(lam, gx.filter_phi(k, 1.0, lam), label=f"k={k}")
    ax1.set_title(r"solution filter $\phi_k$")
    ax1.legend(fontsize=8)
    for k in (5, 20, 40, 80):
        ax2.plot(lam, gx.filter_g(k, 1.0, lam), label=f"k={k}")
    ax2.plot(lam[40:], 1.0 / lam[40:], "k--", lw=1, label="1/lambda")
    ax2.set_ylim(0, 10)
    ax2.set_title(r"data filter $g_k$")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(os.path.join(OUT, "filters.png"), dpi=130)
    print(f"wrote {OUT}/filters.png and filters.csv")
except ImportError:
    print(f"wrote {OUT}/filters.csv")
