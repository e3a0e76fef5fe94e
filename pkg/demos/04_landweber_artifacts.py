"""Half-amplitude artifacts in the preconditioned Landweber reconstruction.

Oscillatory content conormal to guided rays with conjugate pairs cannot be
separated from its mirror image on the conjugate locus: the iteration
converges to roughly half the true amplitude plus an equal-strength
artifact at the locus.  With positive attenuation on the pair segments the
mirror ambiguity is lifted and the artifact fades with iterations.

Runs a reduced-size version of both reconstructions (a few minutes).
"""

import os

import numpy as np

import geoxray as gx
from geoxray.cli import emit_image
from geoxray.microlocal import artifact_metrics

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

n = 96
grid = gx.Grid2D(n)
metric = gx.make_speed("c1", grid)
rays = gx.make_rayset(96, 192)
chi = gx.make_cutoff(grid)
truth = gx.make_phantom(
    gx.PhantomSpec("coherent", center=(-0.7, 0.0), sigma=0.15, angle=np.pi / 24), grid
)
emit_image(truth, os.path.join(OUT, "lw_truth.pgm"))

locus = gx.conjugate_locus(metric, (-0.7, 0.0), 720)
mask = gx.locus_mask(grid, locus)

for label, att_kind in (("zero", "zero"), ("positive", "gaussian_bump")):
    atten = gx.make_attenuation(att_kind, grid)
    op = gx.build_operator(metric, atten, rays)
    psi = gx.forward(op, truth)
    opnorm_sq = gx.estimate_opnorm(op, chi, iters=50)
    gamma = 0.9 * 2.0 / opnorm_sq
    cfg = gx.LandweberConfig(gamma=gamma, k_max=101, chi=chi, snapshot_at=(1, 101))
    state = gx.landweber_run(op, psi, cfg)
    recon = gx.ScalarField2D(grid, state.f)
    amp, a2s = artifact_metrics(recon, truth, mask)
    emit_image(recon, os.path.join(OUT, f"lw_recon_{label}_k101.pgm"))
    print(f"attenuation {label:8s}: amp ratio at truth {amp:.3f}, "
          f"artifact-to-signal {a2s:.3f}  (k = 101)")
print(f"images under {OUT}: amplitude halves and the mirror artifact appears "
      "for zero attenuation; both effects shrink with positive attenuation")
