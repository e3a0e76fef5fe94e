"""geoxray: attenuated geodesic X-ray transforms on conformal disks.

Forward/adjoint fan-beam operators for conformally Euclidean ray metrics
on the unit disk, Laplacian-preconditioned Landweber reconstruction,
Jacobi-field conjugate-point diagnostics, and the experiment presets that
exercise them.
"""

from .grid import (
    ConformalMetric,
    Grid2D,
    ScalarField2D,
    gaussian_curvature,
    make_cutoff,
    make_speed,
    metric_laplacian,
)
from .geodesics import (
    GeodesicPath,
    JacobiSolution,
    PhasePoint,
    RaySet,
    bdot_ratio,
    conjugate_locus,
    jacobi,
    make_rayset,
    shoot,
    trace_rays,
)
from .xray import (
    ForwardOperator,
    Sinogram,
    adjoint,
    build_operator,
    estimate_opnorm,
    forward,
    normal_apply,
)
from .landweber import (
    LandweberConfig,
    LandweberState,
    choose_gamma,
    filter_g,
    filter_phi,
    landweber_run,
)
from .phantoms import (
    NoiseSpec,
    PhantomSpec,
    add_gaussian_noise,
    make_attenuation,
    make_phantom,
    poisson_modulate,
)
from .microlocal import (
    ConjugatePairRecord,
    StabilityReport,
    artifact_metrics,
    build_Q,
    census,
    locus_mask,
    pair_record_from_times,
)

__version__ = "0.1.0"
