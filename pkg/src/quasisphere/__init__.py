"""Quasi-spherical metric extensions of convex surfaces.

Toolkit for constructing scalar-flat exteriors of strictly convex surfaces
by solving a parabolic lapse equation outward along parallel surfaces, and
for verifying the resulting quasi-local mass series and asymptotics.
"""

from quasisphere.sphere import (
    MetricField,
    ScalarField,
    SphereGrid,
    gradient_squared,
    integrate,
    laplace_beltrami,
    make_grid,
    real_sph_harm,
    round_metric,
)
from quasisphere.convex import (
    ParallelGeometry,
    SupportShape,
    asymptotic_rates,
    ellipsoid_shape,
    load_support_table,
    parallel_geometry,
    save_support_table,
    shape_from_support,
    sphere_shape,
)
from quasisphere.solver import (
    InitialData,
    QSState,
    SolverAbort,
    SolverConfig,
    solve,
    solve_from_state,
    solve_minimal,
    step,
)
from quasisphere.mass import (
    MassRecord,
    MassSeries,
    adm_surface_integral,
    mass_series,
    shi_tam_gap,
    solution_metric_evaluator,
)
from quasisphere.asymptotic import (
    AsymptoticMetric,
    conformal_schwarzschild,
    coordinate_sphere,
    euclidean,
    mass_from_spheres,
    mean_curvature_variants,
    quadrupole_perturbation,
    weyl_h0_bounds,
)
from quasisphere.curvature import (
    ShellMetric,
    convergence_study,
    fd_scalar_curvature,
    second_form_check,
    shell_metric_from_function,
    shell_metric_from_snapshots,
    shell_scalar_residual,
)

__version__ = "0.1.0"
