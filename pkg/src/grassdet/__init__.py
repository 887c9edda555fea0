"""Best Slater-determinant approximation of CI wave functions.

Finds the determinant of maximum overlap with an arbitrary configuration
interaction expansion by Newton optimization on the Grassmann manifold,
cross-validated against the orbital-rotation parametrization, with a
robust alternating fallback and geometric correlation metrics.
"""

from .alternating import optimize_alternating, optimize_hybrid, update_orbital
from .cisd import CISDWaveFunction, expand_cisd, parse_cisd, serialize_cisd
from .geometry import (
    BlockedStiefelPoint,
    StiefelPoint,
    geodesic_update,
    orthonormal_complement_projector,
    principal_angles,
    subspace_distance,
    thouless_to_stiefel,
)
from .kernels import (
    DeterminantKernels,
    EvalCounters,
    compute_F,
    compute_G,
    compute_H,
    compute_htilde_full,
    minor,
    overlap_f,
    overlap_gradient,
    relation_F2_from_G,
    relation_F_from_G,
    relation_G_from_H,
)
from .metrics import (
    DistanceTriple,
    correlation_energy_bound,
    distances,
    hf_decomposition,
    plucker_residual_2e,
    plucker_residual_ms0,
    slater_overlap,
)
from .models import (
    HubbardDimerSpec,
    dominant_start,
    generate_h2_model,
    h2_angle_point,
    hubbard_dimer_fci,
    hubbard_rhf_start,
    random_ci,
    random_cisd,
)
from .newton import (
    NewtonReport,
    NewtonSystem,
    ToleranceOptions,
    assemble_system,
    classify_critical_point,
    optimize,
    solve_horizontal,
)
from .thouless import (
    OrbitalRotationSystem,
    build_jac_hess,
    optimize_thouless,
    transform_ci,
)
from .blocked import (
    BlockedNewtonSystem,
    blocked_assemble,
    blocked_f,
    blocked_point,
    cisd_assemble,
    cisd_f,
    fold_blocked_system,
    freeze_core,
    optimize_cisd,
)
from .wavefunction import (
    CIWaveFunction,
    ParseError,
    excitation_label,
    parse_wavefunction,
    reorder_sign,
    serialize_wavefunction,
)

__version__ = "0.1.0"
