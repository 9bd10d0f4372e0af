"""Canonical divergences of statistical manifolds, computed from geodesics
and parallel transport, with numerical checks of their identities."""

from .config import DEFAULT, NumericsConfig
from .divergence import (QUANTITIES, DivergenceValue, Orientation, ay_amari_divergence,
                         bregman_divergence, canonical_divergence, evaluate_many,
                         grad_divergence, henmi_kobayashi, legendre_dual, legendre_inverse,
                         path_pi_integrals, phi, pi_vectors, pseudo_distance, pseudo_energy,
                         standard_divergence, swapped)
from .errors import (ConfigError, CurveInvalid, FiniteDifferenceStencilOutOfDomain,
                     GradientInversionFailed, IGError, LevelCurveTraceFailed, LevelSetNotFound,
                     NotHessianManifold, PointOutOfDomain, ShootingDiverged, StepCountTooSmall,
                     TrajectoryLeftDomain)
from .geodesic import (Curve, chart_cubic, concat, exp_map, geodesic_between, log,
                       riemannian_distance, shoot)
from .manifold import (DUAL, LEVI_CIVITA, PRIMAL, Alpha, Connection, ManifoldHandle, Tangent,
                       alpha_gaussian, christoffels_at, cubic_tensor_at, curvature_at, custom,
                       euclidean, from_spec, hessian, metric_at, sphere2)
from .report import CheckReport
from .transport import (Loop, cap_area_check, dual_isometry_deviation, holonomy_curvature_check,
                        holonomy_defect, parallelogram_loop, transport_along)
from .verify import (SUITE, SampleScheme, check_condition_S, check_decompositions,
                     check_eguchi_consistency, check_energy_invariants,
                     check_grad_pseudo_distance, check_level_set_orthogonality,
                     check_special_cases, check_symmetry_relations, probe_convex_radius,
                     run_check, run_suite)

__version__ = "0.1.0"
