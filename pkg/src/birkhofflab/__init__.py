"""Numerical laboratory for geodesic return maps on two-spheres of
revolution: transversal-annulus sections, strip-map flux/action/Calabi
calculus, and sharp systolic inequality audits."""

from . import errors
from .metric_models import (MetricModel, SurfacePoint, area, from_json,
                            gaussian_curvature,
                            injectivity_radius_lower_bound, make_round,
                            make_spheroid, make_zoll, pinching_constant,
                            surface_point, to_json)
from .geodesic_dynamics import (ClosedOrbit, GeodesicState, JacobiPolarState,
                                Trajectory, clairaut_invariant,
                                conjugate_time, equator_orbit, equator_seed,
                                find_closed_geodesic, integrate_geodesic,
                                jacobi_polar_advance, meridian_orbit,
                                meridian_seed, state_from_angle)
from .birkhoff_section import (BirkhoffGrid, BirkhoffSection, build_section,
                               compute_return_grid, contact_volume_check,
                               jacobi_angle_window, monotonicity_check,
                               return_data, verify_area_identity,
                               verify_tau_action_identity, zero_flux_lift)
from .strip_calculus import (ActionGrid, GeneratingGrid, StripMapGrid,
                             action, action_from_generating,
                             build_from_generating, calabi,
                             calabi_from_generating,
                             fixed_point_with_signed_action, flux,
                             flux_boundary_path, generating_from_map,
                             identity_map, random_generating_grid, shear_map,
                             translation_map)
from .systolic_audit import (SystolicReport, audit,
                             candidate_closed_geodesics, simplicity_check,
                             two_gon_perimeter_check)

__version__ = "0.1.0"
