"""Screw dislocations in hexagonal quasi-crystals.

Coupled phonon/phason anti-plane elasticity with point dislocations: singular
fields, traction-free corrective potentials by finite elements, core and
renormalised energies, and Peach-Koehler forces.
"""

from .energy import (EnergyBreakdown, FitResult, InteractionFit, annulus_energy_exact,
                     asymptotic_fit, core_energy, energy_sweep, f_elastic, f_int, f_self,
                     interaction_log_fit, regularized_energy, renormalized_energy,
                     total_energy_eps)
from .errors import *  # noqa: F401,F403
from .fields import Circle, Dislocation, FieldPair, burgers_loop, loop_flux, singular_field
from .forces import ForceReport, System, eshelby, force_report, pk_force, pk_force_fd
from .geometry import (Disc, Domain, Mesh, Polygon, integrate_boundary, integrate_domain,
                       outward_normal, read_mesh, triangulate, write_mesh)
from .material import MaterialConstants, StressPair, energy_density, hooke, validate
from .quadrature import QuadratureSpec, adaptive_line_integral
from .solver import (CorrectiveSolution, NeumannProblem, corrective_fields_eps,
                     corrective_fields_limit, decouple, solve_neumann)

__version__ = "0.1.0"
