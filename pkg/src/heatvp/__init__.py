"""Heat and Newtonian volume potentials, the increment (B) operator for
time-derivative densities, empirical Hoelder norms, and a Dirichlet/Neumann
solver for du/dt - Lap u = df/dt."""

from heatvp.domains import Domain, SpaceTimePoint
from heatvp.fields import ScalarField, catalog_field
from heatvp.kernels import (
    DerivativeIndex,
    heat_kernel,
    heat_kernel_derivative,
    laplace_kernel,
    sphere_measure,
)
from heatvp.quadrature import QuadConfig, QuadratureError
from heatvp.potentials import (
    PotentialEvaluator,
    b_operator,
    newtonian_potential,
    potential_of_time_derivative,
    volume_potential,
    volume_potential_gradient,
)

__version__ = "0.1.0"

__all__ = [
    "DerivativeIndex",
    "Domain",
    "PotentialEvaluator",
    "QuadConfig",
    "QuadratureError",
    "ScalarField",
    "SpaceTimePoint",
    "b_operator",
    "catalog_field",
    "heat_kernel",
    "heat_kernel_derivative",
    "laplace_kernel",
    "newtonian_potential",
    "potential_of_time_derivative",
    "sphere_measure",
    "volume_potential",
    "volume_potential_gradient",
]
