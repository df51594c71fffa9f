"""statvac: numerics for the static vacuum extension boundary-value problem.

Evaluates the static vacuum operator and its gauged linearization on
spherical-chart grids, probes kernels of the assembled systems, runs Newton
solves for prescribed Bartnik boundary data near Euclidean and Schwarzschild
backgrounds, and verifies the supporting operator identities at desk scale.

Modules
-------
chart_tensor        grids, tensor fields, metric jets, calculus, quadrature
boundary_geometry   boundary restriction, Bartnik data, exact boundary primes
backgrounds         Euclidean/Schwarzschild pairs, spacetime lifts
linearized_ops      exact discrete linearizations, P/Q Green operators
gauge               gauge field, Gamma operator, gauged Killing basis
killing_transport   h-Killing candidate transport along geodesic paths
assembly_solve      sparse assembly, kernel probe, bordered Newton solver
diagnostics         ADM mass, integral identities, family kernel sweep
testfields          seeded smooth random fields
cli_reports         experiment configs, reports, command line interface
errors              exception and warning hierarchy
"""

from .backgrounds import BackgroundSpec, StaticPair, make_background
from .chart_tensor import ChartGrid, TensorField, axisym_grid, radial_grid
from .errors import StatvacError

__version__ = "0.1.0"

__all__ = [
    "BackgroundSpec",
    "StaticPair",
    "make_background",
    "ChartGrid",
    "TensorField",
    "axisym_grid",
    "radial_grid",
    "StatvacError",
    "__version__",
]
