"""Exception and warning types shared across the toolkit."""


class StatvacError(Exception):
    """Base class for all toolkit errors."""


class GridMismatch(StatvacError):
    """Fields passed to one operation live on different grids."""


class NonPositiveDefinite(StatvacError):
    """A nodal metric failed its Cholesky positivity check."""

    def __init__(self, node_index):
        self.node_index = node_index
        super().__init__(f"metric not positive definite at node {node_index}")


class DegenerateNormal(StatvacError):
    """The metric restricted to the normal direction is near singular."""


class CollarTooThin(StatvacError):
    """Not enough radial layers near the inner boundary for the requested operation."""


class HorizonInsideDomain(StatvacError):
    """Schwarzschild background requested with r_sigma at or below the horizon radius."""


class RadiusOutsideGrid(StatvacError):
    """A requested evaluation radius lies outside the grid."""


class SolverDiverged(StatvacError):
    """A linear solve failed to reach its tolerance."""


class RankDeficientBasis(StatvacError):
    """Gram matrix of a vector basis is numerically rank deficient."""


class SingularAssembly(StatvacError):
    """An assembled operator expected to be invertible is numerically singular."""


class NoSpectralGap(StatvacError):
    """Kernel probe found no singular-value gap ratio above the configured threshold."""

    def __init__(self, singular_values, gap_required):
        self.singular_values = singular_values
        self.gap_required = gap_required
        super().__init__(
            "no singular-value gap ratio >= %g in %s" % (gap_required, singular_values)
        )


class PathLeftDomain(StatvacError):
    """A transport path left the grid's coordinate range."""


class StepSizeUnderflow(StatvacError):
    """Adaptive ODE integration reduced its step below the allowed floor."""


class InconsistentContinuation(StatvacError):
    """Two transport paths to the same target disagree beyond tolerance."""


class LineSearchFailed(StatvacError):
    """Backtracking line search hit its damping floor without residual decrease."""


class MaxIterations(StatvacError):
    """Newton iteration exceeded its iteration budget."""


class OutsideNeighborhood(StatvacError):
    """Requested boundary data lies outside the configured perturbative neighborhood."""


class ConfigInvalid(StatvacError):
    """Experiment configuration failed validation."""


class BackgroundNotStatic(UserWarning):
    """Background pair fails the static vacuum residual tolerance."""


class PreconditionViolated(UserWarning):
    """An identity's hypotheses are not met by the supplied fields."""
