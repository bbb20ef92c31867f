"""Exception hierarchy shared by all modules.

Every numerical failure raises a subclass of GeometryError so callers
(and the CLI, which maps them to exit code 3) can catch one type.
"""


class GeometryError(Exception):
    """Base class for tolerance-controlled geometric failures."""


class NotTransversal(GeometryError):
    """Two subspaces expected to be transversal are not."""


class NotInChart(GeometryError):
    """A subspace meets the chart's excluded complement."""


class SearchExhausted(GeometryError):
    """The deterministic candidate schedule ran out."""


class ChartFailure(GeometryError):
    """No single chart covers the requested stencil."""


class NotRegular(GeometryError):
    """Velocity of the curve is numerically singular."""


class NotMonotone(GeometryError):
    """Velocity form is indefinite where a sign was required."""


class EndpointOnTrain(GeometryError):
    """Curve endpoint intersects the reference subspace."""


class SubdivisionFailure(GeometryError):
    """Chart subdivision exceeded the maximum refinement depth."""


class DegenerateEndpoint(GeometryError):
    """Endpoint subspaces intersect; the index is not defined."""


class RankDrop(GeometryError):
    """A constraint Jacobian lost rank."""


class DimensionDefect(GeometryError):
    """A constructed subspace came out with the wrong dimension."""


class EndpointDegenerate(GeometryError):
    """Family endpoint Hessian is degenerate."""


class BlowUp(GeometryError):
    """Trajectory or state norm exceeded the cap."""


class TangentFiber(GeometryError):
    """The Hamiltonian field is tangent to the fiber; reduction undefined."""


class ReductionRefused(GeometryError):
    """Level-set reduction is not admissible at this point."""
