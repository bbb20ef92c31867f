"""Geometry of curves in the Lagrange Grassmannian.

Numerical toolkit for linear Hamiltonian and variational problems:
Darboux charts, Maslov-type intersection indices, curvature operators of
monotone curves, conjugate point location, canonical connections of
Hamiltonian fields, and curvature-based stability certificates.
"""

from .errors import (
    BlowUp,
    ChartFailure,
    DegenerateEndpoint,
    DimensionDefect,
    EndpointDegenerate,
    EndpointOnTrain,
    GeometryError,
    NotInChart,
    NotMonotone,
    NotRegular,
    NotTransversal,
    RankDrop,
    ReductionRefused,
    SearchExhausted,
    SubdivisionFailure,
    TangentFiber,
)

__version__ = "0.1.0"
