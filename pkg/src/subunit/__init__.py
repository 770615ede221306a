"""Unitarity-based correlation measures for bipartite quantum channels."""

__version__ = "0.1.0"

from .exceptions import (
    FitError,
    InvalidChannelError,
    InvalidDimensionError,
    InvalidInputError,
    NumericalDomainError,
    SubunitError,
    UnsupportedError,
)
from .liouville import BipartiteChannel, Channel
from .measures import correlated_unitarity, measure_report, sub_unitarity, unitarity, witness_bound

__all__ = [
    "__version__",
    "BipartiteChannel",
    "Channel",
    "FitError",
    "InvalidChannelError",
    "InvalidDimensionError",
    "InvalidInputError",
    "NumericalDomainError",
    "SubunitError",
    "UnsupportedError",
    "correlated_unitarity",
    "measure_report",
    "sub_unitarity",
    "unitarity",
    "witness_bound",
]
