"""Gamma, Dirichlet and Poisson-Dirichlet random measures: samplers, densities,
lines of descent, measure-valued dynamics and a Monte Carlo verification harness."""
from .measures import AtomicMeasure, BaseSpace, ContractError, DomainError, MeasureBatch, TestFunction
from .rng import RngStream
from .samplers import NumericError, ParameterError, TruncationPolicy

__version__ = "0.1.0"

__all__ = ["AtomicMeasure", "BaseSpace", "ContractError", "DomainError", "MeasureBatch", "NumericError",
           "ParameterError", "RngStream", "TestFunction", "TruncationPolicy", "__version__"]
