"""Spectral statistics of random spatial networks: simulation, difference operators and CLT checks."""

from .errors import ConfigError, PreconditionError, RgSpectraError
from .graphs import KNN, RGG, RNG, Adjacency, build_graph, parse_model
from .pointproc import PointConfig, Window, sample_poisson, stream
from .spectral import TestFunction, builtin, eigenvalues, trace_function

__version__ = "0.1.0"

__all__ = ["KNN", "RGG", "RNG", "Adjacency", "ConfigError", "PointConfig", "PreconditionError", "RgSpectraError",
           "TestFunction", "Window", "build_graph", "builtin", "eigenvalues", "parse_model", "sample_poisson",
           "stream", "trace_function"]
