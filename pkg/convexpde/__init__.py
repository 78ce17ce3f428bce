# convexpde/__init__.py
from .config import convexpde_VERSION as __version__
from .grid import GridDomain, VectorField
from .operator import OperatorCoefficients, assemble, estimate_garding
from .problem import load_builtin, load_config, parse_config
from .solver import SolverConfig, Termination, solve
