"""Normal matrix models: droplet boundaries, eigenvalue gases and checks."""

from .boundary import BoundarySolution, SolverOptions, closed_form_power, solve
from .gas import GasModel, run_chain, run_chains
from .potential import Potential, RadialProfile

__all__ = [
    "BoundarySolution",
    "GasModel",
    "Potential",
    "RadialProfile",
    "SolverOptions",
    "closed_form_power",
    "run_chain",
    "run_chains",
    "solve",
]

__version__ = "0.1.0"
