"""Martin boundary computations for a random walk killed outside a quadrant."""

from .lattice_measure import JumpMeasure, M1, M2, MeasureError, validate
from .geometry import a_of_q, phi, SpectralPoint
from .processes import twisted_kernel, sample_path, exit_probability_mc
from .green_solver import green_column, martin_kernel
from .boundary_functionals import exit_distribution, boundary_expectation, h_function, h1_function
from ._lattice import Box

__version__ = "0.1.0"

__all__ = [
    "JumpMeasure", "M1", "M2", "MeasureError", "validate",
    "a_of_q", "phi", "SpectralPoint",
    "twisted_kernel", "sample_path", "exit_probability_mc",
    "green_column", "martin_kernel",
    "exit_distribution", "boundary_expectation", "h_function", "h1_function",
    "Box", "__version__",
]
