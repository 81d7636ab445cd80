"""Numerical solvers for Lieb's simplified approach to the Bose gas."""

from .errors import (BracketingFailure, DegeneratePotential, DenominatorNearZero,
                     DiscriminantNegative, GridMismatch, LinearSolveFailure, NoDecay,
                     NonConvergence, PositivityLoss, SimpleGasError, TorusMismatch)
from .potentials import Exponential, Gaussian, TableRadial, parse_potential, scattering_length
from .radial_field import RadialFn, RadialGrid
from .simple_equation import SimpleOptions, SimpleSolution, residual_simpleq, solve_at_e, solve_at_rho
from .torus_field import (ExternalPotential, PairField, PlaneWaveProjector, SymmetrizedProjector,
                          Torus, TorusField, ZeroWin)

__version__ = "0.1.0"
