"""Threshold dynamics of the radial focusing inhomogeneous cubic NLS in 3D.

Ground state, linearised spectrum, exponentially convergent special solutions,
split-step evolution, modulation/virial diagnostics and an experiment harness.
"""

from .errors import *  # noqa: F401,F403
from .grid import RadialGrid, make_grid
from .ground_state import GroundState, solve_ground_state
from .linearized import SpectralData, assemble_operators, compute_unstable_pair
from .special import build_profiles, special_initial_data
from .evolution import Controls, Label, SpongeConfig, evolve, step
from .diagnostics import component_track, delta, modulate, virial_F, virial_P

__version__ = "0.1.0"
