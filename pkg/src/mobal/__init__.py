"""Online incident-response planning with Bayesian learning over conjectured models."""

from .errors import (CapacityError, ConfigError, DegenerateEvidenceError, ImpossibleObservationError,
                     MobalError)
from .pomdp import PomdpModel, belief_update, point_belief
from .netsys import NetSysConfig, build_model
from .quantize import enumerate_lattice, lattice_count, quantize, solve, value_iteration
from .conjecture import ConjectureSpace, Posterior, posterior_update
from .loop import LoopConfig, MobalAgent, run_episode

__version__ = "0.1.0"
