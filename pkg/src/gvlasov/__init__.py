"""Particle simulation and Lyapunov-form analysis of a generalized Vlasov dynamic.

Subpackages are imported lazily by users; the most common names are
re-exported here.
"""

__version__ = "0.1.0"

from gvlasov.kernels import BACKEND, get_num_threads, set_num_threads
from gvlasov.model import ForceSpec, ModelParams, State

__all__ = ["__version__", "BACKEND", "ForceSpec", "ModelParams", "State", "get_num_threads", "set_num_threads"]
