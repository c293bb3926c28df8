"""Non-signaling assisted simulation of classical and classical-quantum channels.

Exact small-instance simulation errors, Renyi mutual informations, error
and strong converse exponents, finite blocklength bounds, certified
explicit constructions and randomized checks of the supporting lemmas.
"""

__version__ = "0.1.0"

from .chanmodel import (ClassicalChannel, CqChannel, TypeClass, ValidationError, bsc,
                        identity_channel, load_channel, save_channel)
from .exponents import error_exponent, sc_exponent
from .ns_solver import minimax_check, ns_error_blocklength, ns_error_classical, ns_error_cq
from .renyi_capacity import renyi_mi_classical, renyi_mi_cq

__all__ = ["ClassicalChannel", "CqChannel", "TypeClass", "ValidationError", "bsc",
           "identity_channel", "load_channel", "save_channel", "error_exponent", "sc_exponent",
           "minimax_check", "ns_error_blocklength", "ns_error_classical", "ns_error_cq",
           "renyi_mi_classical", "renyi_mi_cq"]
