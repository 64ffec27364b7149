"""Verification laboratory for the generalized q-Toda lattice and its hierarchy."""

__version__ = "0.1.0"

from .errors import GQTodaError
from .hirota import SolitonMode, SolitonSpec, dispersion_beta, field_V, gqte_soliton, tau_function
from .qshift import ShiftParams, mobius_shift

__all__ = [
    "GQTodaError",
    "ShiftParams",
    "SolitonMode",
    "SolitonSpec",
    "__version__",
    "dispersion_beta",
    "field_V",
    "gqte_soliton",
    "mobius_shift",
    "tau_function",
]
