"""Adiabatic charge pumping in commensurate Aubry-Andre-Harper chains."""

from .model import ModelParams, Sign, TunnelingMode

__version__ = "0.1.0"

__all__ = ["ModelParams", "Sign", "TunnelingMode", "__version__"]
