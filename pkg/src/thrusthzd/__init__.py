"""Thruster-assisted hybrid zero dynamics for a planar 3-link biped."""

from .kernels import BACKEND
from .model import ModelParams

__all__ = ["BACKEND", "ModelParams"]
__version__ = "0.1.0"
