"""Limit-cycle walking gait families for a planar five-link biped:
generation from a single base gait, certified switching, and dwell-time
weighted speed planning."""

from .model import Biped, GaitswitchError, GroundForce, ModelParams, State

__all__ = ["Biped", "GaitswitchError", "GroundForce", "ModelParams", "State"]

__version__ = "0.1.0"
