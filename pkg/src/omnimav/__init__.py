"""Simulation and analysis tools for planar multi-link omnidirectional multirotors."""

from .params import (Actuation, ParameterError, VehicleParams, VehicleType, load_params,
                     preset)

__all__ = ["Actuation", "ParameterError", "VehicleParams", "VehicleType", "load_params",
           "preset"]
