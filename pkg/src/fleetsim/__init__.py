"""Discrete-event ride-sharing fleet simulator with idle-vehicle repositioning."""

__version__ = "0.1.0"
