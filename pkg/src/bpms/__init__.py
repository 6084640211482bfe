"""Bounds and beamformer designs for joint bistatic positioning and monostatic sensing."""

__version__ = "0.1.0"
