"""Desk-scale brick pick-and-build toolkit: synthetic sensing, point-cloud
registration, per-brick pose refinement, build-order planning, marker and
heat-source perception, and an end-to-end mission simulation."""

__version__ = "0.1.0"
