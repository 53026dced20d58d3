"""Reduced-order modelling of FFD-parametrised geometries: morphing, snapshots, POD, PODI, DD-POD."""

__version__ = "0.1.0"
