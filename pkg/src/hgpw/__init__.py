"""Hybrid gap-plasmon waveguide modes, single-emitter photon statistics and coupling analysis."""

__version__ = "0.1.0"
