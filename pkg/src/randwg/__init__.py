"""Paraxial mode propagation in a waveguide with a randomly perturbed boundary."""

__version__ = "0.1.0"
