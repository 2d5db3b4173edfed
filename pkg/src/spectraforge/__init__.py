"""Adversarial neural-network optimisation of first eigenvalues under a mass constraint."""

__version__ = "0.1.0"
