"""Posterior-sampling value iteration for linear MDPs under delayed trajectory feedback."""

__version__ = "0.1.0"
