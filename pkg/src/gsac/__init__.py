"""Networked multi-agent actor-critic with causal compact representations."""

__version__ = "0.1.0"
