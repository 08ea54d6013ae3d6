"""Quantum and classical DQN agents for HDA flowsheet synthesis."""

__version__ = "0.1.0"
