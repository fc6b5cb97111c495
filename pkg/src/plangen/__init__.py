"""Reinforcement-learned generation of classical planning problems."""

__version__ = "0.1.0"
