"""Planar snap-fit assembly simulator with analytic and lumped joining models and RL training."""

__version__ = "0.1.0"
