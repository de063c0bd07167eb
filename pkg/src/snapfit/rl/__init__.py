"""Skill-level reinforcement learning: environment, numpy SAC/TD3, training and evaluation."""
