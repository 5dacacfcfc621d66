"""Desk-scale observer/drone pursuit MARL: rotating policy pools, an
independent-PPO baseline, and mixed-team evaluation against held-out
DDQN partners."""

__version__ = "0.1.0"
