"""Desk-scale humanoid motion-tracking harness.

Subpackages cover the full training/deployment loop at toy scale: a
contiguous motion bank with batched window queries, two-level adaptive
curriculum resampling, the tracking reward stack, a planar PD-controlled
tracking environment, a teleoperation channel simulator, small policies
with hand-rolled backprop (PPO + residual distillation), and periodic
motion synthesis from a phase/style latent.
"""

__version__ = "0.1.0"
