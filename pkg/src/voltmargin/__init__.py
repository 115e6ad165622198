"""Stochastic voltage stability margin toolkit.

Quantifies how random load fluctuations (intensity sigma) and the speed of
slow load ramps shrink the dynamic margin to saddle-node-induced voltage
collapse, via seeded Monte Carlo simulation of stochastic
differential-algebraic grid models and a slow-fast normal-form laboratory.
"""

__version__ = "0.1.0"
