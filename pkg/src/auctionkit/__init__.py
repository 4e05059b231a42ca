"""Deterministic double-auction market simulator.

Subpackages cover the market mechanism itself, a library of trading
strategies, performance metrics, empirical game-theoretic analysis,
evolutionary and bandit search over strategy and mechanism parameters,
and a CLI harness for batch experiments.
"""

__version__ = "0.1.0"
