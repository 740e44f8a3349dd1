"""Distributed PTZ sensor-network monitoring as a constrained potential game.

Modules: ``game`` (action spaces, marginal-contribution games, scaling),
``learner`` (payoff-based learning rule), ``env`` (geometry and rewards),
``comms`` (neighbor messages), ``chain`` (exact Markov-chain analysis),
``config`` / ``experiment`` / ``cli`` (scenario harness).
"""

__version__ = "0.1.0"
