"""Decentralized double stochastic averaging gradient simulator."""

__version__ = "0.1.0"
