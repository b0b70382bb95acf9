"""Quantum-network compressive ghost imaging simulator."""

__version__ = "0.1.0"
