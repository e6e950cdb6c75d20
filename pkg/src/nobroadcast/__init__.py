"""Numerical checks around the quantum no-broadcasting theorem and its classical limit."""

from . import broadcasting, dynamics, entropy, errors, phase_space, quantum_state

__all__ = ["broadcasting", "dynamics", "entropy", "errors", "phase_space", "quantum_state"]
__version__ = "0.1.0"
