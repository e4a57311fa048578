"""Quantum network control: exact entanglement primitives and a slotted network model."""

__version__ = "0.1.0"
