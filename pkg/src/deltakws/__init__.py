"""Gain-invariant wake-word spotting with delta log filterbank energies."""

__version__ = "0.1.0"
