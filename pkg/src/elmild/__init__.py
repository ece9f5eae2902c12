"""Mild-solution Picard iteration for a simplified Ericksen-Leslie model."""

__version__ = "0.1.0"
