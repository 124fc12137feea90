"""Fingertip-camera dexterous manipulation stack."""

__version__ = "0.1.0"
