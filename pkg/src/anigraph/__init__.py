"""Numerical toolkit for anisotropic minimal graphs and half-space rigidity experiments."""

from .wulff import AnisotropyIntegrand

__version__ = "0.1.0"

__all__ = ["AnisotropyIntegrand", "__version__"]
