"""
Numerical verification toolkit for real analyticity of solutions to
nonlocal Schroedinger-type equations ``(-Delta + m^2)^s phi = V phi``.

Modules: ``spectral_core`` (grids, fields, multipliers), ``kernels``
(resolvent kernels and their derivative majorants), ``localization``
(nested cutoffs and the derivative decomposition), ``bounds``
(quantitative estimates and certificates), ``solver`` (ground states)
and ``diagnostics`` (derivative-growth analyticity diagnostic); ``cli``
ties them together.
"""

from .spectral_core import Ball, Field, GridSpec, MultiIndex, OperatorSpec

__version__ = "0.1.0"

__all__ = ["Ball", "Field", "GridSpec", "MultiIndex", "OperatorSpec", "__version__"]
