"""Layered navigation: offline path library, 2DOF tracking, MCBF safety filter."""

__version__ = "0.1.0"
