"""Multiplication-free compute-in-SRAM: operator, trainer, macro simulator,
cost model, variability Monte Carlo, and network-to-hardware mapper."""

__version__ = "0.1.0"
