"""Numerical laboratory for screened Vlasov-Poisson linear response and nonlinear density dynamics."""

__version__ = "0.1.0"
