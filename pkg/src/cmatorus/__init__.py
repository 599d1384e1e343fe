"""Numerical solver for the equation chi_u^n = psi chi_u^{n-alpha} ^ omega^alpha on flat complex tori."""

__version__ = "0.1.0"
