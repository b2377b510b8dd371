"""Hookean bead-spring chain models: kinetic, Fokker-Planck and small-mass limit solvers."""
__version__ = "0.1.0"
