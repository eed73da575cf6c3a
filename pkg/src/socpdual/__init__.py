"""Strong-duality toolkit for the second-order cone relaxation of AC optimal
power flow on radial networks."""

__version__ = "0.1.0"
