"""Recurrent Dirichlet belief network for dynamic relational data."""
__version__ = "0.1.0"
