"""Numerics for symmetry and symmetry breaking in Caffarelli-Kohn-Nirenberg inequalities."""
__version__ = "0.1.0"
