"""Numerical verification workbench for quasi-Einstein metrics."""
