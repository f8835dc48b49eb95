"""Random matrix products with a Schubert condition: a numerical laboratory."""

__version__ = "0.1.0"
