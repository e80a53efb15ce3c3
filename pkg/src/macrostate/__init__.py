"""Economic state classification, similarity matrices and constrained portfolio optimisation for macro panels."""

__version__ = "0.1.0"
