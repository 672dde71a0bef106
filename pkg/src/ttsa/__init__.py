"""Two-time-scale stochastic approximation with a non-expansive slow map."""

__version__ = "0.1.0"
