"""Spiked covariance asymptotics, factor-strength testing and Monte Carlo checks."""
__version__ = "1.0.0"
