"""Version-age-optimal scheduling over NOMA broadcast channels."""

__version__ = "0.1.0"
