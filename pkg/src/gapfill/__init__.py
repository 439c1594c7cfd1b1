"""Deep-learning gap filling for sensor temperature series."""

__version__ = "0.1.0"
