"""Mixed graphical network estimation, communities, indices and bootstrap stability."""

__version__ = "0.1.0"
