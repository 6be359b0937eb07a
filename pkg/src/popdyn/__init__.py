"""Population learning dynamics: simulation and passivity verification."""

__version__ = "0.1.0"
