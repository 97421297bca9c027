"""UAV-enabled legitimate monitoring: jamming and total-energy optimization."""

__version__ = "0.1.0"
