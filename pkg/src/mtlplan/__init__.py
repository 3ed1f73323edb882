"""MTL mission planning for multi-UAV rescue scenarios via mixed-integer linear programs."""

__version__ = "0.1.0"
