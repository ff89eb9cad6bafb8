"""Online resource allocation with exogenous replenishment."""

__version__ = "0.1.0"
