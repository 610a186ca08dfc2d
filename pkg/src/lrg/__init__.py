"""Learning reference governor toolkit."""

__version__ = "0.1.0"
