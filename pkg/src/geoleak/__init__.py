"""Location leakage analysis for mobile network traffic."""

__version__ = "0.1.0"
