"""Zone-based billing for local energy markets, computed under three-party MPC."""

__version__ = "0.1.0"
