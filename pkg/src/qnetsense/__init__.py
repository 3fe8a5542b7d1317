"""Fisher-information, protocol simulation and estimation tools for distributed
multi-parameter sensing on small qubit networks."""

__version__ = "0.1.0"
