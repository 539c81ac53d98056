"""Network model of interacting global risks: fitting, simulation and mean-field analysis."""

__version__ = "0.1.0"
