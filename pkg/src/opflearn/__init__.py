"""Learning AC-OPF solutions: data generation, interior-point solves, graph models."""
__version__ = "0.1.0"
