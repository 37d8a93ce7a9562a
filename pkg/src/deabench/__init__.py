"""DEA efficiency benchmarking with least-cost counterfactual targets."""

__version__ = "0.1.0"
