"""Super-efficiency SBM DEA with undesirable outputs, Malmquist decomposition
and second-stage panel statistics."""

__version__ = "0.1.0"
