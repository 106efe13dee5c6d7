"""Neural tabular synthesizers served over the fit/sample subprocess protocol."""

__version__ = "0.1.0"
