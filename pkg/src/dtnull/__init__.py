"""Digital-twin assisted interference-nulling analog beam learning."""

__version__ = "0.1.0"
