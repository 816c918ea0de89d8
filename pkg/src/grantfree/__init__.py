"""Link-level simulator for grant-free massive random access receivers."""

__version__ = "0.1.0"
