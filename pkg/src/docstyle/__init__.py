"""Document-image style classification and retrieval toolkit."""

__version__ = "0.1.0"
