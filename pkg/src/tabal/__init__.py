"""Active-learning sample selection for table detection."""

__version__ = "0.1.0"
