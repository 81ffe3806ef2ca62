"""medcurate: curation toolkit for biomedical visual instruction-following data."""

__version__ = "0.1.0"
