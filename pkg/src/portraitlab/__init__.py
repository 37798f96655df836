"""Portrait aesthetics: feature extraction, importance analysis, classification."""

__version__ = "0.1.0"
