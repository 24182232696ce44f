"""Multi-agent keyphrase extraction with length-based dual-path routing."""

__version__ = "0.1.0"
