"""Speech analysis and synthesis from filterbank cepstra."""

__version__ = "0.1.0"
