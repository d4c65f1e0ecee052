"""Encoder-only multi-talker transcription with serialized CTC and count routing."""

__version__ = "0.1.0"
