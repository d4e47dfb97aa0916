"""Contextual bandits with episodically revealed rewards."""

__version__ = "0.1.0"
