"""Indirect psychosocial-risk screening from journal text and survey answers."""

__version__ = "0.1.0"
