"""Toolkit for building small dedicated language models for low-resource languages."""

__version__ = "0.1.0"
