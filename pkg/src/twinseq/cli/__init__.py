"""Command-line interface: config parsing, bench harness and model files."""

from .main import main

__all__ = ["main"]
