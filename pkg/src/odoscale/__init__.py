"""Odoscale - score, filter and curate real-world-scale visual odometry predictions."""

import sys

__version__ = "0.1.0"

__all__ = ["DEBUG", "__version__", "debug", "set_debug"]

# Set by `--debug`
DEBUG = False


def set_debug(enabled: bool) -> None:
    global DEBUG
    DEBUG = bool(enabled)


def debug(*args, **kwargs) -> None:
    """Print a [DEBUG] line to stderr when DEBUG is enabled."""
    if DEBUG:
        kwargs.setdefault("file", sys.stderr)
        print("[DEBUG]", *args, **kwargs)
