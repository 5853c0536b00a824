"""Guidance scoring service over a single JSON endpoint (/v1/score)."""

from .app import create_app
from .config import SDSParams, ServiceConfig

__version__ = "0.1.0"

__all__ = ["SDSParams", "ServiceConfig", "create_app"]
