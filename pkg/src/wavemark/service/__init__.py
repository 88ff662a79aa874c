"""HTTP service exposing the library pipeline over a workspace directory."""

from .app import create_app

__all__ = ["create_app"]
