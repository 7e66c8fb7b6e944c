"""Embedding microservice: POST /embed turns texts into unit vectors."""

from .app import create_app
from .backends import HashBackend, resolve_backend
from .config import ServiceConfig

__all__ = ["ServiceConfig", "HashBackend", "resolve_backend", "create_app"]
