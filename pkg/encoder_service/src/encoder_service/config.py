"""Service configuration, overridable through environment variables."""

from __future__ import annotations

import os
from dataclasses import dataclass

DEFAULT_MODEL = "all-MiniLM-L6-v2"


@dataclass(frozen=True)
class ServiceConfig:
    model: str = DEFAULT_MODEL
    host: str = "127.0.0.1"
    port: int = 8000
    max_batch: int = 256

    def __post_init__(self) -> None:
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")
        if not self.model:
            raise ValueError("model name must be non-empty")

    @classmethod
    def from_env(cls, environ: os._Environ | dict | None = None) -> "ServiceConfig":
        env = os.environ if environ is None else environ
        return cls(
            model=env.get("ENCODER_MODEL", DEFAULT_MODEL),
            host=env.get("ENCODER_HOST", "127.0.0.1"),
            port=int(env.get("ENCODER_PORT", "8000")),
            max_batch=int(env.get("ENCODER_MAX_BATCH", "256")),
        )
