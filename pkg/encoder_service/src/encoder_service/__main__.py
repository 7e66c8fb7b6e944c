"""Run the service: python -m encoder_service [--host H] [--port P] ..."""

from __future__ import annotations

import argparse

import uvicorn

from .app import create_app
from .config import ServiceConfig


def main(argv: list[str] | None = None) -> None:
    env_cfg = ServiceConfig.from_env()
    parser = argparse.ArgumentParser(prog="encoder-service")
    parser.add_argument("--host", default=env_cfg.host)
    parser.add_argument("--port", type=int, default=env_cfg.port)
    parser.add_argument("--model", default=env_cfg.model)
    parser.add_argument("--max-batch", type=int, default=env_cfg.max_batch)
    args = parser.parse_args(argv)
    cfg = ServiceConfig(
        model=args.model, host=args.host, port=args.port, max_batch=args.max_batch
    )
    uvicorn.run(create_app(cfg), host=cfg.host, port=cfg.port, log_level="warning")


if __name__ == "__main__":
    main()
