"""Run the scorer service: python -m scorer_service [--config cfg.yaml] [--port N]."""

from __future__ import annotations

import argparse

import uvicorn

from .app import create_app
from .config import ServiceConfig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="scorer-service", description=__doc__)
    parser.add_argument("--config", help="YAML or flat key=value config file")
    parser.add_argument("--host", default=None)
    parser.add_argument("--port", type=int, default=None)
    parser.add_argument(
        "--backend", choices=("synthetic", "real"), default=None,
        help="override the configured backend",
    )
    args = parser.parse_args(argv)

    config = ServiceConfig.load(args.config)
    if args.backend:
        config.backend = args.backend
    if args.host:
        config.host = args.host
    if args.port:
        config.port = args.port

    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
