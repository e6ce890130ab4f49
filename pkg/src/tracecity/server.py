"""Command-line entry point that runs the service until interrupted."""

from __future__ import annotations

import argparse
import sys
import time

from .config import ServiceConfig
from .service import TraceCityService


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tracecity-serve",
        description="Run the trace analysis service (OTLP ingest + query API).",
    )
    parser.add_argument("--config", help="JSON config file with dotted keys")
    parser.add_argument("--ingest-port", type=int, help="override ingest.port")
    parser.add_argument("--api-port", type=int, help="override api.port")
    parser.add_argument("--store-dir", help="override store.dir")
    parser.add_argument("--capacity", type=int, help="override ingest.capacity_spans")
    args = parser.parse_args(argv)

    config = ServiceConfig.from_file(args.config) if args.config else ServiceConfig()
    overrides = {}
    if args.ingest_port is not None:
        overrides["ingest_port"] = args.ingest_port
    if args.api_port is not None:
        overrides["api_port"] = args.api_port
    if args.store_dir is not None:
        overrides["store_dir"] = args.store_dir
    if args.capacity is not None:
        overrides["ingest_capacity_spans"] = args.capacity
    if overrides:
        import dataclasses

        config = dataclasses.replace(config, **overrides)

    service = TraceCityService(config).start()
    print(f"ingest: {service.ingest_url}/v1/traces", flush=True)
    print(f"api:    {service.api_url}/api/status", flush=True)
    try:
        while True:
            time.sleep(1)
    except KeyboardInterrupt:
        print("shutting down", file=sys.stderr)
    finally:
        service.stop()
    return 0


if __name__ == "__main__":
    sys.exit(main())
