"""Single entry point: serve the API, scan manifests, replay simulated
workloads, run one detection pass, or render an offline report.

Exit codes: 0 success, 1 validation error, 2 I/O error, 3 smells found
(scan only, so CI can gate on it). Machine output modes print exactly
one JSON document on stdout; logs go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import socket
import sys
import time
from pathlib import Path

from .catalog import CatalogError, bundled_catalog, load_catalog
from .config import ConfigError, load_config
from .simulate import (
    ReplayError,
    ScenarioError,
    bundled_scenario,
    bundled_scenario_names,
    generate,
    load_scenario,
    replay,
)
from .static_analysis import ManifestError, StaticDetectionConfig, detect_static, load_manifest_dir
from .store import SegmentedStore, StoreError
from .telemetry import TelemetryIngest

logger = logging.getLogger("smellwatch")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_SMELLS = 3


def _add_common(parser: argparse.ArgumentParser, suppress: bool) -> None:
    # Accepted both before and after the subcommand; the subcommand position
    # uses SUPPRESS so an omitted flag keeps the value parsed at the root.
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="YAML config file")
    parser.add_argument("--data-dir", default=default, help="override the data directory")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smellwatch",
        description="Microservice bad-smell detection over traces, metrics, and business counters")
    _add_common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the HTTP API with background cycles")
    _add_common(serve, suppress=True)
    serve.add_argument("--port", type=int, help="listen port")
    serve.add_argument("--host", help="listen host")
    serve.add_argument("--no-scheduler", action="store_true",
                       help="disable the background reintegration/detection loop")

    scan = sub.add_parser("scan", help="one-shot static analysis over a manifest directory")
    _add_common(scan, suppress=True)
    scan.add_argument("--manifests", required=True, help="directory of service manifest JSON files")
    scan.add_argument("--format", choices=["json", "text"], default="text")

    simulate = sub.add_parser("simulate", help="generate a scenario and replay it")
    _add_common(simulate, suppress=True)
    simulate.add_argument("--scenario", required=True,
                          help="scenario file path or bundled scenario name")
    simulate.add_argument("--target", help="ingest base URL (e.g. http://127.0.0.1:8070)")
    simulate.add_argument("--direct", action="store_true",
                          help="write straight into the data directory store")
    simulate.add_argument("--seed", type=int, help="override the scenario seed")
    simulate.add_argument("--manifests-out", help="also write the generated manifests here")
    simulate.add_argument("--speed", type=float,
                          help="pace batches at this multiple of real time (default: no pacing)")

    detect = sub.add_parser("detect", help="run detection over stored telemetry")
    _add_common(detect, suppress=True)
    detect.add_argument("--once", action="store_true", required=True,
                        help="one reintegration pass plus one detection cycle")

    report = sub.add_parser("report", help="render detection card + history figures and CSV")
    _add_common(report, suppress=True)
    report.add_argument("--from", dest="from_us", type=int, help="range start, epoch microseconds")
    report.add_argument("--to", dest="to_us", type=int, help="range end, epoch microseconds")
    report.add_argument("--out", required=True, help="output directory")
    return parser


def _load_cli_config(args: argparse.Namespace):
    overrides = {}
    if args.data_dir:
        overrides["data_dir"] = args.data_dir
    if getattr(args, "port", None) is not None:
        overrides["port"] = args.port
    if getattr(args, "host", None) is not None:
        overrides["host"] = args.host
    return load_config(config_path=args.config, **overrides)


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .api import create_app

    config = _load_cli_config(args)
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((config.host, config.port))
    except OSError as exc:
        logger.error("cannot bind %s:%d: %s", config.host, config.port, exc)
        return EXIT_IO
    finally:
        probe.close()

    ui_dir = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    app = create_app(config, scheduler=not args.no_scheduler,
                     ui_dir=ui_dir if ui_dir.is_dir() else None)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return EXIT_OK


def _cmd_scan(args: argparse.Namespace) -> int:
    config = _load_cli_config(args)
    catalog = (load_catalog(Path(config.catalog_path).read_bytes())
               if config.catalog_path else bundled_catalog())
    model = load_manifest_dir(args.manifests)
    static_config = StaticDetectionConfig(overrides={
        k: v for k, v in config.detection_params.items()})
    records = detect_static(model, static_config, catalog)

    detected = [r for r in records if r.detected]
    if args.format == "json":
        print(json.dumps([r.to_dict() for r in records], indent=2))
    else:
        print(f"analyzed {len(model.services)} services, "
              f"{len(records)} checks, {len(detected)} smells")
        for record in records:
            flag = "SMELL" if record.detected else "ok   "
            print(f"  {flag} {record.smell_id:28s} {record.scope:24s} "
                  f"{record.metric_value:g} {record.comparator} {record.threshold:g}")
    return EXIT_SMELLS if detected else EXIT_OK


def _resolve_scenario(ref: str):
    path = Path(ref)
    if path.exists():
        return load_scenario(path)
    if ref in bundled_scenario_names():
        return bundled_scenario(ref)
    raise ScenarioError(f"scenario {ref!r} is neither a file nor a bundled scenario")


def _cmd_simulate(args: argparse.Namespace) -> int:
    if bool(args.target) == bool(args.direct):
        logger.error("exactly one of --target or --direct is required")
        return EXIT_VALIDATION
    config = _load_cli_config(args)
    catalog = bundled_catalog()
    scenario = _resolve_scenario(args.scenario)
    if args.seed is not None:
        scenario.seed = args.seed
    out = generate(scenario, catalog)

    manifests_out = None
    if args.manifests_out:
        target_dir = Path(args.manifests_out)
        target_dir.mkdir(parents=True, exist_ok=True)
        for manifest in out["manifests"]:
            (target_dir / f"{manifest['name']}.json").write_text(
                json.dumps(manifest, indent=2), encoding="utf-8")
        manifests_out = str(target_dir)

    if args.direct:
        store = SegmentedStore(config.data_dir)
        ingest = TelemetryIngest(store, lateness_horizon_us=config.ingest_lateness_us)
        report = replay(out["batches"], ingest=ingest, speed=args.speed)
        store.close()
    else:
        report = replay(out["batches"], url=args.target, speed=args.speed)

    print(json.dumps({
        "scenario": scenario.name,
        "seed": scenario.seed,
        "windows": scenario.n_windows,
        "manifests_out": manifests_out,
        "replay": report,
    }, indent=2))
    return EXIT_OK


def _cmd_detect(args: argparse.Namespace) -> int:
    from .api import AppState, run_cycles_once

    config = _load_cli_config(args)
    state = AppState(config)
    summary = run_cycles_once(state, int(time.time() * 1e6))
    state.store.close()
    print(json.dumps(summary.to_dict(), indent=2))
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    from .report import write_report
    from .results import CAT_RUN, ResultStore

    config = _load_cli_config(args)
    catalog = bundled_catalog()
    store = SegmentedStore(config.data_dir)
    results = ResultStore(store)
    from_us, to_us = args.from_us, args.to_us
    if from_us is None or to_us is None:
        low, high = store.min_ts(CAT_RUN), store.max_ts(CAT_RUN)
        if low is None:
            logger.error("no detection runs stored in %s", config.data_dir)
            return EXIT_VALIDATION
        from_us = from_us if from_us is not None else low
        to_us = to_us if to_us is not None else high + 1
    paths = write_report(results, catalog, from_us, to_us, args.out)
    store.close()
    print(json.dumps(paths, indent=2))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code not in (0, None) else EXIT_OK

    handlers = {
        "serve": _cmd_serve,
        "scan": _cmd_scan,
        "simulate": _cmd_simulate,
        "detect": _cmd_detect,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except (ManifestError, ScenarioError, CatalogError, ConfigError, ValueError) as exc:
        logger.error("%s", exc)
        return EXIT_VALIDATION
    except (StoreError, ReplayError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
