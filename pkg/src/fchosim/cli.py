"""Command-line front end.

    fchosim run      single simulation -> kpi.json, kpi.csv, events.csv, config-echo.json
    fchosim sweep    mode x scheme x speed x seed grid -> comparison.csv, means.csv
    fchosim topology dump
    fchosim report   rebuild kpi.json from an events.csv

Exit codes: 0 ok, 2 usage or configuration error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import engine
from .config import ConfigError, HoMode, SimConfig, UeScheme, load_config
from .deployment import build_topology
from .kpi import KpiReport, ReportError, RunMeta, build_report, reports_csv_text
from .signaling import LedgerConsistencyError, LedgerFormatError, events_csv_text, read_events_csv

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INTERNAL = 3

log = logging.getLogger("fchosim")


class UsageError(Exception):
    pass


def _parse_set(items: Sequence[str]) -> dict[str, str]:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects KEY=VAL, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _csv_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def build_config(args: argparse.Namespace) -> SimConfig:
    overrides: dict[str, object] = {}
    if getattr(args, "mode", None):
        overrides["handover.mode"] = args.mode
    if getattr(args, "scheme", None):
        overrides["ue.scheme"] = args.scheme
    if getattr(args, "speed", None) is not None:
        overrides["ue.speed_kmh"] = args.speed
    if getattr(args, "duration", None) is not None:
        overrides["run.duration_s"] = args.duration
    if getattr(args, "seed", None) is not None:
        overrides["run.seed"] = args.seed
    # explicit --set wins over the shorthand flags
    overrides.update(_parse_set(args.set or []))
    return load_config(args.config, overrides)


def _prepare_out(out: Path, names: Sequence[str], force: bool) -> None:
    out.mkdir(parents=True, exist_ok=True)
    existing = [n for n in names if (out / n).exists()]
    if existing and not force:
        raise UsageError(f"refusing to overwrite {', '.join(existing)} in {out} (use --force)")


def _echo(cfg: SimConfig, **extra) -> str:
    body = {"config_hash": cfg.config_hash(), "seed": cfg.run.seed, **extra, "config": cfg.to_dict()}
    return json.dumps(body, indent=2, sort_keys=True) + "\n"


# -- subcommands ----------------------------------------------------------------

RUN_FILES = ("kpi.json", "kpi.csv", "events.csv", "config-echo.json")


def cmd_run(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    out = Path(args.out)
    _prepare_out(out, RUN_FILES, args.force)
    result = engine.run(cfg)
    (out / "events.csv").write_text(events_csv_text(result.events, result.meta.to_header()))
    (out / "kpi.json").write_text(result.report.to_json())
    (out / "kpi.csv").write_text(reports_csv_text([result.report]))
    (out / "config-echo.json").write_text(_echo(cfg))
    r = result.report
    print(
        f"{r.mode}/{r.scheme} {r.speed_kmh:g} km/h seed {r.seed}: "
        f"attempts {r.ho_attempts}, failures {r.mobility_failure_pct:.2f}%, "
        f"fast HO {r.fast_handover_pct:.2f}%, outage {r.outage_pct:.3f}%, "
        f"CHO events {r.total_cho_events_per_ue_min:.2f}/UE/min -> {out}"
    )
    return EXIT_OK


def _means_csv(rows: list[dict], base_hash: str, seeds: Sequence[int]) -> str:
    buf = io.StringIO()
    fields = ["base_config_hash", "seeds"] + list(rows[0]) if rows else ["base_config_hash", "seeds"]
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({"base_config_hash": base_hash, "seeds": ";".join(map(str, seeds)), **row})
    return buf.getvalue()


SWEEP_FILES = ("comparison.csv", "means.csv", "config-echo.json")


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    try:
        modes = [HoMode(m) for m in _csv_list(args.modes)]
        schemes = [UeScheme(s) for s in _csv_list(args.schemes)]
        speeds = [float(v) for v in _csv_list(args.speeds)]
        seeds = [int(v) for v in _csv_list(args.seeds)]
    except ValueError as e:
        raise ConfigError(f"bad sweep axis: {e}") from None
    if not (modes and schemes and speeds and seeds):
        raise ConfigError("every sweep axis needs at least one value")
    out = Path(args.out)
    _prepare_out(out, SWEEP_FILES, args.force)
    try:
        reports = engine.sweep(cfg, modes, schemes, speeds, seeds, workers=args.workers)
    except engine.SweepError as e:
        if e.partial:
            (out / "comparison.partial.csv").write_text(reports_csv_text(e.partial))
        raise
    (out / "comparison.csv").write_text(reports_csv_text(reports))
    (out / "means.csv").write_text(_means_csv(engine.aggregate(reports), cfg.config_hash(), seeds))
    (out / "config-echo.json").write_text(
        _echo(cfg, sweep={"modes": [m.value for m in modes], "schemes": [s.value for s in schemes],
                          "speeds": speeds, "seeds": seeds})
    )
    print(f"{len(reports)} runs -> {out}")
    return EXIT_OK


def cmd_topology(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    topo = build_topology(cfg)
    body = {"config_hash": cfg.config_hash(), "seed": cfg.run.seed, "topology": topo.to_dict()}
    text = json.dumps(body, indent=2) + "\n"
    if args.out in (None, "-"):
        sys.stdout.write(text)
        return EXIT_OK
    path = Path(args.out)
    if path.exists() and not args.force:
        raise UsageError(f"refusing to overwrite {path} (use --force)")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    src = Path(args.events)
    if not src.is_file():
        raise UsageError(f"no such events file: {src}")
    try:
        events, header = read_events_csv(src)
        meta = RunMeta.from_header(header)
        if args.mode:
            meta = RunMeta(**{**meta.__dict__, "mode": args.mode})
        report: KpiReport = build_report(events, meta)
    except (LedgerFormatError, ReportError) as e:
        print(f"error: {src}: {e}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out) if args.out else src.parent
    _prepare_out(out, ("kpi.json",), args.force)
    (out / "kpi.json").write_text(report.to_json())
    return EXIT_OK


# -- parser -----------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="JSON config (a run's config-echo.json also works)")
    p.add_argument("--mode", choices=[m.value for m in HoMode])
    p.add_argument("--scheme", choices=[s.value for s in UeScheme])
    p.add_argument("--speed", type=float, metavar="KMH")
    p.add_argument("--duration", type=float, metavar="S", help="simulated seconds")
    p.add_argument("--seed", type=int, metavar="N")
    p.add_argument("--set", action="append", metavar="KEY=VAL", help="dotted override, repeatable")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fchosim", description="CHO / FCHO mobility simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one simulation")
    _common(p)
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a mode x scheme x speed x seed grid")
    _common(p)
    p.add_argument("--modes", default="cho,fcho")
    p.add_argument("--schemes", default="iso,mpue-a3,mpue-a1")
    p.add_argument("--speeds", default="60,120")
    p.add_argument("--seeds", default="1,2,3,4,5")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("topology", help="inspect the deployment")
    p.add_argument("action", choices=["dump"])
    _common(p)
    p.add_argument("--out", metavar="FILE", help="default: stdout")
    p.set_defaults(func=cmd_topology)

    p = sub.add_parser("report", help="rebuild kpi.json from events.csv")
    p.add_argument("events", metavar="EVENTS_CSV")
    p.add_argument("--mode", choices=[m.value for m in HoMode], help="relabel the run mode")
    p.add_argument("--out", metavar="DIR", help="default: directory of EVENTS_CSV")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ReportError, LedgerConsistencyError, engine.SweepError) as e:
        print(f"internal invariant violated: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
