"""Command-line driver: ``simulate``, ``track``, ``evaluate`` and ``compare``.

Every failure is reported as a single ``ctxtrack: error: ...`` line on stderr
with a nonzero exit status.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .pipeline import (
    VARIANTS,
    compare,
    dumps_tracks,
    evaluate_sequence,
    format_table,
    load_config,
    read_tracks,
    run_tracker,
    summarize,
)
from .sim import RADAR, SCENARIOS, make_scenario, read_stream, read_truth, simulate_stream, write_stream, write_truth

log = logging.getLogger("ctxtrack")


class CliError(Exception):
    """A user-facing failure; the message is printed as one line."""


def parse_seeds(text: str) -> list[int]:
    """``"0-9"``, ``"1,4,7"`` or a mix such as ``"0-2,5"``."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, sep, hi = part.partition("-")
        try:
            if sep:
                a, b = int(lo), int(hi)
                if b < a:
                    raise ValueError
                seeds.extend(range(a, b + 1))
            else:
                seeds.append(int(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("empty seed list")
    return seeds


def stream_paths(out_dir: Path, scenario: str, seed: int) -> tuple[Path, Path]:
    stem = f"scenario-{scenario}-seed{seed}"
    return out_dir / f"{stem}.stream.jsonl", out_dir / f"{stem}.truth.jsonl"


def cmd_simulate(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    scenario = make_scenario(args.scenario, args.seed)
    stream_path, truth_path = stream_paths(out_dir, args.scenario, args.seed)
    write_stream(stream_path, simulate_stream(scenario), {"scenario": args.scenario, "seed": args.seed})
    write_truth(truth_path, scenario)
    print(stream_path)
    print(truth_path)
    return 0


def cmd_track(args) -> int:
    config = load_config(args.config)
    meta, scans = read_stream(_existing(args.stream, "stream"))
    outputs = run_tracker(scans, args.variant, config)
    text = dumps_tracks(outputs, {"variant": args.variant, "scenario": meta.get("scenario"),
                                  "seed": meta.get("seed")})
    _write(args.out, text)
    return 0


def cmd_evaluate(args) -> int:
    config = load_config(args.config)
    if not (len(args.tracks) == len(args.truth) == len(args.stream)):
        raise CliError("--tracks, --truth and --stream must be given the same number of times")
    parts = {}
    for tracks_path, truth_path, stream_path in zip(args.tracks, args.truth, args.stream):
        truth_meta, truth = read_truth(_existing(truth_path, "truth"))
        _, scans = read_stream(_existing(stream_path, "stream"))
        _, outputs = read_tracks(_existing(tracks_path, "tracks"))
        radar_times = [s.timestamp for s in scans if s.kind == RADAR]
        name = str(truth_meta.get("scenario", Path(truth_path).stem))
        if name in parts:
            name = f"{name}#{len(parts)}"
        try:
            parts[name] = evaluate_sequence(truth, outputs, radar_times, config)
        except ValueError as exc:
            raise CliError(f"{tracks_path}: {exc}") from None

    report = {name: summarize([m]) for name, m in parts.items()}
    if len(parts) > 1:
        report["combined"] = summarize(list(parts.values()))
    lines = [json.dumps({"column": col, **vals}, sort_keys=True) for col, vals in report.items()]
    if args.out:
        _write(args.out, "\n".join(lines) + "\n")
    print(_metrics_table(report))
    return 0


def _metrics_table(report: dict) -> str:
    head = f"{'Column':<12}{'HOTA (%)':>10}{'DetA':>8}{'AssA':>8}{'GOSPA':>9}{'loc':>9}{'missed':>9}{'false':>9}"
    rows = [head, "-" * len(head)]
    for col, m in report.items():
        rows.append(f"{col:<12}{m['hota']:>10.1f}{m['deta']:>8.1f}{m['assa']:>8.1f}{m['gospa_rms']:>9.2f}"
                    f"{m['gospa_localization']:>9.1f}{m['gospa_missed']:>9.1f}{m['gospa_false']:>9.1f}")
    return "\n".join(rows)


def cmd_compare(args) -> int:
    config = load_config(args.config)
    scenarios = args.scenario or list(SCENARIOS)
    table = compare(args.seeds, scenarios, VARIANTS, config, jobs=args.jobs, cache_dir=args.out)
    print(f"{len(args.seeds)} seeds; mean ± std over seeds")
    print(format_table(table, scenarios))
    return 0


def _existing(path: str, what: str) -> str:
    if not Path(path).is_file():
        raise CliError(f"{what} file not found: {path}")
    return path


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text, encoding="utf-8")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctxtrack",
        description="Context-aware radar/lidar tracking: simulate, track, evaluate, compare.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a scan stream and its ground truth")
    p.add_argument("--scenario", required=True, choices=SCENARIOS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("track", help="run one tracker variant over a scan stream")
    p.add_argument("stream", help="stream file written by 'simulate'")
    p.add_argument("--variant", required=True, choices=VARIANTS)
    p.add_argument("--out", default=None, help="tracks file (default: stdout)")
    p.add_argument("--config", default=None, help="YAML configuration overrides")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("evaluate", help="HOTA and GOSPA at radar timestamps")
    p.add_argument("--tracks", action="append", required=True, help="tracks file (repeat per scenario)")
    p.add_argument("--truth", action="append", required=True, help="truth file (repeat per scenario)")
    p.add_argument("--stream", action="append", required=True, help="stream file (repeat per scenario)")
    p.add_argument("--out", default=None, help="also write metrics as JSON lines")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="all five variants over several seeds")
    p.add_argument("--seeds", type=parse_seeds, default=parse_seeds("0-9"),
                   help="e.g. 0-9 or 1,3,5 (default: 0-9)")
    p.add_argument("--scenario", action="append", choices=SCENARIOS,
                   help="restrict to a scenario (repeatable; default: all)")
    p.add_argument("--jobs", type=int, default=1, help="parallel runs (default: 1)")
    p.add_argument("--out", default=None, help="cache directory; rerunning resumes from it")
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, OSError, ValueError, RuntimeError) as exc:
        print(f"ctxtrack: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
