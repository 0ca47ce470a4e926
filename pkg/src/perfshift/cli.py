"""Command-line entry point.

Subcommands::

    perfshift stabilize   --input cohort.csv [--events events.csv] --output-dir out/
    perfshift detect      --input pitches.csv --metric whiff --output-dir out/
    perfshift simulate    --grid grid.json --reps 2000 --output-dir out/
    perfshift groundtruth --input pitches.csv --roster roster.csv --ladder 0.5,1,2,5 --output-dir out/

Detection flags mirror :class:`~perfshift.detect.DetectionConfig` fields. A
JSON file given by ``--config`` (or the ``PERFSHIFT_CONFIG`` environment
variable) supplies defaults; flags override it.

Exit status is 0 on success, 1 on invalid configuration or data, 2 on I/O
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional

from perfshift import __version__
from perfshift.detect import (
    CSV_COLUMNS,
    DetectionConfig,
    cohort_summary,
    detect_cohort,
    results_to_json,
    results_to_rows,
)
from perfshift.errors import ConfigError, PerfShiftError
from perfshift.ingest import (
    GROUND_TRUTH_COLUMNS,
    METRICS,
    build_cohort,
    evaluate_ground_truth,
    ground_truth_rows,
    load_pitch_csv,
)
from perfshift.series import new_metric_series, rolling_mean
from perfshift.simgen import PlantedSpec, estimate_rates
from perfshift.stabilization import (
    TABLE_COLUMNS,
    cohort_stabilization,
    confidence_sequence,
    confidence_sequence_rows,
)

log = logging.getLogger("perfshift")

CONFIG_ENV = "PERFSHIFT_CONFIG"
MANIFEST = "manifest.json"

# CLI dest -> DetectionConfig field
_CONFIG_FLAGS = {
    "alpha": "alpha",
    "delta": "delta",
    "test": "test",
    "min_segment": "min_segment",
    "min_side": "min_side",
    "n_perm": "n_perm",
    "seed": "seed",
    "use_split": "use_split",
    "correction": "correction",
    "exact_cutoff": "exact_cutoff",
    "perm_alternative": "perm_alternative",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_detection_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("detection")
    g.add_argument("--alpha", type=float)
    g.add_argument("--delta", type=float, help="shift in metric units")
    g.add_argument("--test", choices=["auto", "fisher_exact", "permutation_shift"])
    g.add_argument("--min-segment", type=int, dest="min_segment")
    g.add_argument("--min-side", type=int, dest="min_side")
    g.add_argument("--n-perm", type=int, dest="n_perm")
    g.add_argument("--seed", type=int)
    g.add_argument("--no-split", action="store_false", dest="use_split", default=None,
                   help="scan and test on the same observations")
    g.add_argument("--correction", choices=["none", "bonferroni"])
    g.add_argument("--exact-cutoff", type=int, dest="exact_cutoff")
    g.add_argument("--perm-alternative", choices=["two-sided", "observed"], dest="perm_alternative")
    g.add_argument("--jobs", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="perfshift", description="Stabilization benchmarks and split-sample changepoint detection for player metrics.")
    parser.add_argument("--config", help=f"JSON defaults (env {CONFIG_ENV})")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("stabilize", help="stabilization table and confidence sequences")
    p.add_argument("--input", required=True,
                   help="CSV with columns metric, player_id, successes, trials")
    p.add_argument("--events", help="CSV with columns entity_id, metric, value in time order")
    p.add_argument("--min-trials", type=int, default=0, dest="min_trials",
                   help="keep players with more than this many trials")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--bounds", type=float, nargs=2, default=(0.0, 1.0), metavar=("A", "B"))
    p.add_argument("--union-bound", action="store_true", dest="union_bound")
    p.add_argument("--output-dir", required=True, dest="output_dir")

    p = sub.add_parser("detect", help="changepoints in per-entity pitch metrics")
    p.add_argument("--input", required=True, help="pitch-level CSV")
    p.add_argument("--metric", required=True, choices=METRICS)
    p.add_argument("--pitch-type", default="FF", dest="pitch_type")
    p.add_argument("--entity", action="append", dest="entities", help="restrict to these ids")
    p.add_argument("--min-count", type=int, default=100, dest="min_count")
    p.add_argument("--window", type=int, default=50, help="rolling-mean window")
    p.add_argument("--start", type=date.fromisoformat)
    p.add_argument("--end", type=date.fromisoformat)
    p.add_argument("--schema", help="JSON file mapping field names to CSV columns")
    p.add_argument("--output-dir", required=True, dest="output_dir")
    _add_detection_flags(p)

    p = sub.add_parser("simulate", help="Monte Carlo flag rates for a grid of planted specs")
    p.add_argument("--grid", required=True, help="JSON list of {name, spec, config}")
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--output-dir", required=True, dest="output_dir")
    _add_detection_flags(p)

    p = sub.add_parser("groundtruth", help="shift-ladder evaluation on a pitcher roster")
    p.add_argument("--input", required=True, help="pitch-level CSV")
    p.add_argument("--roster", required=True, help="CSV with columns pitcher_id, primary_fastball")
    p.add_argument("--ladder", required=True, help="comma-separated shifts, e.g. 0.5,1,2,5")
    p.add_argument("--start", type=date.fromisoformat)
    p.add_argument("--end", type=date.fromisoformat)
    p.add_argument("--schema", help="JSON file mapping field names to CSV columns")
    p.add_argument("--output-dir", required=True, dest="output_dir")
    _add_detection_flags(p)
    return parser


def _file_defaults(path: Optional[str]) -> dict:
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return data


def detection_config(args, defaults: dict) -> DetectionConfig:
    # unknown keys in the file are rejected by from_dict, so typos surface
    merged = dict(defaults)
    for dest, name in _CONFIG_FLAGS.items():
        value = getattr(args, dest, None)
        if value is not None:
            merged[name] = value
    try:
        return DetectionConfig.from_dict(merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_manifest(out: Path, command: str, config, inputs: Dict[str, str], outputs: List[str],
                    started: str) -> None:
    manifest = {
        "command": command,
        "config": config,
        "inputs": inputs,
        "output_dir": str(out),
        "outputs": outputs,
        "seed": (config or {}).get("seed") if isinstance(config, dict) else None,
        "version": __version__,
        "started": started,
        "finished": _now(),
    }
    with open(out / MANIFEST, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _read_schema(path: Optional[str]) -> Optional[dict]:
    if not path:
        return None
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def cmd_stabilize(args, defaults, started) -> int:
    if not 0 < args.alpha < 1:
        raise ConfigError("--alpha must lie in (0, 1)")
    if not args.bounds[0] < args.bounds[1]:
        raise ConfigError("--bounds must satisfy A < B")
    out = Path(args.output_dir)
    per_metric: Dict[str, list] = {}
    with open(args.input, newline="", encoding="utf-8") as f:
        for rec in csv.DictReader(f):
            try:
                successes, trials = int(rec["successes"]), int(rec["trials"])
            except (KeyError, ValueError) as exc:
                raise PerfShiftError(f"{args.input}: bad cohort row {rec}: {exc}") from None
            if trials > args.min_trials:
                per_metric.setdefault(rec["metric"], []).append((successes, trials))

    reports = []
    for metric, counts in per_metric.items():
        try:
            reports.append(cohort_stabilization(counts, metric))
        except PerfShiftError as exc:
            raise type(exc)(f"metric {metric!r}: {exc}") from None

    sequences = []
    if args.events:
        streams: Dict[tuple, list] = {}
        with open(args.events, newline="", encoding="utf-8") as f:
            for rec in csv.DictReader(f):
                streams.setdefault((rec["entity_id"], rec["metric"]), []).append(float(rec["value"]))
        for (entity, metric), values in streams.items():
            s = new_metric_series(values, "continuous", entity_id=entity, label=metric)
            cis = confidence_sequence(s, args.alpha, tuple(args.bounds), args.union_bound)
            sequences += [[metric] + row for row in confidence_sequence_rows(entity, cis)]

    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "stabilization.csv", TABLE_COLUMNS, [r.as_row() for r in reports])
    outputs = ["stabilization.csv"]
    if args.events:
        _write_csv(out / "confidence_sequences.csv",
                   ["metric", "entity_id", "t", "center", "lower", "upper"], sequences)
        outputs.append("confidence_sequences.csv")
    params = {"alpha": args.alpha, "bounds": list(args.bounds), "min_trials": args.min_trials,
              "union_bound": args.union_bound}
    inputs = {"input": args.input, **({"events": args.events} if args.events else {})}
    _write_manifest(out, "stabilize", params, inputs, outputs, started)
    for r in reports:
        log.info("%s: n_stable=%d (p_hat=%.3f, sigma_latent=%.4f)", r.metric, r.n_stable,
                 r.p_hat, r.sigma_latent)
    return 0


def _rolling_rows(series, result, window: int) -> list:
    if len(series) < window:
        return []
    means = rolling_mean(series, window)
    flagged = set(result.locations)
    idx = series.original_index[window - 1:]
    stamps = series.timestamps[window - 1:] if series.timestamps else [""] * len(idx)
    return [[series.entity_id, int(i), st, float(m), int(int(i) in flagged)]
            for i, st, m in zip(idx, stamps, means)]


def cmd_detect(args, defaults, started) -> int:
    cfg = detection_config(args, defaults)
    kind = "continuous" if args.metric == "velocity" else "binary"
    cfg.resolve_test(kind)
    cfg.resolve_min_side(kind)
    if args.window < 1 or args.jobs < 1 or args.min_count < 1:
        raise ConfigError("--window, --jobs and --min-count must be positive")

    events = load_pitch_csv(args.input, _read_schema(args.schema), start=args.start, end=args.end)
    cohort = build_cohort(events, args.metric, args.min_count, args.pitch_type, args.entities)
    results = detect_cohort(cohort, cfg, args.jobs)

    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ordered = [results[s.entity_id] for s in cohort]
    text = results_to_json(ordered, manifest=MANIFEST, summary=cohort_summary(results))
    (out / "results.json").write_text(text + "\n", encoding="utf-8")
    _write_csv(out / "changepoints.csv", CSV_COLUMNS, results_to_rows(ordered))
    rolling = []
    for s in cohort:
        rolling += _rolling_rows(s, results[s.entity_id], args.window)
    _write_csv(out / "rolling_mean.csv",
               ["entity_id", "index", "timestamp", "rolling_mean", "changepoint"], rolling)
    _write_manifest(out, "detect", {**cfg.to_dict(), "metric": args.metric,
                                    "pitch_type": args.pitch_type, "window": args.window,
                                    "min_count": args.min_count},
                    {"input": args.input}, ["results.json", "changepoints.csv", "rolling_mean.csv"],
                    started)
    summary = cohort_summary(results)
    log.info("%d of %d entities flagged", summary["flagged_players"], summary["players"])
    return 0


def _grid_cases(path: str) -> list:
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    cases = data["cases"] if isinstance(data, dict) else data
    if not isinstance(cases, list) or not cases:
        raise ConfigError(f"{path}: grid must be a nonempty list of cases")
    return cases


RATE_COLUMNS = ("name", "kind", "n", "planted", "use_split", "delta", "alpha", "reps",
                "flag_rate", "mc_stderr", "localization_mae")


def cmd_simulate(args, defaults, started) -> int:
    base = detection_config(args, defaults)
    if args.reps < 1 or args.jobs < 1:
        raise ConfigError("--reps and --jobs must be positive")
    cases = _grid_cases(args.grid)
    prepared = []
    for i, case in enumerate(cases):
        try:
            spec = PlantedSpec.from_dict(case["spec"])
            cfg = DetectionConfig.from_dict({**base.to_dict(), **case.get("config", {})})
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"grid case {i}: {exc}") from None
        prepared.append((case.get("name", f"case{i}"), spec, cfg))

    rows = []
    for name, spec, cfg in prepared:
        est = estimate_rates(spec, cfg, args.reps, seed=cfg.seed, jobs=args.jobs)
        rows.append([name, spec.kind, spec.n, " ".join(map(str, spec.changepoints)), cfg.use_split,
                     cfg.delta, cfg.alpha, est.reps, est.flag_rate, est.mc_stderr,
                     "" if est.localization_mae is None else est.localization_mae])
        log.info("%s: flag_rate=%.4f (se %.4f)", name, est.flag_rate, est.mc_stderr)

    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "rates.csv", RATE_COLUMNS, rows)
    _write_manifest(out, "simulate", {**base.to_dict(), "reps": args.reps},
                    {"grid": args.grid}, ["rates.csv"], started)
    return 0


def cmd_groundtruth(args, defaults, started) -> int:
    cfg = detection_config(args, defaults)
    cfg.resolve_test("continuous")
    try:
        ladder = [float(x) for x in args.ladder.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad --ladder {args.ladder!r}") from None
    if not ladder or min(ladder) < 0:
        raise ConfigError("--ladder needs nonnegative shifts")

    with open(args.roster, newline="", encoding="utf-8") as f:
        roster = [(r["pitcher_id"].strip(), r["primary_fastball"].strip()) for r in csv.DictReader(f)]
    events = load_pitch_csv(args.input, _read_schema(args.schema), start=args.start, end=args.end)
    rows = evaluate_ground_truth(events, roster, cfg, ladder)

    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "groundtruth.csv", GROUND_TRUTH_COLUMNS, ground_truth_rows(rows))
    _write_manifest(out, "groundtruth", {**cfg.to_dict(), "ladder": ladder},
                    {"input": args.input, "roster": args.roster}, ["groundtruth.csv"], started)
    n = sum(r.flagged for r in rows)
    log.info("flagged %d of %d pitchers", n, len(rows))
    return 0


COMMANDS = {
    "stabilize": cmd_stabilize,
    "detect": cmd_detect,
    "simulate": cmd_simulate,
    "groundtruth": cmd_groundtruth,
}


def run(argv: Optional[List[str]] = None) -> int:
    """Parse ``argv`` and execute one subcommand; returns the exit status."""
    started = _now()
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"perfshift: error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        defaults = _file_defaults(args.config)
        return COMMANDS[args.command](args, defaults, started)
    except PerfShiftError as exc:
        print(f"perfshift: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (KeyError, json.JSONDecodeError) as exc:
        print(f"perfshift: error: malformed input: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"perfshift: I/O error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
