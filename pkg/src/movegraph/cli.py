"""Command-line entry point: ``movegraph synth|detect|recognize``.

Exit codes: 0 success, 2 bad input or configuration, 3 search cap exceeded.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from ._io import atomic_write
from .errors import MovegraphError, SearchCapExceeded
from .grammar import grammar_to_dict, parse_grammar
from .metrics import range_report, segment_metrics, write_range_report_csv, write_segments_csv
from .recognizer import (
    DEFAULT_MAX_STATES,
    Diagnostics,
    RankBy,
    RecognitionResult,
    SearchMode,
    Timing,
    search,
)
from .synthdata import TrackPlan, biathlon_grammar, generate, inject_noise_events, load_plan, write_ground_truth
from .timeseries import load_recording, write_recording
from .triggers import poi_counts, run_triggers

logger = logging.getLogger("movegraph")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CAP = 3


class InputError(Exception):
    pass


def _require_file(path: Optional[str], what: str) -> Path:
    if path is None:
        raise InputError(f"--{what} is required")
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{what} file not found: {p}")
    return p


def _write_json(path: Path, payload) -> None:
    with atomic_write(path) as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_synth(args) -> int:
    plan = load_plan(_require_file(args.plan, "plan")) if args.plan else TrackPlan()
    if args.seed is not None:
        plan = replace(plan, noise_seed=args.seed)
    recording, truth = generate(plan, recording_id=args.recording_id)
    if args.warmup_crossings:
        recording = inject_noise_events(recording, plan, args.warmup_crossings)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_recording(recording, out / "recording.csv")
    write_ground_truth(truth, plan, out / "ground_truth.json")
    if args.write_grammar:
        _write_json(out / "grammar.json", grammar_to_dict(biathlon_grammar(plan)))
    logger.info("wrote %d samples to %s", recording.row_count(), out)
    return EXIT_OK


def _load_inputs(args):
    recording = load_recording(_require_file(args.recording, "recording"))
    graph = parse_grammar(_require_file(args.grammar, "grammar"))
    return recording, graph


def cmd_detect(args) -> int:
    recording, graph = _load_inputs(args)
    pois = run_triggers(recording, graph.trigger_bindings())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "pois.json", {
        "recording": recording.id,
        "poi_counts": poi_counts(pois),
        "pois": [{"node": p.node, "t_ms": p.t, "source": p.source} for p in pois],
    })
    with atomic_write(out / "poi.csv") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("node", "t_ms", "source"))
        w.writerows((p.node, p.t, p.source) for p in pois)
    logger.info("%d points of interest", len(pois))
    return EXIT_OK


def cmd_recognize(args) -> int:
    recording, graph = _load_inputs(args)
    automaton = graph.compile()
    t0 = time.perf_counter()
    pois = run_triggers(recording, graph.trigger_bindings())
    t1 = time.perf_counter()
    try:
        parts, optimal, visited = search(automaton, pois, args.mode, args.rank_by, args.max_search_states)
    except SearchCapExceeded as exc:
        print(
            f"error: {exc}; {len(pois)} points of interest {poi_counts(pois)}; "
            f"raise --max-search-states or tighten the grammar",
            file=sys.stderr,
        )
        return EXIT_CAP
    t2 = time.perf_counter()
    result = RecognitionResult(
        pois, parts, optimal,
        Diagnostics(poi_counts(pois), len(pois), len(parts), visited),
        Timing((t1 - t0) * 1e3, (t2 - t1) * 1e3),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "solution.json", {"recording": recording.id, **result.to_dict()})
    segments = segment_metrics(optimal, recording, args.lap_node) if optimal else []
    bouts = range_report(optimal, recording, args.lap_node) if optimal else []
    write_segments_csv(segments, out / "segments.csv")
    write_range_report_csv(bouts, out / "range_report.csv", recording.id)
    _write_json(out / "timing.json", result.timing.to_dict())
    if optimal is None:
        logger.info("no complete sequence found")
    else:
        logger.info("optimal: %d part(s), %.1f s covered", optimal.part_count, optimal.covered_ms / 1000)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="movegraph",
        description="Recognize movement sequences in multi-sensor recordings.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    # Also accepted after the subcommand; SUPPRESS keeps the top-level count when absent.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic biathlon recording with ground truth")
    p.add_argument("--plan", help="track plan JSON (default: built-in six-lap plan)")
    p.add_argument("-o", "--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the plan's noise seed")
    p.add_argument("--warmup-crossings", type=int, default=0, help="start-gate crossings before the race")
    p.add_argument("--recording-id", default="synthetic")
    p.add_argument("--write-grammar", action="store_true", help="also write the matching grammar.json")
    p.set_defaults(func=cmd_synth)

    for name, func, help_ in (
        ("detect", cmd_detect, "run the triggers and write the points of interest"),
        ("recognize", cmd_recognize, "full pipeline: triggers, search, ranking and metrics"),
    ):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--recording", required=True, help="recording CSV")
        p.add_argument("--grammar", required=True, help="grammar JSON")
        p.add_argument("-o", "--out", required=True, help="output directory")
        p.set_defaults(func=func)
        if name == "recognize":
            p.add_argument("--max-search-states", type=int, default=DEFAULT_MAX_STATES,
                           help=f"exit 3 once the search explores more states (default: {DEFAULT_MAX_STATES})")
            p.add_argument("--mode", choices=[m.value for m in SearchMode], default=SearchMode.DETERMINISTIC.value,
                           help="deterministic automaton runs (default) or full branching")
            p.add_argument("--rank-by", choices=[r.value for r in RankBy], default=RankBy.COMBINED.value,
                           help="coverage then part count (default), coverage only, or part count only")
            p.add_argument("--lap-node", default="RL", help="node that closes a lap (default: RL)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "max_search_states", 1) < 1:
        print("error: --max-search-states must be positive", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except (InputError, MovegraphError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
