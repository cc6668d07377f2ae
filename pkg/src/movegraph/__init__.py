"""Recognize movement sequences in multi-sensor time series.

Triggers turn raw channels into points of interest, a movement grammar
compiled to an automaton matches them, and the best non-overlapping set of
matches is selected.
"""
from .errors import (
    GeometryError,
    GrammarError,
    MovegraphError,
    PlanError,
    RecordingFormatError,
    SearchCapExceeded,
    TriggerError,
)
from .geo import PlanarPoint, SegmentPair, haversine_distance, project_local, segment_intersection
from .grammar import Automaton, EdgeSpec, MovementGraph, NodeSpec, build_graph, compile_automaton, parse_grammar
from .metrics import RangeReport, SegmentMetrics, range_report, segment_metrics
from .recognizer import (
    PartialSolution,
    RankBy,
    RecognitionResult,
    SearchMode,
    TotalSolution,
    best_solution,
    combine,
    find_partial_solutions,
    rank,
    recognize,
)
from .timeseries import Channel, ChannelKind, GeoPoint, Recording, load_recording, write_recording
from .triggers import (
    EdgeTriggerSpec,
    GateTriggerSpec,
    PeakTriggerSpec,
    PointOfInterest,
    run_triggers,
)

__all__ = [
    "Automaton",
    "best_solution",
    "build_graph",
    "Channel",
    "ChannelKind",
    "combine",
    "compile_automaton",
    "EdgeSpec",
    "EdgeTriggerSpec",
    "find_partial_solutions",
    "GateTriggerSpec",
    "GeometryError",
    "GeoPoint",
    "GrammarError",
    "haversine_distance",
    "load_recording",
    "MovegraphError",
    "MovementGraph",
    "NodeSpec",
    "parse_grammar",
    "PartialSolution",
    "PeakTriggerSpec",
    "PlanarPoint",
    "PlanError",
    "PointOfInterest",
    "project_local",
    "range_report",
    "RangeReport",
    "rank",
    "RankBy",
    "RecognitionResult",
    "recognize",
    "Recording",
    "RecordingFormatError",
    "run_triggers",
    "SearchCapExceeded",
    "SearchMode",
    "segment_intersection",
    "segment_metrics",
    "SegmentMetrics",
    "SegmentPair",
    "TotalSolution",
    "TriggerError",
    "write_recording",
]

__version__ = "0.1.0"
