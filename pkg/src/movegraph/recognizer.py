"""Recognize grammar paths in a POI stream and pick the best segmentation.

Search runs one automaton per start POI. Two search modes exist:

``deterministic`` (default)
    The automaton reads the POIs after its start POI in stream order. A POI
    moves it only if there is an explicit edge from the current state to the
    POI's node *and* the edge's duration bounds admit the elapsed time; every
    other POI has no effect. One run per start POI, linear in the stream.

``exhaustive``
    Depth-first branching: from state ``A`` at ``t1`` every later POI that
    an admitted explicit edge could consume opens a branch. The number of
    branches grows combinatorially with the stream, so this mode is bounded
    by ``max_states``.

In both modes a run records the path when it first reaches an accepting
state and again at its last accepting state (the maximal extension), when
those differ. Ranking decides between them.
"""
from __future__ import annotations

import bisect
import enum
import logging
import time
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Optional, Sequence

from .errors import SearchCapExceeded
from .grammar import Automaton, MovementGraph
from .timeseries import Recording, Timestamp
from .triggers import PointOfInterest, poi_counts, run_triggers

logger = logging.getLogger(__name__)

DEFAULT_MAX_STATES = 1_000_000


class SearchMode(str, enum.Enum):
    DETERMINISTIC = "deterministic"
    EXHAUSTIVE = "exhaustive"


class RankBy(str, enum.Enum):
    COMBINED = "combined"
    DURATION = "duration"
    COUNT = "count"


class PathStep(NamedTuple):
    node: str
    t: Timestamp


@dataclass(frozen=True)
class PartialSolution:
    """One matched start-to-finish path."""

    steps: tuple[PathStep, ...]

    def __post_init__(self):
        steps = tuple(PathStep(*s) for s in self.steps)
        if not steps:
            raise ValueError("a partial solution needs at least one step")
        if any(b.t < a.t for a, b in zip(steps, steps[1:])):
            raise ValueError("partial solution steps must be non-decreasing in time")
        object.__setattr__(self, "steps", steps)

    @property
    def start_t(self) -> Timestamp:
        return self.steps[0].t

    @property
    def end_t(self) -> Timestamp:
        return self.steps[-1].t

    @property
    def duration_ms(self) -> int:
        return self.end_t - self.start_t

    @property
    def nodes(self) -> tuple[str, ...]:
        return tuple(s.node for s in self.steps)

    def sort_key(self):
        return (self.start_t, self.end_t, self.nodes, tuple(s.t for s in self.steps))

    def to_dict(self) -> dict:
        return {"steps": [{"node": s.node, "t_ms": s.t} for s in self.steps]}


class RankKey(NamedTuple):
    covered_ms: int
    part_count: int


@dataclass(frozen=True)
class TotalSolution:
    """Non-overlapping partial solutions in temporal order."""

    parts: tuple[PartialSolution, ...]

    def __post_init__(self):
        parts = tuple(sorted(self.parts, key=PartialSolution.sort_key))
        if not parts:
            raise ValueError("a total solution needs at least one part")
        for a, b in zip(parts, parts[1:]):
            if a.end_t > b.start_t:
                raise ValueError(f"overlapping parts [{a.start_t},{a.end_t}] and [{b.start_t},{b.end_t}]")
        object.__setattr__(self, "parts", parts)

    @property
    def covered_ms(self) -> int:
        return sum(p.duration_ms for p in self.parts)

    @property
    def part_count(self) -> int:
        return len(self.parts)

    @property
    def rank_key(self) -> RankKey:
        return RankKey(self.covered_ms, self.part_count)

    @property
    def nodes(self) -> tuple[str, ...]:
        return tuple(n for p in self.parts for n in p.nodes)

    def steps(self) -> Iterator[PathStep]:
        for p in self.parts:
            yield from p.steps

    def to_dict(self) -> dict:
        return {
            "parts": [p.to_dict() for p in self.parts],
            "covered_ms": self.covered_ms,
            "part_count": self.part_count,
        }


EMPTY_OPTIMAL = {"parts": [], "covered_ms": 0, "part_count": 0}


def is_valid_partial(automaton: Automaton, part: PartialSolution) -> bool:
    """Check a partial solution against the grammar without re-running the search."""
    steps = part.steps
    if steps[0].node not in automaton.start_states or steps[-1].node not in automaton.accepting:
        return False
    for a, b in zip(steps, steps[1:]):
        if b.t < a.t or not automaton.admits(a.node, b.node, b.t - a.t):
            return False
    return True


# -- search ---------------------------------------------------------------


class _Budget:
    __slots__ = ("left", "limit", "stage")

    def __init__(self, limit: int, stage: str):
        self.left = limit
        self.limit = limit
        self.stage = stage

    def spend(self, n: int = 1) -> None:
        self.left -= n
        if self.left < 0:
            raise SearchCapExceeded(self.stage, self.limit)


def _deterministic_runs(automaton: Automaton, pois: Sequence[PointOfInterest], budget: _Budget):
    n = len(pois)
    successors: dict[str, frozenset] = {}
    for (a, b) in automaton.transitions:
        successors[a] = successors.get(a, frozenset()) | {b}
    for i, start in enumerate(pois):
        if start.node not in automaton.start_states:
            continue
        state, entered = start.node, start.t
        path = [PathStep(start.node, start.t)]
        first = last = 1 if state in automaton.accepting else None
        outgoing = successors.get(state, ())
        for j in range(i + 1, n):
            if not outgoing:
                break
            budget.spend()
            q = pois[j]
            if q.node in outgoing and automaton.admits(state, q.node, q.t - entered):
                state, entered = q.node, q.t
                path.append(PathStep(q.node, q.t))
                outgoing = successors.get(state, ())
                if state in automaton.accepting:
                    last = len(path)
                    if first is None:
                        first = last
        if first is not None:
            yield tuple(path[:first])
            if last != first:
                yield tuple(path[:last])


def _exhaustive_runs(automaton: Automaton, pois: Sequence[PointOfInterest], budget: _Budget):
    by_node: dict[str, list[int]] = {}
    for j, p in enumerate(pois):
        by_node.setdefault(p.node, []).append(j)
    successors: dict[str, list[str]] = {}
    for (a, b) in automaton.transitions:
        successors.setdefault(a, []).append(b)

    def candidates(idx: int) -> list[int]:
        p = pois[idx]
        out = []
        for b in successors.get(p.node, ()):
            for j in by_node.get(b, ()):
                if j > idx and automaton.admits(p.node, b, pois[j].t - p.t):
                    out.append(j)
        out.sort()
        return out

    for i, start in enumerate(pois):
        if start.node not in automaton.start_states:
            continue
        # (index path, already accepted somewhere on this branch)
        stack = [((i,), False)]
        while stack:
            idxs, accepted = stack.pop()
            budget.spend()
            nxt = candidates(idxs[-1])
            here = pois[idxs[-1]].node in automaton.accepting
            if here and (not nxt or not accepted):
                yield tuple(PathStep(pois[k].node, pois[k].t) for k in idxs)
            for j in reversed(nxt):
                stack.append((idxs + (j,), accepted or here))


def find_partial_solutions(
    automaton: Automaton,
    pois: Sequence[PointOfInterest],
    mode: SearchMode | str = SearchMode.DETERMINISTIC,
    max_states: int = DEFAULT_MAX_STATES,
) -> list[PartialSolution]:
    """All partial solutions starting at any start-node POI, sorted and deduplicated."""
    mode = SearchMode(mode)
    budget = _Budget(max_states, "partial-solution search")
    runs = _deterministic_runs if mode is SearchMode.DETERMINISTIC else _exhaustive_runs
    found = {steps for steps in runs(automaton, pois, budget)}
    return sorted((PartialSolution(s) for s in found), key=PartialSolution.sort_key)


# -- combination and ranking ----------------------------------------------


def _prepare(parts: Iterable[PartialSolution]) -> list[PartialSolution]:
    return sorted(set(parts), key=PartialSolution.sort_key)


def iter_combinations(
    parts: Iterable[PartialSolution], max_states: int = DEFAULT_MAX_STATES
) -> Iterator[TotalSolution]:
    """Lazily yield every non-empty, pairwise non-overlapping subset of ``parts``.

    Intervals are closed; a part may start exactly when the previous one ends.
    """
    ps = _prepare(parts)
    starts = [p.start_t for p in ps]
    budget = _Budget(max_states, "combination")
    stack = [(i,) for i in reversed(range(len(ps)))]
    while stack:
        chosen = stack.pop()
        budget.spend()
        yield TotalSolution(tuple(ps[i] for i in chosen))
        last = chosen[-1]
        k = max(last + 1, bisect.bisect_left(starts, ps[last].end_t))
        for j in reversed(range(k, len(ps))):
            stack.append(chosen + (j,))


def combine(parts: Iterable[PartialSolution], max_states: int = DEFAULT_MAX_STATES) -> list[TotalSolution]:
    return list(iter_combinations(parts, max_states))


def _order_key(sol: TotalSolution, by: RankBy):
    # Smaller is better. Earliest first part, then node and time sequences,
    # make the choice total.
    tail = (sol.parts[0].start_t, sol.nodes, tuple(s.t for s in sol.steps()))
    if by is RankBy.COMBINED:
        return (-sol.covered_ms, -sol.part_count) + tail
    if by is RankBy.DURATION:
        return (-sol.covered_ms,) + tail
    return (-sol.part_count,) + tail


def rank(solutions: Iterable[TotalSolution], by: RankBy | str = RankBy.COMBINED) -> TotalSolution:
    """Best total solution: most covered time, then most parts.

    ``by="duration"`` and ``by="count"`` rank on one criterion only.
    """
    by = RankBy(by)
    solutions = list(solutions)
    if not solutions:
        raise ValueError("cannot rank an empty list of solutions")
    return min(solutions, key=lambda s: _order_key(s, by))


def best_solution(
    parts: Iterable[PartialSolution],
    by: RankBy | str = RankBy.COMBINED,
    max_states: int = DEFAULT_MAX_STATES,
) -> tuple[Optional[TotalSolution], int]:
    """Same winner as ``rank(combine(parts))`` via branch and bound.

    Returns the winner (``None`` without parts) and the number of candidate
    combinations visited. Branches are cut only when their best attainable
    key is strictly worse than the incumbent, so tie-breaking is unaffected.
    """
    by = RankBy(by)
    ps = _prepare(parts)
    n = len(ps)
    if not n:
        return None, 0
    starts = [p.start_t for p in ps]
    suffix = [0] * (n + 1)
    for i in reversed(range(n)):
        suffix[i] = suffix[i + 1] + ps[i].duration_ms
    budget = _Budget(max_states, "combination")
    best: Optional[TotalSolution] = None
    best_key = None
    best_cov = best_cnt = -1
    visited = 0

    def hopeless(cov_bound: int, cnt_bound: int) -> bool:
        if best is None:
            return False
        if by is RankBy.COUNT:
            return cnt_bound < best_cnt
        if cov_bound != best_cov or by is RankBy.DURATION:
            return cov_bound < best_cov
        return cnt_bound < best_cnt

    stack = [((i,), ps[i].duration_ms) for i in reversed(range(n))]
    while stack:
        chosen, cov = stack.pop()
        last = chosen[-1]
        k = max(last + 1, bisect.bisect_left(starts, ps[last].end_t))
        if hopeless(cov + suffix[k], len(chosen) + n - k):
            continue
        budget.spend()
        visited += 1
        sol = TotalSolution(tuple(ps[i] for i in chosen))
        key = _order_key(sol, by)
        if best is None or key < best_key:
            best, best_key = sol, key
            best_cov, best_cnt = sol.covered_ms, sol.part_count
        for j in reversed(range(k, n)):
            stack.append((chosen + (j,), cov + ps[j].duration_ms))
    return best, visited


# -- pipeline -------------------------------------------------------------


@dataclass
class Diagnostics:
    poi_counts: dict[str, int] = field(default_factory=dict)
    poi_total: int = 0
    partial_count: int = 0
    candidate_count: int = 0

    def to_dict(self) -> dict:
        return {
            "poi_counts": dict(self.poi_counts),
            "poi_total": self.poi_total,
            "partial_solution_count": self.partial_count,
            "candidate_count": self.candidate_count,
        }


@dataclass
class Timing:
    trigger_scan_ms: float = 0.0
    graph_search_ms: float = 0.0

    def to_dict(self) -> dict:
        return {"trigger_scan_ms": self.trigger_scan_ms, "graph_search_ms": self.graph_search_ms}


@dataclass
class RecognitionResult:
    pois: list[PointOfInterest]
    partial_solutions: list[PartialSolution]
    optimal: Optional[TotalSolution]
    diagnostics: Diagnostics
    timing: Timing = field(default_factory=Timing)

    @property
    def found(self) -> bool:
        return self.optimal is not None

    def to_dict(self) -> dict:
        """JSON-ready output. Timing is left out so reruns are byte-identical."""
        return {
            "pois": [{"node": p.node, "t_ms": p.t, "source": p.source} for p in self.pois],
            "partial_solutions": [p.to_dict() for p in self.partial_solutions],
            "optimal": self.optimal.to_dict() if self.optimal else dict(EMPTY_OPTIMAL),
            "diagnostics": self.diagnostics.to_dict(),
        }


def search(
    automaton: Automaton,
    pois: Sequence[PointOfInterest],
    mode: SearchMode | str = SearchMode.DETERMINISTIC,
    by: RankBy | str = RankBy.COMBINED,
    max_states: int = DEFAULT_MAX_STATES,
) -> tuple[list[PartialSolution], Optional[TotalSolution], int]:
    """The graph-search stage: POIs to partial solutions to the optimum."""
    parts = find_partial_solutions(automaton, pois, mode, max_states)
    optimal, visited = best_solution(parts, by, max_states)
    return parts, optimal, visited


def recognize(
    recording: Recording,
    graph: MovementGraph,
    mode: SearchMode | str = SearchMode.DETERMINISTIC,
    by: RankBy | str = RankBy.COMBINED,
    max_states: int = DEFAULT_MAX_STATES,
) -> RecognitionResult:
    """Triggers, search, combination and ranking in one call.

    Finding nothing is not an error: ``optimal`` is then ``None``.
    """
    t0 = time.perf_counter()
    pois = run_triggers(recording, graph.trigger_bindings())
    t1 = time.perf_counter()
    parts, optimal, visited = search(graph.compile(), pois, mode, by, max_states)
    t2 = time.perf_counter()
    diag = Diagnostics(poi_counts(pois), len(pois), len(parts), visited)
    timing = Timing((t1 - t0) * 1e3, (t2 - t1) * 1e3)
    logger.info("%d POIs, %d partial solutions, %d candidates", len(pois), len(parts), visited)
    return RecognitionResult(pois, parts, optimal, diag, timing)
