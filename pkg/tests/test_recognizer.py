import random

import numpy as np
import pytest

from movegraph.errors import SearchCapExceeded
from movegraph.grammar import NodeSpec, build_graph
from movegraph.recognizer import (
    PartialSolution,
    TotalSolution,
    best_solution,
    combine,
    find_partial_solutions,
    is_valid_partial,
    rank,
    recognize,
    search,
)
from movegraph.synthdata import TrackPlan, biathlon_grammar, generate
from movegraph.timeseries import Channel, ChannelKind, Recording
from movegraph.triggers import EdgeTriggerSpec

from oracles import (
    argmax_solution,
    deterministic_partials,
    exhaustive_partials,
    graph,
    pois_of,
    power_set_combinations,
    random_instance,
)

S = 1000
BIATHLON = graph(
    ["S", "UE", "UL", "RE", "SS", "SF", "RL", "P", "F"],
    [("S", "UE", None, 60 * S), ("UE", "UL"), ("UL", "RE"), ("UL", "F"), ("RE", "RL"), ("RE", "SS"),
     ("SS", "SF"), ("SF", "RL"), ("RL", "P"), ("P", "P"), ("P", "UE")],
    {"S"}, {"F"},
)
MODES = ["deterministic", "exhaustive"]


def part(*steps):
    return PartialSolution(tuple(steps))


def span(a, b, name="X"):
    return part((name, a), (name + "'", b))


def steps_of(parts):
    return {p.steps for p in parts}


class TestFindPartialSolutions:
    @pytest.mark.parametrize("mode", MODES)
    def test_simple_race(self, mode):
        pois = pois_of(("S", 0), ("UE", 10 * S), ("UL", 60 * S), ("F", 70 * S))
        parts = find_partial_solutions(BIATHLON.compile(), pois, mode)
        assert len(parts) == 1 and parts[0].nodes == ("S", "UE", "UL", "F")

    @pytest.mark.parametrize("mode", MODES)
    def test_no_start_poi(self, mode):
        pois = pois_of(("UE", 10 * S), ("UL", 60 * S))
        assert find_partial_solutions(BIATHLON.compile(), pois, mode) == []

    @pytest.mark.parametrize("mode", MODES)
    def test_empty_stream(self, mode):
        assert find_partial_solutions(BIATHLON.compile(), [], mode) == []

    @pytest.mark.parametrize("mode", MODES)
    def test_two_starts_inside_window(self, mode):
        pois = pois_of(("S", 0), ("S", 30 * S), ("UE", 50 * S), ("UL", 100 * S), ("F", 110 * S))
        parts = find_partial_solutions(BIATHLON.compile(), pois, mode)
        assert {p.start_t for p in parts} == {0, 30 * S}
        expected = (exhaustive_partials if mode == "exhaustive" else deterministic_partials)(BIATHLON, pois)
        assert steps_of(parts) == expected

    @pytest.mark.parametrize("mode", MODES)
    def test_stale_start_is_dropped(self, mode):
        pois = pois_of(("S", 0), ("UE", 300 * S), ("UL", 350 * S), ("F", 360 * S))
        assert find_partial_solutions(BIATHLON.compile(), pois, mode) == []

    @pytest.mark.parametrize("mode", MODES)
    def test_only_last_start_is_valid(self, mode):
        pois = pois_of(("S", 0), ("S", 100 * S), ("S", 250 * S), ("UE", 300 * S), ("UL", 350 * S), ("F", 360 * S))
        parts = find_partial_solutions(BIATHLON.compile(), pois, mode)
        assert [p.start_t for p in parts] == [250 * S]

    def test_penalty_self_loop_consumes(self):
        pois = pois_of(("S", 0), ("UE", 10 * S), ("UL", 20 * S), ("RE", 30 * S), ("RL", 40 * S), ("P", 50 * S),
                       ("P", 60 * S), ("P", 70 * S), ("UE", 80 * S), ("UL", 90 * S), ("F", 100 * S))
        parts = find_partial_solutions(BIATHLON.compile(), pois)
        assert [p.nodes for p in parts] == [("S", "UE", "UL", "RE", "RL", "P", "P", "P", "UE", "UL", "F")]

    def test_deterministic_run_ignores_lap_skip(self):
        # The deterministic run takes RE after UL and never sees F from UL.
        pois = pois_of(("S", 0), ("UE", 10 * S), ("UL", 20 * S), ("RE", 30 * S), ("RL", 40 * S), ("P", 50 * S),
                       ("UE", 60 * S), ("UL", 70 * S), ("F", 80 * S))
        det = find_partial_solutions(BIATHLON.compile(), pois, "deterministic")
        exh = find_partial_solutions(BIATHLON.compile(), pois, "exhaustive")
        assert [p.nodes for p in det] == [("S", "UE", "UL", "RE", "RL", "P", "UE", "UL", "F")]
        assert ("S", "UE", "UL", "F") in {p.nodes for p in exh}

    def test_first_and_last_acceptance(self):
        g = graph("AB", [("A", "B"), ("B", "B")], {"A"}, {"B"})
        pois = pois_of(("A", 0), ("B", 5), ("B", 9))
        parts = find_partial_solutions(g.compile(), pois)
        assert {p.nodes for p in parts} == {("A", "B"), ("A", "B", "B")}

    def test_single_node_grammar(self):
        g = graph("N", [], {"N"}, {"N"})
        parts = find_partial_solutions(g.compile(), pois_of(("N", 3), ("N", 7)))
        assert [p.steps for p in parts] == [(("N", 3),), (("N", 7),)]

    def test_min_duration(self):
        g = graph("AB", [("A", "B", 10, None)], {"A"}, {"B"})
        parts = find_partial_solutions(g.compile(), pois_of(("A", 0), ("B", 5), ("B", 12)))
        assert [p.steps for p in parts] == [(("A", 0), ("B", 12))]

    @pytest.mark.parametrize("mode", MODES)
    def test_random_instances_match_brute_force(self, mode):
        rng = random.Random(1234 if mode == "deterministic" else 4321)
        oracle = deterministic_partials if mode == "deterministic" else exhaustive_partials
        for _ in range(150):
            g, pois = random_instance(rng)
            a = g.compile()
            parts = find_partial_solutions(a, pois, mode)
            assert steps_of(parts) == oracle(g, pois)
            assert len(parts) == len(steps_of(parts))
            assert all(is_valid_partial(a, p) for p in parts)

    def test_cap(self):
        pois = pois_of(*[("S", k) for k in range(0, 10)], *[("UE", 20 + k) for k in range(20)])
        with pytest.raises(SearchCapExceeded) as err:
            find_partial_solutions(BIATHLON.compile(), pois, max_states=50)
        assert err.value.limit == 50


class TestCombine:
    def test_disjoint_pair(self):
        a, b = span(0, 10), span(20, 30)
        assert {frozenset(s.parts) for s in combine([a, b])} == {frozenset([a]), frozenset([b]), frozenset([a, b])}

    def test_overlapping_pair(self):
        a, b = span(0, 10), span(5, 15)
        assert {frozenset(s.parts) for s in combine([a, b])} == {frozenset([a]), frozenset([b])}

    def test_touching_endpoints_allowed(self):
        a, b = span(0, 10), span(10, 20)
        assert len(combine([a, b])) == 3

    def test_empty(self):
        assert combine([]) == []

    def test_five_part_layout(self):
        # Two long runs, a short one inside the first, and two late fragments.
        parts = [span(0, 40, "A"), span(10, 20, "B"), span(35, 80, "C"), span(45, 60, "D"), span(60, 90, "E")]
        got = {frozenset(p.steps for p in s.parts) for s in combine(parts)}
        assert got == power_set_combinations([p.steps for p in parts])

    def test_random_against_power_set(self):
        rng = random.Random(99)
        for _ in range(100):
            n = rng.randint(1, 12)
            parts = []
            for k in range(n):
                a = rng.randint(0, 100)
                parts.append(span(a, a + rng.randint(0, 30), f"N{k}"))
            got = {frozenset(p.steps for p in s.parts) for s in combine(parts)}
            assert got == power_set_combinations([p.steps for p in parts])

    def test_overlap_rejected_by_total_solution(self):
        with pytest.raises(ValueError):
            TotalSolution((span(0, 10), span(5, 15)))


class TestRank:
    def test_coverage_first(self):
        a = TotalSolution((span(0, 25), span(30, 55)))
        b = TotalSolution((span(0, 60),))
        assert rank([a, b]) is b

    def test_then_part_count(self):
        a = TotalSolution((span(0, 60),))
        b = TotalSolution((span(0, 30), span(40, 70)))
        assert rank([a, b]) is b

    def test_single(self):
        a = TotalSolution((span(0, 1),))
        assert rank([a]) is a

    def test_empty(self):
        with pytest.raises(ValueError):
            rank([])

    def test_permutation_invariant(self):
        rng = random.Random(5)
        sols = [TotalSolution((span(k, k + 10 + (k % 3)),)) for k in range(20)]
        winner = rank(sols)
        for _ in range(20):
            rng.shuffle(sols)
            assert rank(sols) == winner

    def test_fragment_pathology(self):
        long = span(0, 100, "L")
        frags = [span(0, 20, "F"), span(30, 50, "F"), span(60, 80, "F")]
        cands = combine([long, *frags])
        assert rank(cands, "combined").parts == (long,)
        assert rank(cands, "count").parts == tuple(frags)
        assert rank(cands, "duration").parts == (long,)

    @pytest.mark.parametrize("by", ["combined", "duration", "count"])
    def test_random_against_argmax(self, by):
        rng = random.Random(17)
        for _ in range(60):
            parts = []
            for k in range(rng.randint(1, 10)):
                a = rng.randint(0, 60)
                parts.append(span(a, a + rng.randint(0, 25), rng.choice("XYZ")))
            parts = list(set(parts))
            winner = rank(combine(parts), by)
            want = argmax_solution(power_set_combinations([p.steps for p in parts]), by)
            assert frozenset(p.steps for p in winner.parts) == want

    @pytest.mark.parametrize("by", ["combined", "duration", "count"])
    def test_branch_and_bound_equals_full_ranking(self, by):
        rng = random.Random(23)
        for _ in range(150):
            parts = []
            for k in range(rng.randint(0, 12)):
                a = rng.randint(0, 80)
                parts.append(span(a, a + rng.randint(0, 30), rng.choice("XY")))
            best, visited = best_solution(parts, by)
            if not parts:
                assert best is None and visited == 0
                continue
            everything = combine(parts)
            assert best == rank(everything, by)
            assert visited <= len(everything)

    def test_optimal_covers_at_least_each_part(self):
        rng = random.Random(31)
        for _ in range(50):
            parts = [span(a, a + rng.randint(0, 30)) for a in rng.sample(range(100), rng.randint(1, 8))]
            best, _ = best_solution(parts)
            assert best.covered_ms >= max(p.duration_ms for p in parts)


def _empty_recording():
    speed = Channel(ChannelKind.SPEED, np.arange(10) * 100, np.zeros(10))
    return Recording("idle", {"speed": speed})


class TestRecognize:
    def test_synthetic_race_penalties(self):
        plan = TrackPlan(lap_count=6, shooting_laps=(2, 4), penalties_per_bout=(2, 1), noise_seed=3)
        rec, truth = generate(plan)
        res = recognize(rec, biathlon_grammar(plan))
        assert res.optimal.nodes == tuple(truth.path)
        nodes = res.optimal.nodes
        runs, k = [], 0
        while k < len(nodes):
            if nodes[k] == "P":
                j = k
                while j + 1 < len(nodes) and nodes[j + 1] == "P":
                    j += 1
                runs.append(j - k)
                k = j + 1
            else:
                k += 1
        assert [r for r in runs if r] == [2, 1]

    def test_nothing_found(self):
        rising = EdgeTriggerSpec("speed", 1.0, "rising")
        g = build_graph([NodeSpec("A", is_start=True), NodeSpec("B", is_finish=True)], [("A", "B")],
                        {"A": rising, "B": rising})
        res = recognize(_empty_recording(), g)
        assert res.optimal is None and not res.found
        d = res.to_dict()
        assert d["optimal"] == {"parts": [], "covered_ms": 0, "part_count": 0}
        assert d["diagnostics"] == {"poi_counts": {}, "poi_total": 0, "partial_solution_count": 0, "candidate_count": 0}

    def test_rerun_is_identical(self):
        plan = TrackPlan(lap_count=3, shooting_laps=(2,), penalties_per_bout=(1,))
        rec, _ = generate(plan)
        g = biathlon_grammar(plan)
        assert recognize(rec, g).to_dict() == recognize(rec, g).to_dict()

    def test_search_stage(self):
        pois = pois_of(("S", 0), ("UE", 10 * S), ("UL", 60 * S), ("F", 70 * S))
        parts, optimal, visited = search(BIATHLON.compile(), pois)
        assert optimal.parts == tuple(parts) and visited == 1
