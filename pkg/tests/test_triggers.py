import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from movegraph.errors import TriggerError
from movegraph.geo import PlanarPoint, SegmentPair, project_local_array, segment_intersection, side_of_line
from movegraph.geo import project_local, unproject_local
from movegraph.synthdata import TrackPlan, biathlon_grammar, generate
from movegraph.timeseries import Channel, ChannelKind, GeoPoint, Recording
from movegraph.triggers import (
    EdgeTriggerSpec,
    GateTriggerSpec,
    PeakTriggerSpec,
    PointOfInterest,
    detect_edges,
    detect_gate_crossings,
    detect_peaks,
    poi_counts,
    run_triggers,
)

ORIGIN = GeoPoint(47.0, 15.0)


def series(values, step=100, kind=ChannelKind.GENERIC_SCALAR):
    return Channel(kind, np.arange(len(values)) * step, np.array(values, dtype=float))


def track(points_xy, step=100):
    """Position channel from planar points around ORIGIN."""
    geo = [unproject_local(ORIGIN, PlanarPoint(x, y)) for x, y in points_xy]
    return Channel(ChannelKind.POSITION, np.arange(len(geo)) * step, np.array([[g.lat, g.lon] for g in geo]))


def gate(x1, y1, x2, y2, direction="any"):
    return GateTriggerSpec((unproject_local(ORIGIN, PlanarPoint(x1, y1)), unproject_local(ORIGIN, PlanarPoint(x2, y2))), direction)


# -- edges --------------------------------------------------------------------


def edge_oracle(t, x, thr, direction):
    """Indices i where the state changes between samples i and i+1."""
    out = []
    for i in range(len(x) - 1):
        a, b = x[i] >= thr, x[i + 1] >= thr
        if (direction in ("rising", "change") and not a and b) or (direction in ("falling", "change") and a and not b):
            out.append(i)
    return out


class TestEdges:
    def test_falling_below_one_mps(self):
        ch = series([2.0, 1.5, 0.8, 0.4], kind=ChannelKind.SPEED)
        got = detect_edges(ch, EdgeTriggerSpec("speed", 1.0, "falling"))
        assert got == [100 + round((1.0 - 1.5) / (0.8 - 1.5) * 100)] == [171]

    def test_constant_series_no_edge(self):
        assert detect_edges(series([5.0, 5.0, 5.0]), EdgeTriggerSpec("x", 1.0, "rising")) == []

    def test_change_reports_both_directions(self):
        ch = series([0.5, 1.2, 0.7, 1.3])
        got = detect_edges(ch, EdgeTriggerSpec("x", 1.0, "change"))
        assert len(got) == 3
        assert [got[k] // 100 for k in range(3)] == edge_oracle(ch.t, ch.values, 1.0, "change")

    def test_exact_threshold_is_above(self):
        ch = series([0.0, 1.0, 1.0, 0.0])
        assert detect_edges(ch, EdgeTriggerSpec("x", 1.0, "rising")) == [100]
        # Still "above" at t=200, so the fall happens after that sample.
        assert detect_edges(ch, EdgeTriggerSpec("x", 1.0, "falling")) == [201]

    def test_needs_scalar_and_two_samples(self):
        acc = Channel(ChannelKind.ACCEL, np.array([0, 10]), np.zeros((2, 3)))
        with pytest.raises(TriggerError):
            detect_edges(acc, EdgeTriggerSpec("accel", 0.0))
        with pytest.raises(TriggerError):
            detect_edges(series([1.0]), EdgeTriggerSpec("x", 0.0))

    def test_non_finite_threshold(self):
        with pytest.raises(TriggerError):
            EdgeTriggerSpec("x", float("inf"))

    @settings(max_examples=200)
    @given(
        st.lists(st.floats(-10, 10, allow_nan=False), min_size=2, max_size=60),
        st.floats(-10, 10),
        st.sampled_from(["rising", "falling", "change"]),
        st.integers(1, 1000),
    )
    def test_matches_pairwise_scan(self, xs, thr, direction, step):
        ch = series(xs, step=step)
        got = detect_edges(ch, EdgeTriggerSpec("x", thr, direction))
        idx = edge_oracle(ch.t, ch.values, thr, direction)
        assert len(got) == len(idx)
        for t, i in zip(got, idx):
            # Rounded to whole milliseconds, so the upper sample can be reached.
            assert ch.t[i] < t <= ch.t[i + 1]
        assert got == sorted(set(got))

    @given(
        st.lists(st.floats(-10, 10, allow_nan=False), min_size=2, max_size=60),
        st.floats(-10, 10),
    )
    def test_mirror_symmetry(self, xs, thr):
        # Holds exactly when no sample sits on the threshold.
        xs = [x if x != thr else x + 0.5 for x in xs]
        up = detect_edges(series(xs), EdgeTriggerSpec("x", thr, "rising"))
        down = detect_edges(series([-x for x in xs]), EdgeTriggerSpec("x", -thr, "falling"))
        assert up == down


# -- peaks --------------------------------------------------------------------


def peak_oracle(x):
    """Strict local maxima; a flat top counts once at its middle sample."""
    out = []
    i = 1
    while i < len(x) - 1:
        if x[i] > x[i - 1]:
            j = i
            while j + 1 < len(x) and x[j + 1] == x[i]:
                j += 1
            if j + 1 < len(x) and x[j + 1] < x[i]:
                out.append((i + j) // 2)
            i = j + 1
        else:
            i += 1
    return out


def prominence_oracle(x, i):
    left = i
    lmin = x[i]
    while left > 0 and x[left - 1] <= x[i]:
        left -= 1
        lmin = min(lmin, x[left])
    right = i
    rmin = x[i]
    while right < len(x) - 1 and x[right + 1] <= x[i]:
        right += 1
        rmin = min(rmin, x[right])
    return x[i] - max(lmin, rmin)


def separation_oracle(ts, heights, sep):
    kept = []
    for k in sorted(range(len(ts)), key=lambda k: (-heights[k], ts[k])):
        if all(abs(ts[k] - ts[j]) >= sep for j in kept):
            kept.append(k)
    return sorted(kept)


class TestPeaks:
    def test_single_peak(self):
        assert detect_peaks(series([0, 1, 0]), PeakTriggerSpec("x")) == [100]

    def test_monotone(self):
        assert detect_peaks(series([0, 1, 2, 3]), PeakTriggerSpec("x")) == []

    def test_plateau_midpoint(self):
        assert detect_peaks(series([0, 2, 2, 2, 0]), PeakTriggerSpec("x")) == [200]

    def test_minima(self):
        assert detect_peaks(series([3, 1, 3, 0, 3]), PeakTriggerSpec("x", polarity="minima")) == [100, 300]

    def test_invalid_parameters(self):
        with pytest.raises(TriggerError):
            PeakTriggerSpec("x", min_prominence=-1)

    def test_random_200_samples_match_neighbour_scan(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            x = rng.normal(size=200)
            got = detect_peaks(series(x), PeakTriggerSpec("x"))
            assert got == [i * 100 for i in peak_oracle(list(x))]

    def test_integer_series_with_plateaus(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            x = rng.integers(0, 4, size=40).astype(float)
            got = detect_peaks(series(x), PeakTriggerSpec("x"))
            assert got == [i * 100 for i in peak_oracle(list(x))]

    def test_prominence_filter(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            x = list(rng.normal(size=120))
            cut = 0.8
            want = [i for i in peak_oracle(x) if prominence_oracle(x, i) >= cut]
            assert detect_peaks(series(x), PeakTriggerSpec("x", min_prominence=cut)) == [i * 100 for i in want]

    def test_separation_keeps_highest(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            x = list(rng.normal(size=150))
            peaks = peak_oracle(x)
            kept = separation_oracle([i * 100 for i in peaks], [x[i] for i in peaks], 700)
            got = detect_peaks(series(x), PeakTriggerSpec("x", min_separation_ms=700))
            assert got == [peaks[k] * 100 for k in kept]


# -- gates --------------------------------------------------------------------


def gate_oracle(ch, spec):
    """Count steps whose endpoints are on different sides (or touching) and whose segments meet."""
    origin = spec.midpoint
    b1, b2 = (project_local(origin, g) for g in spec.gate)
    x, y = project_local_array(origin, ch.values[:, 0], ch.values[:, 1])
    count = 0
    for i in range(len(x) - 1):
        s0, s1 = side_of_line(b1, b2, x[i], y[i]), side_of_line(b1, b2, x[i + 1], y[i + 1])
        if (x[i], y[i]) == (x[i + 1], y[i + 1]) or (s0 > 0 and s1 > 0) or (s0 < 0 and s1 < 0):
            continue
        if segment_intersection(SegmentPair(PlanarPoint(x[i], y[i]), PlanarPoint(x[i + 1], y[i + 1]), b1, b2)):
            count += 1
    return count


class TestGates:
    def test_straight_crossing_time(self):
        # 5 m/s eastwards, 10 Hz, gate at x = 12.3 m: crossing after 2.46 s.
        ch = track([(0.5 * k, 0.0) for k in range(60)])
        got = detect_gate_crossings(ch, gate(12.3, -5, 12.3, 5))
        assert len(got) == 1 and abs(got[0] - 2460) <= 100

    def test_one_side_only(self):
        ch = track([(0.5 * k, 10.0) for k in range(60)])
        assert detect_gate_crossings(ch, gate(12.3, -5, 12.3, 5)) == []

    def test_passing_beside_gate_end(self):
        ch = track([(0.5 * k, 6.0) for k in range(60)])
        assert detect_gate_crossings(ch, gate(12.3, -5, 12.3, 5)) == []

    def test_direction_filter(self):
        there = [(0.5 * k, 0.0) for k in range(60)]
        back = there[::-1]
        ch = track(there + [(p[0], 1.0) for p in back])
        # Gate drawn south to north: east of it is the right-hand side.
        g = (12.3, -5, 12.3, 5)
        assert len(detect_gate_crossings(ch, gate(*g))) == 2
        east = detect_gate_crossings(ch, gate(*g, direction="left_to_right"))
        west = detect_gate_crossings(ch, gate(*g, direction="right_to_left"))
        assert len(east) == len(west) == 1 and east[0] < west[0]

    def test_penalty_loop_three_crossings(self):
        pts = []
        for _ in range(3):
            pts += [(0.0, y) for y in np.arange(20, -1, -1.0)]
            pts += [(x, 0.0) for x in np.arange(-1, -11, -1.0)] + [(-10.0, y) for y in np.arange(1, 21, 1.0)]
            pts += [(x, 20.0) for x in np.arange(-9, 0, 1.0)]
        ch = track(pts)
        assert len(detect_gate_crossings(ch, gate(-5, 10, 5, 10))) == 3

    def test_fix_on_gate_counted_once(self):
        ch = track([(-1.0, 0.0), (0.0, 0.0), (1.0, 0.0)])
        assert len(detect_gate_crossings(ch, gate(0, -5, 0, 5))) == 1

    def test_needs_position(self):
        with pytest.raises(TriggerError):
            detect_gate_crossings(series([1.0, 2.0]), gate(0, -5, 0, 5))

    def test_random_walks_match_sign_change_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(40):
            steps = rng.normal(scale=2.0, size=(300, 2))
            pts = np.cumsum(steps, axis=0)
            ch = track([tuple(p) for p in pts])
            spec = gate(-3, -3, 4, 5)
            assert len(detect_gate_crossings(ch, spec)) == gate_oracle(ch, spec)


# -- run_triggers -------------------------------------------------------------


class TestRunTriggers:
    def test_empty_bindings(self):
        rec = Recording("r", {"speed": series([1.0, 2.0], kind=ChannelKind.SPEED)})
        assert run_triggers(rec, []) == []

    def test_unknown_channel(self):
        rec = Recording("r", {"speed": series([1.0, 2.0], kind=ChannelKind.SPEED)})
        with pytest.raises(TriggerError, match="'heart'"):
            run_triggers(rec, [("A", EdgeTriggerSpec("heart", 1.0))])

    def test_ties_ordered_by_node(self):
        rec = Recording("r", {"speed": series([0.0, 2.0], kind=ChannelKind.SPEED)})
        spec = EdgeTriggerSpec("speed", 1.0, "rising")
        pois = run_triggers(rec, [("Z", spec), ("A", spec)])
        assert [p.node for p in pois] == ["A", "Z"]
        assert pois[0] == PointOfInterest("A", 50, "A:edge")

    def test_component_channel(self):
        acc = Channel(ChannelKind.ACCEL, np.arange(5) * 20, np.array([[0, 0, z] for z in (0, 1, 0, 2, 0)]))
        rec = Recording("r", {"accel": acc})
        pois = run_triggers(rec, [("K", PeakTriggerSpec("accel.z"))])
        assert [p.t for p in pois] == [20, 60]

    def test_spurious_early_sf(self):
        # Standing still before the start: the speed rises through 1 m/s
        # once, long before any shooting.
        rec = Recording("r", {"speed": series([0.0, 0.0, 4.0, 4.0, 0.5, 0.5, 4.0], kind=ChannelKind.SPEED)})
        pois = run_triggers(rec, [("SS", EdgeTriggerSpec("speed", 1.0, "falling")), ("SF", EdgeTriggerSpec("speed", 1.0, "rising"))])
        assert [p.node for p in pois] == ["SF", "SS", "SF"]

    def test_synthetic_race_matches_ground_truth(self):
        plan = TrackPlan(lap_count=6, shooting_laps=(2, 4), penalties_per_bout=(2, 1))
        rec, truth = generate(plan)
        pois = run_triggers(rec, biathlon_grammar(plan).trigger_bindings())
        assert [p.node for p in pois] == [n for n, _ in truth.pois]
        assert max(abs(p.t - t) for p, (_, t) in zip(pois, truth.pois)) <= 500
        assert run_triggers(rec, biathlon_grammar(plan).trigger_bindings()) == pois

    def test_noiseless_race_within_one_sample(self):
        plan = TrackPlan(lap_count=6, shooting_laps=(2, 4), penalties_per_bout=(2, 1)).noiseless()
        rec, truth = generate(plan)
        pois = run_triggers(rec, biathlon_grammar(plan).trigger_bindings())
        assert [p.node for p in pois] == [n for n, _ in truth.pois]
        assert max(abs(p.t - t) for p, (_, t) in zip(pois, truth.pois)) <= 1000 / plan.gnss_rate_hz

    def test_counts(self):
        pois = [PointOfInterest("B", 1, "x"), PointOfInterest("A", 2, "x"), PointOfInterest("B", 3, "x")]
        assert poi_counts(pois) == {"A": 1, "B": 2}
