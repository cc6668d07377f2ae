"""Compare range reports on the real biathlon recordings with reference values.

Expects a directory holding ``grammar.json`` and one recording CSV per
athlete (``athlete_a.csv``, ``athlete_b.csv``, ``athlete_c.csv``) in the
package's recording schema. The data is external and not shipped here.

    python scripts/reproduce_range_report.py /path/to/dataset
"""
import argparse
import sys
from pathlib import Path

from movegraph.grammar import parse_grammar
from movegraph.metrics import range_report
from movegraph.recognizer import recognize
from movegraph.timeseries import load_recording

# (dataset, lap): (range time s, shooting time s, shooting z-accel G)
REFERENCE = {
    ("athlete_a", 2): (57.53, 33.90, 0.33),
    ("athlete_a", 4): (54.49, 30.80, -0.03),
    ("athlete_b", 2): (53.47, 29.00, 0.27),
    ("athlete_b", 4): (46.85, 22.90, -0.07),
    ("athlete_c", 2): (53.67, 30.60, 0.49),
    ("athlete_c", 4): (51.11, 28.10, 0.18),
}
TIME_TOL_S = 0.5
ACCEL_TOL_G = 0.05


def measure(root: Path) -> dict:
    graph = parse_grammar(root / "grammar.json")
    out = {}
    for dataset in sorted({d for d, _ in REFERENCE}):
        rec = load_recording(root / f"{dataset}.csv", recording_id=dataset)
        res = recognize(rec, graph)
        if res.optimal is None:
            continue
        for r in range_report(res.optimal, rec):
            out[(dataset, r.lap_index)] = (r.range_time_s, r.shooting_time_s, r.shooting_z_accel_g)
    return out


def compare(root: Path) -> list[str]:
    got = measure(root)
    failures = []
    for key, (rt, st, z) in REFERENCE.items():
        if key not in got:
            failures.append(f"{key}: no shooting bout recognized")
            continue
        grt, gst, gz = got[key]
        if abs(grt - rt) > TIME_TOL_S or abs(gst - st) > TIME_TOL_S:
            failures.append(f"{key}: times {grt:.2f}/{gst:.2f} s, expected {rt:.2f}/{st:.2f} s")
        if gz is None or abs(gz - z) > ACCEL_TOL_G:
            failures.append(f"{key}: z-accel {gz}, expected {z:.2f} G")
    return failures


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("dataset_dir", type=Path)
    args = parser.parse_args(argv)
    got = measure(args.dataset_dir)
    for key in sorted(REFERENCE):
        print(key, "reference", REFERENCE[key], "measured", got.get(key))
    failures = compare(args.dataset_dir)
    for f in failures:
        print("MISMATCH", f)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
