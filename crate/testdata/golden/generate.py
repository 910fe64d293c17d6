"""Regenerate the golden vectors with numpy as an independent oracle.

Run from the repository root: python3 testdata/golden/generate.py
"""
import json
import math
import pathlib

import numpy as np

OUT = pathlib.Path(__file__).resolve().parent
rng = np.random.default_rng(20240917)


def dump(name, cases):
    (OUT / name).write_text(json.dumps({"cases": cases}, indent=1) + "\n")


def clip_normalize_cases():
    cases = []
    specs = [
        ("ramp_0_99", np.arange(100, dtype=np.float64).reshape(100, 1, 1), 0.0, 100.0, 255.0),
        ("ramp_percentile", np.arange(100, dtype=np.float64).reshape(10, 10, 1), 0.5, 99.5, 255.0),
        ("constant", np.full((3, 4, 5), 7.0), 0.5, 99.5, 255.0),
        ("unit_range", rng.normal(0.0, 1.0, (4, 5, 6)), 10.0, 90.0, 1.0),
    ]
    for shape in [(7, 6, 5), (16, 16, 4), (9, 11, 13)]:
        data = np.round(rng.gamma(2.0, 200.0, shape) - 150.0)
        data[tuple(rng.integers(0, s) for s in shape)] = 30000.0
        specs.append((f"ct_like_{shape[0]}x{shape[1]}x{shape[2]}", data, 0.5, 99.5, 255.0))
    for name, data, lo, hi, out_max in specs:
        flat = data.ravel(order="F")
        p_lo, p_hi = np.percentile(flat, [lo, hi], method="linear")
        if p_hi > p_lo:
            expected = (np.clip(flat, p_lo, p_hi) - p_lo) / (p_hi - p_lo) * out_max
        else:
            expected = np.zeros_like(flat)
        cases.append(
            {
                "name": name,
                "shape": list(data.shape),
                "lo_pct": lo,
                "hi_pct": hi,
                "out_max": out_max,
                "input": flat.tolist(),
                "expected": expected.tolist(),
            }
        )
    return cases


def remap(c, f, t):
    return min(max(int(math.floor((c + 0.5) / f * t)), 0), t - 1)


def remap_index_cases():
    cases = []
    shapes = [([10, 10, 10], [10, 10, 10]), ([512, 512, 40], [256, 256, 40]), ([35, 51, 35], [128, 128, 128]),
              ([1, 7, 3], [5, 1, 9]), ([320, 320, 20], [1024, 1024, 1])]
    for fr, to in shapes:
        coords = [[0, 0, 0], [f - 1 for f in fr]]
        coords += [[int(rng.integers(0, f)) for f in fr] for _ in range(12)]
        for c in coords:
            cases.append({"coord": c, "from_shape": fr, "to_shape": to,
                          "expected": [remap(c[a], fr[a], to[a]) for a in range(3)]})
    return cases


def point_to_relative_cases():
    cases = []
    for _ in range(40):
        shape = [int(rng.integers(1, 64)) for _ in range(3)]
        origin = [int(rng.integers(0, 100)) for _ in range(3)]
        c = [origin[a] + int(rng.integers(0, shape[a])) for a in range(3)]
        cases.append({"coord": c, "origin": origin, "shape": shape,
                      "expected": [(c[a] - origin[a] + 0.5) / shape[a] for a in range(3)]})
    cases.append({"coord": [0, 0, 0], "origin": [0, 0, 0], "shape": [10, 10, 10], "expected": [0.05, 0.05, 0.05]})
    cases.append({"coord": [10, 3, 3], "origin": [0, 0, 0], "shape": [10, 10, 10], "expected": None})
    cases.append({"coord": [4, 1, 9], "origin": [5, 0, 0], "shape": [10, 10, 10], "expected": None})
    return cases


dump("clip_normalize.json", clip_normalize_cases())
dump("remap_index.json", remap_index_cases())
dump("point_to_relative.json", point_to_relative_cases())
