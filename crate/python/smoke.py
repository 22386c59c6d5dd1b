#!/usr/bin/env python3
"""Smoke test for the subplanck_py extension module.

Finds the built cdylib under target/, imports it, and checks a few
end-to-end numbers: state construction, phase-space bounds, displacement
overlaps, evolution, and a full scenario run with reproducible
checksums.

Build the module first with:  cargo build -p subplanck-py
"""

import json
import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_module():
    candidates = [
        REPO / "target" / profile / name
        for profile in ("release", "debug")
        for name in ("libsubplanck_py.so", "libsubplanck_py.dylib", "subplanck_py.dll")
    ]
    built = [c for c in candidates if c.is_file()]
    if not built:
        sys.exit("no built extension found; run: cargo build -p subplanck-py")
    staging = Path(tempfile.mkdtemp(prefix="subplanck_py_"))
    target = staging / ("subplanck_py" + (".pyd" if built[0].suffix == ".dll" else ".so"))
    shutil.copy2(built[0], target)
    sys.path.insert(0, str(staging))
    import subplanck_py

    return subplanck_py


def approx(value, expected, tol, label):
    if abs(value - expected) > tol:
        sys.exit(f"FAIL {label}: {value} vs {expected} (tol {tol})")
    print(f"ok  {label}: {value:.6g}")


def main():
    sp = import_module()
    hbar = 0.16
    grid = sp.Grid(256, 16.0, hbar)
    assert grid.n == 256 and grid.hbar == hbar

    g = sp.gaussian(grid, 0.0, 0.0, 0.4)
    approx(g.norm(), 1.0, 1e-12, "gaussian norm")
    _, var_x = g.position_moments()
    approx(var_x, 0.4**2 / 2, 1e-9, "gaussian position variance")

    z = sp.momentum_shift_overlap(g, 0.4)
    approx(
        math.hypot(*z),
        math.exp(-((0.4 * 0.4 / (2 * hbar)) ** 2)),
        1e-9,
        "momentum-shift overlap magnitude",
    )
    gap = [
        abs(a - b)
        for a, b in zip(sp.branch_overlap(g, 0.0, 0.4), sp.momentum_shift_overlap(g, 0.4))
    ]
    approx(max(gap), 0.0, 1e-12, "branch route vs marginal route")

    moved = sp.displace(g, 0.3, -0.2)
    back = sp.displace(moved, -0.3, 0.2)
    approx(math.hypot(*sp.overlap(g, back)), 1.0, 1e-9, "displacement round trip")

    cat = sp.cat(grid, 1.5, 0.4)
    report = json.loads(cat.structure_report())
    approx(report["state_count"], report["action"] / (2 * math.pi * hbar), 1e-12, "state count")
    assert report["action"] > hbar, "cat should occupy more than hbar of phase space"
    assert report["sub_planck_action"] < hbar / 2, "interference tile should be sub-Planck"

    w = sp.wigner(cat)
    bound = 1.0 / (math.pi * hbar)
    assert w.max_abs() <= bound + 1e-9, "phase-space magnitude bound violated"
    approx(w.total_mass(), 1.0, 1e-8, "wigner mass")
    assert w.min_value() < -0.5 * bound, "cat interference should go deeply negative"

    tile = sp.wigner(sp.compass(grid, 4.0, 4.0, 0.4)).tile_area()
    approx(tile, (2 * math.pi * hbar) ** 2 / 16.0, 0.1 * tile, "compass tile area")

    decay = sp.overlap_decay(cat, 0.0, 1.0, 0.3, 60)
    assert abs(decay[0][1] - 1.0) < 1e-9, "zero displacement must give unit overlap"
    assert min(v for _, v in decay) < 0.05, "cat scan should reach near-orthogonality"

    sparse = sp.sparse_random(grid, 8, 0.4, 5.0, 4.0, 6.0, seed=42)
    again = sp.sparse_random(grid, 8, 0.4, 5.0, 4.0, 6.0, seed=42)
    assert sparse.amplitudes() == again.amplitudes(), "seeded construction must be reproducible"

    evolved = sp.evolve(g, 1.0, 0.36, 3.0, 0.01, 1.0 / 64.0, 1.0)
    approx(evolved.norm(), 1.0, 1e-9, "evolved norm")

    rate = sp.stretching_rate(1.0, 0.36, 3.0, 0.01, 0.5, 0.0, 100.0)
    assert 0.02 < rate < 0.3, f"chaotic stretching rate {rate} out of range"
    print(f"ok  stretching rate: {rate:.4f}")

    with tempfile.TemporaryDirectory() as tmp:
        config = Path(tmp) / "scenario.json"
        config.write_text(
            json.dumps(
                {
                    "name": "smoke",
                    "grid": {"n": 256, "extent": 16.0, "hbar": hbar},
                    "state": {"cat": {"x0": 1.5, "xi": 0.4}},
                    "scan": {"direction": {"ux": 0.0, "up": 1.0}, "max": 0.3, "steps": 60},
                    "report": {"structure": True},
                    "seed": 1,
                }
            )
        )
        first = json.loads(sp.run_scenario_file(config, Path(tmp) / "out1"))
        second = json.loads(sp.run_scenario_file(config, Path(tmp) / "out2"))
        assert (Path(tmp) / "out1" / "manifest.json").is_file()
        assert (Path(tmp) / "out1" / "report.json").is_file()
        sums = lambda m: [(a["path"], a["sha256"]) for a in m["artifacts"]]
        assert sums(first) == sums(second), "reruns must reproduce identical checksums"
        print(f"ok  scenario run: {len(first['artifacts'])} artifacts, checksums reproducible")

    print("smoke test passed")


if __name__ == "__main__":
    main()
