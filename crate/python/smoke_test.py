"""Smoke test for the `lowmach` extension module.

Build and install first:  pip install --no-build-isolation ./crates/py
Then:                     python python/smoke_test.py
"""

import json
import math
import tempfile
from pathlib import Path

import lowmach


def check(cond, msg):
    if not cond:
        raise SystemExit(f"FAIL: {msg}")
    print(f"ok   {msg}")


def main():
    cfg = lowmach.RunConfig()
    check(cfg.epsilon_list == [0.25, 0.125, 0.0625], "default epsilon list")
    small = cfg.with_overrides(
        ["nx=32", "ny=32", "nz=2", "epsilon_list=[0.5, 0.25]", "end_time=0.1", "snapshot_interval=0.05"]
    )
    check(json.loads(small.to_json())["nx"] == 32, "overrides round-trip through JSON")

    try:
        lowmach.RunConfig(overrides=["no_such_key=1"])
    except ValueError:
        check(True, "unknown config keys rejected")
    else:
        check(False, "unknown config keys rejected")

    law = lowmach.PressureLaw(2.0, 1.0, 1.0)
    check(abs(law.pressure(2.0) - 4.0) < 1e-15, "p(rho) = rho^2")
    check(law.helmholtz(1.0, 1.0) == 0.0 and law.helmholtz(1.5, 1.0) > 0.0, "H(rho, r) >= 0, zero on the diagonal")

    n, length = 32, 2 * math.pi
    s = [math.cos(2 * math.pi * (i + 0.5) / n) for i in range(n) for _ in range(n)]
    ac = lowmach.AcousticState(n, n, length, s, [0.0] * (n * n), 0.5, law)
    later = ac.propagate(3.7)
    check(abs(later.energy() - ac.energy()) <= 1e-12 * ac.energy(), "acoustic energy conserved")

    st = lowmach.FluidState.from_config(small, 0.5, 0.5)
    moved = st.advance(law, 0.5, 0.05)
    check(abs(moved.mass() - st.mass()) <= 1e-13 * st.mass(), "finite-volume mass conserved")
    check(moved.energy(law, 0.5) <= st.energy(law, 0.5), "finite-volume energy nonincreasing")

    with tempfile.TemporaryDirectory() as d:
        csv, summary = lowmach.sweep(small, d)
        check(csv.splitlines()[0] == lowmach.CSV_HEADER, "CSV header")
        check((Path(d) / "rows.csv").read_text() == csv, "rows.csv matches the returned table")
        check(not summary["failures"], "no failed members")
        again, _ = lowmach.sweep(small)
        check(again == csv, "sweep deterministic")

    rows = lowmach.run_single(small, 0.5, 0.5)
    check(all(r["e_naive_full"] >= 0.0 for r in rows), "relative energy nonnegative")

    bench = lowmach.acoustic_bench(small.with_overrides(["epsilon_list=[0.25, 0.125]"]))
    check(len(bench["rows"]) == 2, "acoustic bench rows")

    checks = lowmach.validate(cfg)
    check(all(c["passed"] for c in checks), f"validate: {len(checks)} checks pass")
    print("all smoke checks passed")


if __name__ == "__main__":
    main()
