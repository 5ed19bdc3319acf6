"""Smoke test for the icguard_py extension.

Build and copy the module next to this script first:

    cargo build -p icguard-py --release
    cp target/release/libicguard_py.so python/icguard_py.so
"""

import json
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import icguard_py as ig


def main():
    healthy = ig.Config()
    report = json.loads(ig.check_model(healthy))
    assert report["errors"] == [], report["errors"]
    assert report["matching"]["full_column_rank"]

    run = ig.run(healthy, seed=1)
    assert len(run) == 10001
    assert run.crash is None
    assert max(run.column("alarm_novel")) == 0.0
    assert ig.RunResult.columns()[0] == "t"

    attacked = ig.run(ig.Config.attacked(), seed=1)
    assert attacked.crash is not None and abs(attacked.crash - 4.8) < 1.0
    assert attacked.novel_first_persistent_alarm < attacked.eoi_first_persistent_alarm
    metrics = json.loads(attacked.metrics_json())
    assert metrics["seed"] == 1

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "run.csv")
        attacked.to_csv(path)
        with open(path) as f:
            assert f.readline().startswith("t,p0,v0,a0")

    summary = json.loads(ig.monte_carlo(healthy, 5, seed_base=10))
    assert summary["novel_false_alarm_runs"] == 0

    up, lo = ig.measurement_band([0.1, 0.0, 0.4, 0.0], [0.15, 0.3, 0.15, 0.15])
    assert abs(up[0] - 0.15) < 1e-12 and abs(lo[0] + 0.05) < 1e-12
    assert up[2] < lo[2]
    assert ig.switching_injection([-1.0, 2.0], [0.5, 1.0]) == [0.5, -1.0]
    assert abs(ig.model_uncertainty(0.9, 1.0, 0.0) + 0.1) < 1e-12

    try:
        ig.Config('{"tau0": -1}').validate()
    except ig.ConfigError:
        pass
    else:
        raise AssertionError("negative time constant accepted")

    print("icguard_py smoke test passed")


if __name__ == "__main__":
    main()
