#!/usr/bin/env python3
"""Run the full experiment battery and drop every artifact under out/.

Covers the transfer curve, its INL/DNL, the 2000-trial conversion-error
distribution, the MAC error scans, a full-core VMM with phase and stage
traces, both cost roll-up modes, the mismatch calibration loop, and the
quantized-MLP inference proxy. Everything is seeded; re-running reproduces
the artifacts byte for byte.
"""

import sys
from pathlib import Path

from aidac_sim.cli import main

SEED = "20260808"


def run(label, argv):
    print(f"== {label}: aidac-sim {' '.join(argv)}")
    code = main(argv)
    if code != 0:
        sys.exit(code)


if __name__ == "__main__":
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out")
    run("transfer curve", ["transfer-sweep", "--out", str(out / "transfer"), "--seed", SEED])
    run("linearity", ["inl-dnl", "--out", str(out / "linearity"), "--seed", SEED])
    run("conversion spread", [
        "monte-carlo", "--trials", "2000", "--out", str(out / "monte-carlo"), "--seed", SEED,
    ])
    run("mac error scans", ["mac-error", "--out", str(out / "mac-error"), "--seed", SEED])
    run("full-core vmm", [
        "run-vmm", "--trace", "--out", str(out / "vmm"), "--seed", SEED,
    ])
    run("cost (component)", [
        "cost-report", "--rollup", "component", "--out", str(out / "cost-component"),
    ])
    run("cost (macro)", [
        "cost-report", "--rollup", "macro", "--out", str(out / "cost-macro"),
    ])
    run("calibration", [
        "calibrate", "--trials", "2000", "--out", str(out / "calibrate"), "--seed", SEED,
    ])
    run("mlp proxy", ["infer", "--out", str(out / "infer"), "--seed", SEED])
    print(f"all artifacts under {out}/")
