#!/usr/bin/env python3
"""Train the desk-scale digit proxy and write the quantized model JSON.

Usage: python scripts/train_digits_mlp.py [model.json]
"""

import sys
from pathlib import Path

from aidac_sim.config import default_aidac
from aidac_sim.mlp import digits_dataset, infer_mlp, proxy_params, train_digits_mlp

if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("digits_mlp.json")
    model = train_digits_mlp()
    target.write_text(model.to_json() + "\n", encoding="utf-8")
    arch, _, _ = default_aidac()
    _, test = digits_dataset()
    acc = infer_mlp(model, test, "ideal-digital", proxy_params(arch))
    print(f"wrote {target} (dims {model.dims}, ideal-digital accuracy {acc * 100:.2f}%)")
