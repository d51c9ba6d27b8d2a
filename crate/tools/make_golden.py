"""Writes the cross-implementation golden policy and its expected outputs.

The policy file is assembled byte by byte here, independently of the Rust
writer, and the expected outputs come from a float64 numpy forward pass.

    python3 tools/make_golden.py crates/core/tests/data
"""

import json
import struct
import sys
from pathlib import Path

import numpy as np

ACT = {"tanh": 0, "relu": 1, "linear": 2}


def write_policy(path, n_ues, layout, norm, layers):
    b = bytearray(b"RWPN")
    b += struct.pack("<HIB", 1, n_ues, layout)
    b += struct.pack("<3f", *norm)
    b += struct.pack("<I", len(layers))
    for w, bias, act in layers:
        rows, cols = w.shape
        b += struct.pack("<IIB", rows, cols, ACT[act])
        b += w.astype("<f4").tobytes(order="C")
        b += bias.astype("<f4").tobytes()
    Path(path).write_bytes(bytes(b))


def forward(layers, x):
    for w, bias, act in layers:
        x = w.astype(np.float64) @ x + bias.astype(np.float64)
        if act == "tanh":
            x = np.tanh(x)
        elif act == "relu":
            x = np.maximum(x, 0.0)
    return x


def softmax(z):
    e = np.exp(z - z.max())
    return e / e.sum()


def main(out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(20240611)
    cases = []
    for name, n_ues, layout, acts in [
        ("throughput4", 4, 0, ["tanh", "tanh", "linear"]),
        ("video3", 3, 1, ["relu", "tanh", "linear"]),
    ]:
        din = n_ues * (2 if layout == 0 else 3)
        dims = [din, 64, 64, n_ues]
        layers = []
        for i, act in enumerate(acts):
            w = rng.normal(0.0, 0.4, size=(dims[i + 1], dims[i])).astype(np.float32)
            bias = rng.normal(0.0, 0.1, size=dims[i + 1]).astype(np.float32)
            layers.append((w, bias, act))
        norm = (15.0, 3.0e6, 6.0)
        write_policy(out / f"golden_{name}.rwpn", n_ues, layout, norm, layers)
        vectors = []
        for _ in range(16):
            x = rng.uniform(0.0, 1.0, size=din)
            logits = forward(layers, x)
            vectors.append(
                {
                    "state": x.tolist(),
                    "logits": logits.tolist(),
                    "weights": softmax(logits).tolist(),
                }
            )
        cases.append({"file": f"golden_{name}.rwpn", "n_ues": n_ues, "vectors": vectors})
    (out / "golden_vectors.json").write_text(json.dumps(cases, indent=1) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/data")
