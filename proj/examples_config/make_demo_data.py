"""Writes a small synthetic dataset (Gaussian class blobs) next to this file.

Produces db.jsonl/db.ijeb and test.jsonl/test.ijeb in the layout the ijip
tool reads, so exp.toml can be run without any real images.
"""
import json
import struct
import sys
from pathlib import Path

import numpy as np


def write_ijeb(path, rows):
    rows = np.ascontiguousarray(rows, dtype="<f4")
    with open(path, "wb") as f:
        f.write(b"IJEB")
        f.write(struct.pack("<IIQ", 1, rows.shape[1], rows.shape[0]))
        f.write(rows.tobytes())


def write_split(out, name, labels, centers, count, spread, rng):
    rows = []
    with open(out / f"{name}.jsonl", "w", encoding="utf-8") as f:
        f.write(json.dumps({"labels": labels}) + "\n")
        for i in range(count):
            j = i % len(labels)
            v = centers[j] + spread * rng.standard_normal(centers.shape[1])
            rows.append(v / np.linalg.norm(v))
            rec = {"id": f"{name}_{i:04d}", "label": labels[j], "image": f"images/{name}_{i:04d}.png"}
            f.write(json.dumps(rec) + "\n")
    write_ijeb(out / f"{name}.ijeb", np.stack(rows))


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent / "data"
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(11)
    labels = ["airplane", "automobile", "bird", "cat", "deer",
              "dog", "frog", "horse", "ship", "truck"]
    centers = rng.standard_normal((len(labels), 32))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    write_split(out, "db", labels, centers, 200, 0.12, rng)
    write_split(out, "test", labels, centers, 40, 0.12, rng)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
