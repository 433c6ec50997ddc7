"""On-disk store of converted glyphs, one packed file per class.

Each class file holds N consecutive 784-byte records (28x28 row-major uint8).
The store manifest records per-class counts, partition-hint tallies from
ingest, and a sha-256 digest per file, so downstream builds can verify the
content they consume.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import FormatError
from .ingest import CLASS_COUNT, code_to_char, code_to_hex

GLYPH_BYTES = 784
MANIFEST_NAME = "store-manifest.json"
LEDGER_NAME = "ledger.jsonl"


def class_filename(code: int) -> str:
    return f"class_{code_to_hex(code)}.bin"


def write_store(
    store_dir,
    pools: dict[int, np.ndarray],
    partition_counts: dict[int, dict[str, int]] | None = None,
    config: dict | None = None,
) -> dict:
    """Write per-class glyph files plus the manifest; returns the manifest."""
    store_dir = Path(store_dir)
    store_dir.mkdir(parents=True, exist_ok=True)
    classes = {}
    total = 0
    for code in sorted(pools):
        arr = np.ascontiguousarray(pools[code], dtype=np.uint8).reshape(-1, GLYPH_BYTES)
        payload = arr.tobytes()
        fname = class_filename(code)
        (store_dir / fname).write_bytes(payload)
        record = {
            "label": code,
            "char": code_to_char(code),
            "count": int(arr.shape[0]),
            "sha256": hashlib.sha256(payload).hexdigest(),
        }
        if partition_counts and code in partition_counts:
            record["by_partition"] = dict(sorted(partition_counts[code].items()))
        classes[fname] = record
        total += arr.shape[0]
    manifest = {"total": total, "classes": classes}
    if config:
        manifest["config"] = config
    (store_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def read_store(store_dir) -> dict[int, np.ndarray]:
    """Load every class file named by the manifest into (N, 784) uint8 pools."""
    store_dir = Path(store_dir)
    manifest_path = store_dir / MANIFEST_NAME
    if not manifest_path.is_file():
        raise FileNotFoundError(f"no store manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    pools: dict[int, np.ndarray] = {}
    for fname, record in manifest["classes"].items():
        code = int(record["label"])
        if not 0 <= code < CLASS_COUNT:
            raise FormatError(f"{fname}: class code {code} outside [0, {CLASS_COUNT})")
        payload = (store_dir / fname).read_bytes()
        if len(payload) != record["count"] * GLYPH_BYTES:
            raise FormatError(
                f"{fname}: expected {record['count'] * GLYPH_BYTES} bytes, got {len(payload)}"
            )
        pools[code] = np.frombuffer(payload, dtype=np.uint8).reshape(-1, GLYPH_BYTES).copy()
    return pools
