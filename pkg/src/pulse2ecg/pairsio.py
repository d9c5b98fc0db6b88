"""PAIRS1 segment-pair dataset container.

A dataset is a directory with `manifest.json` plus one binary record per
pair. Record layout: magic "PAIR", u32 little-endian sample count N, then
N float32 PPG samples and N float32 ECG samples, little-endian. Payloads
are float32, so writing and re-reading is bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .types import ECG, PPG, TARGET_FS, SegmentPair, Waveform

MAGIC = b"PAIR"
MANIFEST = "manifest.json"


def _record_path(root: Path, rec_id: str) -> Path:
    return root / f"{rec_id}.pair"


def write_pairs(path, pairs: list[SegmentPair], extra_meta: dict | None = None) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    records = []
    for i, pair in enumerate(pairs):
        rec_id = f"{i:06d}"
        n = pair.n_samples
        with open(_record_path(root, rec_id), "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<I", n))
            f.write(pair.ppg.samples.astype("<f4").tobytes())
            f.write(pair.ecg.samples.astype("<f4").tobytes())
        records.append(
            {"id": rec_id, "subject_id": pair.subject_id, "label_tags": sorted(pair.label)}
        )
    manifest = {"format": "PAIRS1", "fs": pairs[0].fs if pairs else TARGET_FS, "records": records}
    if extra_meta:
        manifest["meta"] = extra_meta
    with open(root / MANIFEST, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)


def read_manifest(path) -> dict:
    root = Path(path)
    mpath = root / MANIFEST
    if not mpath.is_file():
        raise FormatError(f"no {MANIFEST} in {root}")
    with open(mpath, encoding="utf-8") as f:
        manifest = json.load(f)
    if manifest.get("format") != "PAIRS1":
        raise FormatError(f"{mpath} is not a PAIRS1 manifest")
    return manifest


def _read_record(root: Path, rec_id: str) -> tuple[np.ndarray, np.ndarray]:
    rpath = _record_path(root, rec_id)
    try:
        blob = rpath.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read record {rpath}: {exc}") from exc
    if blob[:4] != MAGIC:
        raise FormatError(f"bad magic in {rpath}")
    if len(blob) < 8:
        raise FormatError(f"truncated record {rpath}")
    (n,) = struct.unpack("<I", blob[4:8])
    expected = 8 + 2 * 4 * n
    if len(blob) != expected:
        raise FormatError(f"record {rpath}: expected {expected} bytes, found {len(blob)}")
    ppg = np.frombuffer(blob, dtype="<f4", count=n, offset=8).astype(np.float64)
    ecg = np.frombuffer(blob, dtype="<f4", count=n, offset=8 + 4 * n).astype(np.float64)
    return ppg, ecg


def read_pairs(path) -> list[SegmentPair]:
    root = Path(path)
    manifest = read_manifest(root)
    fs = float(manifest.get("fs", TARGET_FS))
    pairs = []
    for rec in manifest["records"]:
        ppg, ecg = _read_record(root, rec["id"])
        subject = rec.get("subject_id", "")
        pairs.append(
            SegmentPair(
                ppg=Waveform(ppg, fs, PPG, subject),
                ecg=Waveform(ecg, fs, ECG, subject),
                label=frozenset(rec.get("label_tags", [])),
            )
        )
    return pairs
