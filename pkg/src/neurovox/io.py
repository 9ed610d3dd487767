"""File formats: the NVTF tensor container, 16-bit PCM WAV, CSV/JSON lines.

NVTF layout (little-endian):
  magic   4 bytes  b"NVTF"
  version u8       1
  dtype   u8       0 = float32
  rank    u8
  reserved u8      0
  dims    rank x u64
  payload row-major float32

Writers are deterministic byte-for-byte for identical inputs; the WAV
writer clips out-of-range samples and reports how many were clipped
instead of wrapping silently.
"""

from __future__ import annotations

import json
import struct
import wave
from pathlib import Path

import numpy as np

from .dsp import Waveform

TENSOR_MAGIC = b"NVTF"
TENSOR_VERSION = 1
DTYPE_FLOAT32 = 0


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    array = np.ascontiguousarray(array, dtype=np.float32)
    if not np.all(np.isfinite(array)):
        raise ValueError("refusing to write non-finite tensor")
    header = TENSOR_MAGIC + struct.pack(
        "<BBBB", TENSOR_VERSION, DTYPE_FLOAT32, array.ndim, 0
    )
    dims = struct.pack(f"<{array.ndim}Q", *array.shape) if array.ndim else b""
    Path(path).write_bytes(header + dims + array.astype("<f4").tobytes())


def read_tensor(path: str | Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) < 8 or blob[:4] != TENSOR_MAGIC:
        raise ValueError(f"{path}: not an NVTF tensor file")
    version, dtype, rank, _reserved = struct.unpack("<BBBB", blob[4:8])
    if version != TENSOR_VERSION:
        raise ValueError(f"{path}: unsupported NVTF version {version}")
    if dtype != DTYPE_FLOAT32:
        raise ValueError(f"{path}: unsupported dtype code {dtype}")
    offset = 8 + 8 * rank
    dims = struct.unpack(f"<{rank}Q", blob[8:offset]) if rank else ()
    expected = int(np.prod(dims, dtype=np.int64)) * 4 if rank else 4
    payload = blob[offset:]
    if len(payload) != expected:
        raise ValueError(f"{path}: payload length {len(payload)} != expected {expected}")
    return np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float64)


def write_wav(path: str | Path, waveform: Waveform) -> int:
    """Write 16-bit PCM mono; returns the number of clipped samples."""
    samples = waveform.samples
    clipped = int(np.sum((samples > 1.0) | (samples < -1.0)))
    scaled = np.round(np.clip(samples, -1.0, 1.0) * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as handle:
        handle.setnchannels(1)
        handle.setsampwidth(2)
        handle.setframerate(waveform.sample_rate_hz)
        handle.writeframes(scaled.tobytes())
    return clipped


def read_wav(path: str | Path) -> Waveform:
    with wave.open(str(path), "rb") as handle:
        if handle.getnchannels() != 1 or handle.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit mono PCM")
        rate = handle.getframerate()
        frames = handle.readframes(handle.getnframes())
    samples = np.frombuffer(frames, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples=samples, sample_rate_hz=rate)


def write_csv(path: str | Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for row in rows:
        cells = [f"{v:.6f}" if isinstance(v, float) else str(v) for v in row]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def write_jsonl(path: str | Path, records: list[dict]) -> None:
    lines = [json.dumps(r, sort_keys=True) for r in records]
    Path(path).write_text("\n".join(lines) + "\n")


def write_columns(path: str | Path, columns: tuple[str, ...] | list[str]) -> None:
    Path(path).write_text("\n".join(columns) + "\n")


def read_columns(path: str | Path) -> tuple[str, ...]:
    return tuple(Path(path).read_text().splitlines())
