"""Multi-rate synchronized episode capture.

A Session buffers timestamped samples from several named streams behind a
start barrier, tracks arrival latency and buffer drops, and finalizes to a
self-contained on-disk store: a JSON manifest plus per-stream zlib-compressed
chunk files (64 frames per chunk, little-endian row-major) with CRC32
checksums. Alignment resamples all streams onto a common frame clock by
nearest timestamp, dropping frames that violate the half-period bound.
"""
from __future__ import annotations

import json
import math
import time
import warnings
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
CHUNK_FRAMES = 64
COMPRESSION = "zlib"


class RecorderError(RuntimeError):
    """Base error for recording and store-integrity failures."""


class NotStartedError(RecorderError):
    """Append attempted before the start barrier was released."""


@dataclass(frozen=True)
class StreamSpec:
    stream_id: str
    rate_hz: float
    shape: tuple[int, ...]
    dtype: str = "<f4"
    buffer_depth: int = 256

    def __post_init__(self):
        if self.rate_hz <= 0:
            raise RecorderError(f"stream {self.stream_id!r}: rate must be positive")
        if self.buffer_depth < 1:
            raise RecorderError(f"stream {self.stream_id!r}: buffer depth must be >= 1")

    @property
    def period(self) -> float:
        return 1.0 / self.rate_hz


class _StreamBuffer:
    def __init__(self, spec: StreamSpec):
        self.spec = spec
        self.buffer: list[tuple[float, np.ndarray]] = []
        self.frames: list[np.ndarray] = []
        self.timestamps: list[float] = []
        self.lags_ms: list[float] = []
        self.drops = 0
        self.non_monotone = 0
        self.ready = False
        self._last_ts = -math.inf


class Session:
    """One recording session over a fixed set of streams.

    Lifecycle: open (armed) -> every stream acknowledges readiness via
    ``mark_ready`` -> ``start`` releases the barrier -> ``append``/``drain``
    -> ``finalize`` writes the store.
    """

    def __init__(self, specs: list[StreamSpec], out_path, meta: dict | None = None):
        ids = [s.stream_id for s in specs]
        if len(set(ids)) != len(ids):
            raise RecorderError(f"duplicate stream ids in {ids}")
        if not specs:
            raise RecorderError("a session needs at least one stream")
        self.out_path = Path(out_path)
        self.meta = dict(meta or {})
        self._streams = {s.stream_id: _StreamBuffer(s) for s in specs}
        self.started = False
        self.start_time: float | None = None
        self.finalized = False
        self.out_path.mkdir(parents=True, exist_ok=True)
        probe = self.out_path / ".write_probe"
        try:
            probe.write_bytes(b"")
            probe.unlink()
        except OSError as e:
            raise RecorderError(f"output path {self.out_path} is not writable: {e}") from e

    @property
    def stream_ids(self) -> list[str]:
        return list(self._streams)

    def _stream(self, stream_id: str) -> _StreamBuffer:
        try:
            return self._streams[stream_id]
        except KeyError:
            raise RecorderError(f"unknown stream {stream_id!r}") from None

    def mark_ready(self, stream_id: str) -> None:
        self._stream(stream_id).ready = True

    def start(self, start_time: float | None = None) -> None:
        not_ready = [sid for sid, s in self._streams.items() if not s.ready]
        if not_ready:
            raise RecorderError(f"streams not ready at start barrier: {not_ready}")
        self.started = True
        self.start_time = time.time() if start_time is None else float(start_time)

    def append(self, stream_id: str, timestamp: float, payload, receipt_time: float | None = None) -> None:
        """Enqueue one sample. ``receipt_time`` defaults to the wall clock;
        tests and the simulator inject synthetic receipt times."""
        if not self.started:
            raise NotStartedError(f"append to {stream_id!r} before session start")
        if self.finalized:
            raise RecorderError("session already finalized")
        stream = self._stream(stream_id)
        arr = np.asarray(payload)
        if arr.shape != stream.spec.shape:
            raise RecorderError(
                f"stream {stream_id!r}: payload shape {arr.shape} != spec {stream.spec.shape}"
            )
        arr = np.ascontiguousarray(arr, dtype=np.dtype(stream.spec.dtype))
        receipt = time.time() if receipt_time is None else float(receipt_time)
        stream.lags_ms.append((receipt - timestamp) * 1e3)
        if timestamp <= stream._last_ts:
            stream.non_monotone += 1
            warnings.warn(f"stream {stream_id!r}: non-monotone timestamp {timestamp}", stacklevel=2)
        stream._last_ts = max(stream._last_ts, timestamp)
        if len(stream.buffer) >= stream.spec.buffer_depth:
            stream.buffer.pop(0)
            stream.drops += 1
        stream.buffer.append((float(timestamp), arr))

    def drain(self, stream_id: str | None = None) -> None:
        """Move buffered samples into the persistent frame list."""
        targets = [stream_id] if stream_id is not None else list(self._streams)
        for sid in targets:
            stream = self._stream(sid)
            for ts, arr in stream.buffer:
                stream.timestamps.append(ts)
                stream.frames.append(arr)
            stream.buffer.clear()

    def latency_report(self) -> dict:
        """Per-stream arrival-lag statistics in milliseconds plus drop counts."""
        report = {}
        for sid, stream in self._streams.items():
            if not stream.lags_ms:
                report[sid] = {"note": "no samples", "drops": stream.drops}
                continue
            lags = np.asarray(stream.lags_ms)
            report[sid] = {
                "mean_ms": float(lags.mean()),
                "p95_ms": float(np.percentile(lags, 95)),
                "max_ms": float(lags.max()),
                "count": int(lags.size),
                "drops": stream.drops,
            }
        return report

    def finalize(self, align_rate_hz: float | None = None) -> "EpisodeStore":
        """Flush all buffers and write the on-disk store. On I/O failure the
        manifest is written with valid=false before the error propagates."""
        if not self.started:
            raise NotStartedError("finalize before session start")
        if self.finalized:
            raise RecorderError("session already finalized")
        self.drain()
        try:
            self._write_store(align_rate_hz)
        except OSError as e:
            try:
                manifest = {"format_version": FORMAT_VERSION, "valid": False, "error": str(e)}
                (self.out_path / "manifest.json").write_text(json.dumps(manifest, indent=1))
            except OSError:
                pass
            raise RecorderError(f"finalize failed: {e}") from e
        self.finalized = True
        store = load_store(self.out_path)
        for sid, stream in self._streams.items():
            expected = len(stream.frames)
            if store.streams[sid].timestamps.size != expected:
                raise RecorderError(f"stream {sid!r}: wrote {expected} frames but store disagrees")
        return store

    def _write_store(self, align_rate_hz: float | None) -> None:
        from . import __version__

        stream_entries = []
        for sid, stream in self._streams.items():
            order = np.argsort(np.asarray(stream.timestamps), kind="stable") if stream.timestamps else []
            ts_sorted: list[float] = []
            frames_sorted: list[np.ndarray] = []
            duplicates = 0
            for i in order:
                t = stream.timestamps[i]
                if ts_sorted and t == ts_sorted[-1]:
                    duplicates += 1  # strictly-increasing store invariant
                    continue
                ts_sorted.append(t)
                frames_sorted.append(stream.frames[i])

            sdir = self.out_path / "streams" / sid
            (sdir / "chunks").mkdir(parents=True, exist_ok=True)
            ts_arr = np.asarray(ts_sorted, dtype="<f8")
            ts_raw = ts_arr.tobytes()
            (sdir / "timestamps.bin").write_bytes(zlib.compress(ts_raw))
            chunk_entries = []
            for c in range(0, len(frames_sorted), CHUNK_FRAMES):
                block = np.stack(frames_sorted[c : c + CHUNK_FRAMES])
                raw = np.ascontiguousarray(block).tobytes()
                stored = zlib.compress(raw)
                fname = f"{c // CHUNK_FRAMES:06d}.bin"
                (sdir / "chunks" / fname).write_bytes(stored)
                chunk_entries.append(
                    {
                        "file": f"streams/{sid}/chunks/{fname}",
                        "frames": int(block.shape[0]),
                        "raw_bytes": len(raw),
                        "stored_bytes": len(stored),
                        "crc32": zlib.crc32(raw),
                    }
                )
            spec = stream.spec
            stream_entries.append(
                {
                    "id": sid,
                    "rate_hz": spec.rate_hz,
                    "shape": list(spec.shape),
                    "dtype": np.dtype(spec.dtype).str,
                    "count": len(frames_sorted),
                    "chunk_frames": CHUNK_FRAMES,
                    "chunks": chunk_entries,
                    "timestamps": {
                        "file": f"streams/{sid}/timestamps.bin",
                        "raw_bytes": len(ts_raw),
                        "crc32": zlib.crc32(ts_raw),
                    },
                    "drops": stream.drops,
                    "non_monotone": stream.non_monotone,
                    "duplicate_timestamps": duplicates,
                }
            )

        manifest = {
            "format_version": FORMAT_VERSION,
            "software_version": __version__,
            "valid": True,
            "compression": COMPRESSION,
            "start_time": self.start_time,
            "align_rate_hz": align_rate_hz,
            "meta": self.meta,
            "latency": self.latency_report(),
            "streams": stream_entries,
        }
        (self.out_path / "manifest.json").write_text(json.dumps(manifest, indent=1))


def open_session(specs: list[StreamSpec], out_path, meta: dict | None = None) -> Session:
    return Session(specs, out_path, meta)


# ---------------------------------------------------------------------------
# stores


@dataclass
class StoredStream:
    spec: StreamSpec
    timestamps: np.ndarray  # (N,) float64, strictly increasing
    frames: np.ndarray  # (N, *shape)


@dataclass
class EpisodeStore:
    path: Path
    manifest: dict
    streams: dict[str, StoredStream]

    @property
    def start_time(self) -> float:
        return float(self.manifest["start_time"])

    @property
    def meta(self) -> dict:
        return self.manifest.get("meta", {})


def load_store(path) -> EpisodeStore:
    """Load and integrity-check a finalized episode store."""
    path = Path(path)
    manifest_file = path / "manifest.json"
    if not manifest_file.exists():
        raise RecorderError(f"no manifest at {path}")
    manifest = json.loads(manifest_file.read_text())
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise RecorderError(f"store format version {version} != supported {FORMAT_VERSION}")
    if not manifest.get("valid", False):
        raise RecorderError(f"store at {path} is marked invalid: {manifest.get('error')}")
    if manifest.get("compression") != COMPRESSION:
        raise RecorderError(f"unsupported compression {manifest.get('compression')!r}")

    streams = {}
    for entry in manifest["streams"]:
        sid = entry["id"]
        dtype = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])

        ts_entry = entry["timestamps"]
        ts_stored = (path / ts_entry["file"]).read_bytes()
        ts_raw = zlib.decompress(ts_stored)
        if len(ts_raw) != ts_entry["raw_bytes"] or zlib.crc32(ts_raw) != ts_entry["crc32"]:
            raise RecorderError(f"corrupt chunk {ts_entry['file']}: checksum/size mismatch")
        timestamps = np.frombuffer(ts_raw, dtype="<f8")

        parts = []
        for chunk in entry["chunks"]:
            cfile = path / chunk["file"]
            stored = cfile.read_bytes()
            if len(stored) != chunk["stored_bytes"]:
                raise RecorderError(f"corrupt chunk {chunk['file']}: stored size mismatch")
            raw = zlib.decompress(stored)
            if len(raw) != chunk["raw_bytes"] or zlib.crc32(raw) != chunk["crc32"]:
                raise RecorderError(f"corrupt chunk {chunk['file']}: checksum mismatch")
            parts.append(np.frombuffer(raw, dtype=dtype).reshape((chunk["frames"], *shape)))
        frames = np.concatenate(parts) if parts else np.empty((0, *shape), dtype=dtype)

        if frames.shape[0] != entry["count"] or timestamps.size != entry["count"]:
            raise RecorderError(f"stream {sid!r}: frame count mismatch against manifest")
        if timestamps.size > 1 and not (np.diff(timestamps) > 0).all():
            raise RecorderError(f"stream {sid!r}: timestamps are not strictly increasing")
        spec = StreamSpec(sid, entry["rate_hz"], shape, dtype.str)
        streams[sid] = StoredStream(spec, timestamps, frames)

    return EpisodeStore(path, manifest, streams)


# ---------------------------------------------------------------------------
# alignment


@dataclass
class AlignedEpisode:
    """All streams resampled onto a common frame clock.

    Every retained frame satisfies |source timestamp - frame time| <= half
    the source stream's period, for every stream.
    """

    rate_hz: float
    frame_times: np.ndarray  # (F,)
    samples: dict[str, np.ndarray]  # id -> (F, *shape)
    source_timestamps: dict[str, np.ndarray]  # id -> (F,)
    dropped_frames: int

    @property
    def num_frames(self) -> int:
        return int(self.frame_times.size)


def align_streams(store: EpisodeStore, rate_hz: float) -> AlignedEpisode:
    """Nearest-neighbor alignment of all streams at ``rate_hz``.

    Frame k sits at start_time + k/rate. Frames where any stream's nearest
    sample deviates more than half that stream's period are dropped (actions
    are never interpolated or invented).
    """
    if rate_hz <= 0:
        raise RecorderError("alignment rate must be positive")
    slowest = min(s.spec.rate_hz for s in store.streams.values())
    if rate_hz > slowest:
        warnings.warn(
            f"alignment rate {rate_hz} Hz exceeds slowest stream rate {slowest} Hz", stacklevel=2
        )
    for sid, s in store.streams.items():
        if s.timestamps.size == 0:
            raise RecorderError(f"cannot align: stream {sid!r} is empty")

    start = store.start_time
    end = min(s.timestamps[-1] + 0.5 * s.spec.period for s in store.streams.values())
    n_candidates = int(math.floor((end - start) * rate_hz + 1e-9)) + 1
    if n_candidates <= 0:
        raise RecorderError("no overlapping coverage across streams")
    times = start + np.arange(n_candidates) / rate_hz

    keep = np.ones(n_candidates, dtype=bool)
    picked: dict[str, np.ndarray] = {}
    for sid, s in store.streams.items():
        ts = s.timestamps
        idx = np.searchsorted(ts, times)
        idx_lo = np.clip(idx - 1, 0, ts.size - 1)
        idx_hi = np.clip(idx, 0, ts.size - 1)
        nearest = np.where(np.abs(ts[idx_hi] - times) < np.abs(times - ts[idx_lo]), idx_hi, idx_lo)
        dev = np.abs(ts[nearest] - times)
        keep &= dev <= 0.5 * s.spec.period + 1e-12
        picked[sid] = nearest

    samples = {sid: s.frames[picked[sid][keep]] for sid, s in store.streams.items()}
    source_ts = {sid: s.timestamps[picked[sid][keep]] for sid, s in store.streams.items()}
    return AlignedEpisode(
        rate_hz=rate_hz,
        frame_times=times[keep],
        samples=samples,
        source_timestamps=source_ts,
        dropped_frames=int((~keep).sum()),
    )


def load_episode(path, rate_hz: float | None = None) -> AlignedEpisode:
    """Load a store and align it, defaulting to the rate recorded at capture."""
    store = load_store(path)
    if rate_hz is None:
        rate_hz = store.manifest.get("align_rate_hz")
        if rate_hz is None:
            raise RecorderError("store has no recorded alignment rate; pass rate_hz explicitly")
    return align_streams(store, float(rate_hz))
