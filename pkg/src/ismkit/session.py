"""Chunked `.isms` recording container and paced replay.

One session file holds synchronized vibration, pose and intensity streams:

    header : "ISMS" | version u16 | sample_rate f64 | channels u8
             | segment_ms f64 | model_id_len u16 | model_id utf-8
    chunks : fourcc | length u32 | payload   (repeated until EOF)

Defined chunk tags: VIBR (interleaved float32 frames), POSE (36-byte records
u64 t_us + 7 x f32), INTS (u64 t_us + f32), META (utf-8 key=value lines).
Unknown tags are skipped on read and preserved on rewrite, so future
recorders can extend the format without breaking old tooling.
"""

from __future__ import annotations

import csv
import math
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, FileFormatError
from .trajectory import PoseSample

MAGIC = b"ISMS"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sHdBdH")
_CHUNK_HEADER = struct.Struct("<4sI")
_POSE_RECORD = struct.Struct("<Q7f")
_INTS_RECORD = struct.Struct("<Qf")

TAG_VIBRATION = b"VIBR"
TAG_POSE = b"POSE"
TAG_INTENSITY = b"INTS"
TAG_META = b"META"


@dataclass
class ReplayClock:
    """Pacing: wall-clock time = timestamp deltas / speed. speed=inf disables pacing."""

    speed: float = 1.0
    start_offset_s: float = 0.0

    def __post_init__(self):
        if not self.speed > 0:
            raise DataError(f"replay speed must be positive, got {self.speed}")
        if self.start_offset_s < 0:
            raise DataError("start offset must be non-negative")


class SessionWriter:
    """Incremental session recorder; buffers streams and flushes them as chunks."""

    def __init__(self, path, sample_rate_hz: float = 5000.0, channels: int = 4,
                 segment_ms: float = 5.0, model_id: str = ""):
        if channels < 1 or channels > 255:
            raise DataError(f"channel count {channels} out of range")
        self.path = path
        self.sample_rate_hz = float(sample_rate_hz)
        self.channels = channels
        self.segment_ms = float(segment_ms)
        self.model_id = model_id
        self._fh = open(path, "wb")
        ident = model_id.encode("utf-8")
        self._fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, self.sample_rate_hz,
                                    channels, self.segment_ms, len(ident)) + ident)
        self._vib: list[np.ndarray] = []
        self._poses: list[PoseSample] = []
        self._ints: list[tuple[int, float]] = []
        self._meta: dict[str, str] = {}
        self._last_pose_t: int | None = None
        self._last_ints_t: int | None = None
        self._counts = {"VIBR": 0, "POSE": 0, "INTS": 0}

    def append_vibration(self, frames: np.ndarray) -> None:
        """Append interleaved sample frames, shape (n,) for mono or (n, channels)."""
        arr = np.asarray(frames, dtype=np.float32)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[1] != self.channels:
            raise DataError(
                f"vibration frames must have {self.channels} channels, got shape {arr.shape}")
        self._vib.append(np.ascontiguousarray(arr))
        self._counts["VIBR"] += arr.shape[0]

    def append_pose(self, pose: PoseSample) -> None:
        if self._last_pose_t is not None and pose.t_us < self._last_pose_t:
            raise DataError(
                f"pose timestamp regression: {pose.t_us} after {self._last_pose_t}")
        self._last_pose_t = pose.t_us
        self._poses.append(pose)
        self._counts["POSE"] += 1

    def append_intensity(self, t_us: int, intensity: float) -> None:
        t_us = int(t_us)
        if self._last_ints_t is not None and t_us < self._last_ints_t:
            raise DataError(
                f"intensity timestamp regression: {t_us} after {self._last_ints_t}")
        if not math.isfinite(intensity):
            raise DataError(f"intensity must be finite, got {intensity}")
        self._last_ints_t = t_us
        self._ints.append((t_us, float(intensity)))
        self._counts["INTS"] += 1

    def add_meta(self, key: str, value: str) -> None:
        if "=" in key or "\n" in key or "\n" in value:
            raise DataError("meta keys/values must not contain '=' in key or newlines")
        self._meta[key] = value

    def _write_chunk(self, tag: bytes, payload: bytes) -> None:
        self._fh.write(_CHUNK_HEADER.pack(tag, len(payload)))
        self._fh.write(payload)

    def flush(self) -> None:
        """Write buffered data out as one chunk per stream type."""
        if self._vib:
            payload = np.concatenate(self._vib, axis=0).astype("<f4").tobytes()
            self._write_chunk(TAG_VIBRATION, payload)
            self._vib.clear()
        if self._poses:
            payload = b"".join(
                _POSE_RECORD.pack(p.t_us, *p.position, *p.orientation)
                for p in self._poses)
            self._write_chunk(TAG_POSE, payload)
            self._poses.clear()
        if self._ints:
            payload = b"".join(_INTS_RECORD.pack(t, v) for t, v in self._ints)
            self._write_chunk(TAG_INTENSITY, payload)
            self._ints.clear()
        if self._meta:
            text = "".join(f"{k}={v}\n" for k, v in self._meta.items())
            self._write_chunk(TAG_META, text.encode("utf-8"))
            self._meta.clear()
        self._fh.flush()

    def close(self) -> dict:
        """Flush and close; returns per-stream counts and durations."""
        self.flush()
        self._fh.close()
        summary = {
            "vibration_samples": self._counts["VIBR"],
            "vibration_duration_s": self._counts["VIBR"] / self.sample_rate_hz,
            "poses": self._counts["POSE"],
            "intensities": self._counts["INTS"],
        }
        return summary

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class Session:
    """A parsed session file."""

    sample_rate_hz: float
    channels: int
    segment_ms: float
    model_id: str
    vibration: np.ndarray  # (n, channels) float32
    poses: list[PoseSample]
    intensities: np.ndarray  # structured-free: (n, 2) columns t_us, value
    meta: dict[str, str]
    extra_chunks: list[tuple[bytes, bytes]] = field(default_factory=list)

    @classmethod
    def open(cls, path) -> "Session":
        with open(path, "rb") as fh:
            head = fh.read(_HEADER.size)
            if len(head) < _HEADER.size:
                raise FileFormatError(f"{path}: truncated header")
            magic, version, rate, channels, segment_ms, ident_len = _HEADER.unpack(head)
            if magic != MAGIC:
                raise FileFormatError(f"{path}: not a session file (bad magic)")
            if version != FORMAT_VERSION:
                raise FileFormatError(f"{path}: unsupported format version {version}")
            ident = fh.read(ident_len)
            if len(ident) < ident_len:
                raise FileFormatError(f"{path}: truncated model identifier")

            vib_parts: list[np.ndarray] = []
            poses: list[PoseSample] = []
            ints: list[tuple[int, float]] = []
            meta: dict[str, str] = {}
            extra: list[tuple[bytes, bytes]] = []
            while True:
                chunk_head = fh.read(_CHUNK_HEADER.size)
                if not chunk_head:
                    break
                if len(chunk_head) < _CHUNK_HEADER.size:
                    raise FileFormatError(f"{path}: truncated chunk header")
                tag, length = _CHUNK_HEADER.unpack(chunk_head)
                payload = fh.read(length)
                if len(payload) < length:
                    raise FileFormatError(
                        f"{path}: chunk {tag.decode('ascii', 'replace')} of length "
                        f"{length} overruns the file")
                if tag == TAG_VIBRATION:
                    if length % (4 * channels):
                        raise FileFormatError(f"{path}: VIBR length not a frame multiple")
                    vib_parts.append(
                        np.frombuffer(payload, dtype="<f4").reshape(-1, channels))
                elif tag == TAG_POSE:
                    if length % _POSE_RECORD.size:
                        raise FileFormatError(f"{path}: POSE length not a record multiple")
                    for rec in _POSE_RECORD.iter_unpack(payload):
                        poses.append(PoseSample(rec[0], np.array(rec[1:4]),
                                                np.array(rec[4:8])))
                elif tag == TAG_INTENSITY:
                    if length % _INTS_RECORD.size:
                        raise FileFormatError(f"{path}: INTS length not a record multiple")
                    ints.extend(_INTS_RECORD.iter_unpack(payload))
                elif tag == TAG_META:
                    for line in payload.decode("utf-8").splitlines():
                        if line:
                            key, _, value = line.partition("=")
                            meta[key] = value
                else:
                    extra.append((tag, payload))

        vibration = (np.concatenate(vib_parts, axis=0) if vib_parts
                     else np.zeros((0, channels), dtype=np.float32))
        intensities = (np.array(ints, dtype=np.float64)
                       if ints else np.zeros((0, 2)))
        return cls(sample_rate_hz=rate, channels=channels, segment_ms=segment_ms,
                   model_id=ident.decode("utf-8"), vibration=vibration, poses=poses,
                   intensities=intensities, meta=meta, extra_chunks=extra)

    def save(self, path) -> None:
        """Rewrite the session, preserving unknown chunks verbatim."""
        writer = SessionWriter(path, self.sample_rate_hz, self.channels,
                               self.segment_ms, self.model_id)
        if self.vibration.size:
            writer.append_vibration(self.vibration)
        for pose in self.poses:
            writer.append_pose(pose)
        for t_us, value in self.intensities:
            writer.append_intensity(int(t_us), float(value))
        for key, value in self.meta.items():
            writer.add_meta(key, value)
        writer.flush()
        for tag, payload in self.extra_chunks:
            writer._write_chunk(tag, payload)
        writer.close()


def record(path, *, vibration: np.ndarray | None = None,
           poses: list[PoseSample] | None = None,
           intensities: list[tuple[int, float]] | None = None,
           meta: dict[str, str] | None = None,
           sample_rate_hz: float = 5000.0, channels: int | None = None,
           segment_ms: float = 5.0, model_id: str = "") -> dict:
    """One-shot session recording; returns the writer's summary."""
    if channels is None:
        if vibration is not None and np.asarray(vibration).ndim == 2:
            channels = np.asarray(vibration).shape[1]
        else:
            channels = 1
    writer = SessionWriter(path, sample_rate_hz, channels, segment_ms, model_id)
    if vibration is not None and np.asarray(vibration).size:
        writer.append_vibration(vibration)
    for pose in poses or []:
        writer.append_pose(pose)
    for t_us, value in intensities or []:
        writer.append_intensity(t_us, value)
    for key, value in (meta or {}).items():
        writer.add_meta(key, value)
    return writer.close()


@dataclass
class ReplayReport:
    poses_delivered: int = 0
    intensities_delivered: int = 0
    wall_time_s: float = 0.0


def replay(session: Session, clock: ReplayClock | None = None,
           on_pose=None, on_intensity=None) -> ReplayReport:
    """Deliver pose and intensity events in global timestamp order, paced.

    Ties are broken by a fixed priority (POSE before INTS). Events earlier
    than the clock's start offset are skipped. With speed=inf events are
    delivered as fast as possible in the identical order.
    """
    clock = clock or ReplayClock()
    events: list[tuple[int, int, str, object]] = []
    for pose in session.poses:
        events.append((pose.t_us, 0, "pose", pose))
    for t_us, value in session.intensities:
        events.append((int(t_us), 1, "intensity", float(value)))
    events.sort(key=lambda e: (e[0], e[1]))

    report = ReplayReport()
    start_wall = time.monotonic()
    if events:
        t0 = events[0][0] + int(clock.start_offset_s * 1e6)
        paced = math.isfinite(clock.speed)
        for t_us, _, kind, payload in events:
            if t_us < t0:
                continue
            if paced:
                target = start_wall + (t_us - t0) / 1e6 / clock.speed
                delay = target - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
            if kind == "pose":
                report.poses_delivered += 1
                if on_pose is not None:
                    on_pose(payload)
            else:
                report.intensities_delivered += 1
                if on_intensity is not None:
                    on_intensity(t_us, payload)
    report.wall_time_s = time.monotonic() - start_wall
    return report


def export_intensity_csv(session: Session, path) -> None:
    """Write the INTS stream as `t_s,intensity` rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_s", "intensity"])
        for t_us, value in session.intensities:
            writer.writerow([f"{t_us / 1e6:.6f}", f"{value:.9g}"])


def export_pose_csv(session: Session, path) -> None:
    """Write the POSE stream in the trajectory CSV schema."""
    from .trajectory import save_pose_csv
    save_pose_csv(session.poses, path)
