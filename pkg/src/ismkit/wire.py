"""ISMP/1: the measurement-to-visualization streaming protocol.

Framing is magic-prefixed and length-prefixed, little-endian throughout:

    header : "ISMP" | msg_type u8 | payload_len u32          (9 bytes)
    Hello  : version u8 | channels u8 | sample_rate u32 | segment_ms_x10 u16
    Frame  : t_us u64 | position 3xf32 | quaternion 4xf32 | intensity f32
             | rgb 3xu8 | pad 2xu8 = 0                       (45 bytes)
    IntensityOnly : t_us u64 | intensity f32                 (12 bytes)
    End    : empty payload

The decoder never raises on arbitrary bytes: it reports need-more-bytes, a
message, or an error, and always makes progress once a non-decodable prefix
is present. Desync recovery scans forward to the next magic. The sender runs
a bounded queue with drop-oldest backpressure: when a live consumer lags,
stale frames are discarded (and counted) rather than delaying fresh ones;
control messages (Hello/End) are never dropped.
"""

from __future__ import annotations

import math
import socket
import struct
import threading
import time
from collections import deque
from dataclasses import dataclass, field

from .errors import DataError, ProtocolError

MAGIC = b"ISMP"
PROTOCOL_VERSION = 1
HEADER_SIZE = 9
MAX_SKIP_PAYLOAD = 65535

TYPE_HELLO = 1
TYPE_FRAME = 2
TYPE_INTENSITY = 3
TYPE_END = 4

_HEADER = struct.Struct("<4sBI")
_HELLO = struct.Struct("<BBIH")
_FRAME = struct.Struct("<Q8f5B")
_INTENSITY = struct.Struct("<Qf")

PAYLOAD_SIZES = {
    TYPE_HELLO: _HELLO.size,
    TYPE_FRAME: _FRAME.size,
    TYPE_INTENSITY: _INTENSITY.size,
    TYPE_END: 0,
}


def _f32(value: float, what: str) -> float:
    v = float(value)
    packed = struct.unpack("<f", struct.pack("<f", v))[0]
    if not math.isfinite(packed):
        raise DataError(f"{what} is not a finite float32: {value}")
    return packed


def _u(value: int, bits: int, what: str) -> int:
    v = int(value)
    if not 0 <= v < (1 << bits):
        raise DataError(f"{what} out of range for u{bits}: {value}")
    return v


@dataclass(frozen=True)
class Hello:
    channels: int
    sample_rate_hz: int
    segment_ms_x10: int
    version: int = PROTOCOL_VERSION

    def __post_init__(self):
        object.__setattr__(self, "version", _u(self.version, 8, "version"))
        object.__setattr__(self, "channels", _u(self.channels, 8, "channels"))
        object.__setattr__(self, "sample_rate_hz", _u(self.sample_rate_hz, 32, "sample_rate_hz"))
        object.__setattr__(self, "segment_ms_x10", _u(self.segment_ms_x10, 16, "segment_ms_x10"))


@dataclass(frozen=True)
class Frame:
    """One visualization sample. Float fields are stored at float32 precision."""

    t_us: int
    position: tuple[float, float, float]
    quaternion: tuple[float, float, float, float]
    intensity: float
    rgb: tuple[int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "t_us", _u(self.t_us, 64, "t_us"))
        pos = tuple(_f32(v, "position") for v in self.position)
        quat = tuple(_f32(v, "quaternion") for v in self.quaternion)
        if len(pos) != 3 or len(quat) != 4:
            raise DataError("Frame needs a 3-vector position and 4-vector quaternion")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "quaternion", quat)
        object.__setattr__(self, "intensity", _f32(self.intensity, "intensity"))
        rgb = tuple(_u(c, 8, "rgb") for c in self.rgb)
        if len(rgb) != 3:
            raise DataError("rgb must have 3 components")
        object.__setattr__(self, "rgb", rgb)


@dataclass(frozen=True)
class IntensityOnly:
    t_us: int
    intensity: float

    def __post_init__(self):
        object.__setattr__(self, "t_us", _u(self.t_us, 64, "t_us"))
        object.__setattr__(self, "intensity", _f32(self.intensity, "intensity"))


@dataclass(frozen=True)
class End:
    pass


WireMessage = Hello | Frame | IntensityOnly | End


def encode(message: WireMessage) -> bytes:
    """Serialize a message: header then fixed-layout payload."""
    if isinstance(message, Hello):
        payload = _HELLO.pack(message.version, message.channels,
                              message.sample_rate_hz, message.segment_ms_x10)
        msg_type = TYPE_HELLO
    elif isinstance(message, Frame):
        payload = _FRAME.pack(message.t_us, *message.position, *message.quaternion,
                              message.intensity, *message.rgb, 0, 0)
        msg_type = TYPE_FRAME
    elif isinstance(message, IntensityOnly):
        payload = _INTENSITY.pack(message.t_us, message.intensity)
        msg_type = TYPE_INTENSITY
    elif isinstance(message, End):
        payload = b""
        msg_type = TYPE_END
    else:
        raise DataError(f"not a wire message: {message!r}")
    return _HEADER.pack(MAGIC, msg_type, len(payload)) + payload


@dataclass(frozen=True)
class DecodeResult:
    """Outcome of one decode step.

    Exactly one of three shapes: a message (consumed > 0), an error string
    (consumed > 0, stream position advanced), or need-more-bytes (message and
    error both None; consumed counts any garbage skipped while resyncing).
    """

    message: WireMessage | None
    consumed: int
    skipped: int = 0
    error: str | None = None

    @property
    def needs_more(self) -> bool:
        return self.message is None and self.error is None


def _magic_prefix_keep(data) -> int:
    """Length of the longest suffix of data that is a proper prefix of MAGIC."""
    for keep in range(min(len(data), len(MAGIC) - 1), 0, -1):
        if data[-keep:] == MAGIC[:keep]:
            return keep
    return 0


def decode(data: bytes | bytearray | memoryview) -> DecodeResult:
    """Decode one message from the front of a byte buffer.

    Garbage before a magic is skipped (counted in `skipped` and `consumed`).
    Header-level problems return an error result that still advances the
    stream: unknown types skip their declared payload when it is present and
    sane (<= 64 KiB), otherwise just the header; a length mismatch on a known
    type abandons the header as a desync and advances past the magic.
    """
    buf = bytes(data)
    idx = buf.find(MAGIC)
    if idx == -1:
        keep = _magic_prefix_keep(buf)
        consumed = len(buf) - keep
        if consumed == 0:
            return DecodeResult(None, 0)
        return DecodeResult(None, consumed, skipped=consumed, error="bad-magic")
    skipped = idx
    rest = buf[idx:]
    if len(rest) < HEADER_SIZE:
        return DecodeResult(None, skipped, skipped=skipped)
    _, msg_type, payload_len = _HEADER.unpack_from(rest)

    expected = PAYLOAD_SIZES.get(msg_type)
    if expected is None:
        if payload_len <= MAX_SKIP_PAYLOAD and len(rest) >= HEADER_SIZE + payload_len:
            consumed = skipped + HEADER_SIZE + payload_len
        else:
            consumed = skipped + HEADER_SIZE
        return DecodeResult(None, consumed, skipped=skipped,
                            error=f"unknown-type:{msg_type}")
    if payload_len != expected:
        return DecodeResult(None, skipped + len(MAGIC), skipped=skipped,
                            error="length-mismatch")
    total = HEADER_SIZE + expected
    if len(rest) < total:
        return DecodeResult(None, skipped, skipped=skipped)
    payload = rest[HEADER_SIZE:total]
    consumed = skipped + total

    try:
        if msg_type == TYPE_HELLO:
            version, channels, rate, seg = _HELLO.unpack(payload)
            if version != PROTOCOL_VERSION:
                return DecodeResult(None, consumed, skipped=skipped,
                                    error=f"version-mismatch:{version}")
            message: WireMessage = Hello(channels, rate, seg, version=version)
        elif msg_type == TYPE_FRAME:
            fields = _FRAME.unpack(payload)
            message = Frame(t_us=fields[0], position=fields[1:4],
                            quaternion=fields[4:8], intensity=fields[8],
                            rgb=fields[9:12])
        elif msg_type == TYPE_INTENSITY:
            t_us, intensity = _INTENSITY.unpack(payload)
            message = IntensityOnly(t_us, intensity)
        else:
            message = End()
    except DataError as exc:
        return DecodeResult(None, consumed, skipped=skipped, error=f"bad-field:{exc}")
    return DecodeResult(message, consumed, skipped=skipped)


class Decoder:
    """Incremental stream decoder with resync statistics."""

    def __init__(self):
        self._buf = bytearray()
        self.resync_bytes = 0
        self.errors: list[str] = []

    def feed(self, data: bytes) -> list[WireMessage]:
        self._buf.extend(data)
        messages: list[WireMessage] = []
        while True:
            result = decode(self._buf)
            if result.consumed:
                del self._buf[:result.consumed]
            self.resync_bytes += result.skipped
            if result.error is not None:
                self.errors.append(result.error)
            if result.message is not None:
                messages.append(result.message)
            elif result.consumed == 0:
                return messages

    def pending(self) -> int:
        return len(self._buf)


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, sep, port = endpoint.rpartition(":")
    if not sep or not host:
        raise DataError(f"endpoint must be host:port, got {endpoint!r}")
    try:
        return host, int(port)
    except ValueError:
        raise DataError(f"endpoint port is not an integer: {endpoint!r}") from None


def _droppable(message: WireMessage) -> bool:
    return isinstance(message, (Frame, IntensityOnly))


@dataclass
class SenderReport:
    sent: int
    drops: int
    error: str | None = None


class FrameSender:
    """Queued protocol sender over a stream socket.

    Messages pile into a bounded FIFO drained by a writer thread; when the
    queue is full the oldest droppable message makes way (drop-oldest), so a
    stalled visualization consumer sees the newest state when it recovers.
    Hello and End are never dropped. Construct without an endpoint to queue
    offline, then call connect().
    """

    def __init__(self, endpoint: str | None = None, queue_capacity: int = 256,
                 policy: str = "drop-oldest", reconnect_attempts: int = 0,
                 connect_timeout: float = 5.0):
        if queue_capacity < 1:
            raise DataError("queue capacity must be >= 1")
        if policy not in ("drop-oldest", "block"):
            raise DataError(f"unknown queue policy {policy!r}")
        self._capacity = queue_capacity
        self._policy = policy
        self._reconnect_attempts = reconnect_attempts
        self._connect_timeout = connect_timeout
        self._queue: deque[WireMessage] = deque()
        self._n_droppable = 0  # capacity bounds frames; control messages ride along
        self._lock = threading.Lock()
        self._wake = threading.Condition(self._lock)
        self._sock: socket.socket | None = None
        self._thread: threading.Thread | None = None
        self._closing = False
        self._endpoint: str | None = None
        self.sent = 0
        self.drops = 0
        self.error: str | None = None
        if endpoint is not None:
            self.connect(endpoint)

    def connect(self, endpoint: str) -> None:
        host, port = parse_endpoint(endpoint)
        self._endpoint = endpoint
        try:
            self._sock = socket.create_connection((host, port), timeout=self._connect_timeout)
        except OSError as exc:
            raise ProtocolError(f"cannot connect to {endpoint}: {exc}") from exc
        self._sock.settimeout(None)
        self._thread = threading.Thread(target=self._drain, name="ismp-sender", daemon=True)
        self._thread.start()

    def send(self, message: WireMessage) -> None:
        with self._lock:
            if _droppable(message):
                if self._n_droppable >= self._capacity:
                    if self._policy == "block" and self._thread is not None:
                        while (self._n_droppable >= self._capacity
                               and self.error is None and not self._closing):
                            self._wake.wait()
                    else:
                        for i, queued in enumerate(self._queue):
                            if _droppable(queued):
                                del self._queue[i]
                                self._n_droppable -= 1
                                self.drops += 1
                                break
                self._n_droppable += 1
            self._queue.append(message)
            self._wake.notify_all()

    def _drain(self) -> None:
        while True:
            with self._lock:
                while not self._queue and not self._closing:
                    self._wake.wait()
                if not self._queue:
                    return
                message = self._queue.popleft()
                if _droppable(message):
                    self._n_droppable -= 1
                self._wake.notify_all()
            payload = encode(message)
            try:
                self._sock.sendall(payload)
                self.sent += 1
            except OSError as exc:
                if not self._try_reconnect(payload):
                    with self._lock:
                        self.error = str(exc)
                        self._queue.clear()
                        self._wake.notify_all()
                    return

    def _try_reconnect(self, pending_payload: bytes) -> bool:
        for attempt in range(self._reconnect_attempts):
            time.sleep(min(0.1 * (attempt + 1), 1.0))
            try:
                host, port = parse_endpoint(self._endpoint)
                self._sock = socket.create_connection((host, port),
                                                      timeout=self._connect_timeout)
                self._sock.settimeout(None)
                self._sock.sendall(pending_payload)
                self.sent += 1
                return True
            except OSError:
                continue
        return False

    def close(self, send_end: bool = True, timeout: float = 10.0) -> SenderReport:
        """Flush the queue (optionally appending End), stop the writer, report."""
        if send_end and self._sock is not None and self.error is None:
            self.send(End())
        with self._lock:
            self._closing = True
            self._wake.notify_all()
        if self._thread is not None:
            self._thread.join(timeout)
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
        return SenderReport(sent=self.sent, drops=self.drops, error=self.error)


@dataclass
class ReceiverStats:
    messages: int = 0
    frames: int = 0
    resync_bytes: int = 0
    decode_errors: list[str] = field(default_factory=list)
    got_end: bool = False


class Listener:
    """Bound listening socket for the receiving side (port 0 picks a free port)."""

    def __init__(self, endpoint: str):
        host, port = parse_endpoint(endpoint)
        self._server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._server.bind((host, port))
        self._server.listen(1)

    @property
    def endpoint(self) -> str:
        host, port = self._server.getsockname()[:2]
        return f"{host}:{port}"

    def receive(self, on_message, accept_timeout: float = 30.0) -> ReceiverStats:
        """Accept one connection and deliver decoded messages in order.

        Enforces that a Hello arrives before any Frame/IntensityOnly;
        violations raise ProtocolError. Returns when End arrives or the
        peer disconnects.
        """
        self._server.settimeout(accept_timeout)
        try:
            conn, _ = self._server.accept()
        except socket.timeout:
            raise ProtocolError("no sender connected before timeout") from None
        stats = ReceiverStats()
        decoder = Decoder()
        hello_seen = False
        try:
            with conn:
                while True:
                    data = conn.recv(65536)
                    if not data:
                        break
                    for message in decoder.feed(data):
                        if isinstance(message, (Frame, IntensityOnly)) and not hello_seen:
                            raise ProtocolError(
                                "protocol violation: data frame before Hello")
                        if isinstance(message, Hello):
                            hello_seen = True
                        stats.messages += 1
                        if isinstance(message, Frame):
                            stats.frames += 1
                        on_message(message)
                        if isinstance(message, End):
                            stats.got_end = True
                            return stats
            return stats
        finally:
            stats.resync_bytes = decoder.resync_bytes
            stats.decode_errors = decoder.errors
            self._server.close()
