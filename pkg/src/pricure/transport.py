"""Wire framing and delivery: in-process loopback and TCP sockets.

Every message travels in one frame:

    magic "PRCR" | version u8 | type u8 | session id (16 bytes) |
    sequence u64 LE | payload length u64 LE | payload

Tensors inside payloads serialize as rank u32 LE, each dim u32 LE, then
row-major 8-byte little-endian elements.  See protocol.md for the payload
schema of every message type.
"""

from __future__ import annotations

import queue
import socket
import struct
import threading
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

MAGIC = b"PRCR"
VERSION = 1
HEADER = struct.Struct("<4sBB16sQQ")
MAX_PAYLOAD = 1 << 32  # 4 GiB sanity bound on the length field


class MessageType(IntEnum):
    HELLO = 1
    MODEL_SHARES = 2
    INPUT_SHARES = 3
    MATERIAL_REQUEST = 4
    MATERIAL_REPLY = 5
    OPEN_VALUES = 6
    SIGN_REQUEST = 7
    SIGN_REPLY = 8
    PARTIAL_RESULT = 9
    CLIENT_KEY = 10
    SEALED_RESULT = 11
    HEARTBEAT = 12
    ERROR = 13
    BYE = 14


class TransportError(Exception):
    """Retryable delivery failure (timeouts, resets), not a protocol bug."""


class RecvTimeout(TransportError):
    pass


class ConnectionClosed(TransportError):
    pass


class FrameParseError(Exception):
    """Malformed bytes on the wire; carries a stable error code."""

    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}{': ' + detail if detail else ''}")
        self.code = code


class SequenceError(Exception):
    """Out-of-order or replayed frame on an ordered connection."""


@dataclass(frozen=True)
class Frame:
    msg_type: int
    session_id: bytes
    seq: int
    payload: bytes = b""


def encode_frame(frame: Frame) -> bytes:
    if len(frame.session_id) != 16:
        raise FrameParseError("bad-session", "session id must be 16 bytes")
    return HEADER.pack(MAGIC, VERSION, int(frame.msg_type), frame.session_id,
                       frame.seq, len(frame.payload)) + frame.payload


class FrameParser:
    """Incremental frame decoder; byte-chunk boundaries never matter."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[Frame]:
        self._buf.extend(data)
        frames = []
        while True:
            frame = self._try_parse()
            if frame is None:
                return frames
            frames.append(frame)

    def _try_parse(self):
        if len(self._buf) < HEADER.size:
            return None
        magic, version, msg_type, session_id, seq, length = HEADER.unpack_from(self._buf)
        if magic != MAGIC:
            raise FrameParseError("bad-magic", magic.hex())
        if version != VERSION:
            raise FrameParseError("bad-version", str(version))
        if msg_type not in MessageType._value2member_map_:
            raise FrameParseError("unknown-type", str(msg_type))
        if length > MAX_PAYLOAD:
            raise FrameParseError("length-overflow", str(length))
        if len(self._buf) < HEADER.size + length:
            return None
        payload = bytes(self._buf[HEADER.size:HEADER.size + length])
        del self._buf[:HEADER.size + length]
        return Frame(MessageType(msg_type), session_id, seq, payload)

    def pending(self) -> int:
        return len(self._buf)


def parse_complete(data: bytes) -> Frame:
    """Decode exactly one frame; short reads are an error."""
    parser = FrameParser()
    frames = parser.feed(data)
    if not frames or parser.pending():
        raise FrameParseError("short-read", f"{len(data)} bytes")
    if len(frames) != 1:
        raise FrameParseError("trailing-data", f"{len(frames)} frames")
    return frames[0]


# -- tensor / field helpers -------------------------------------------------

def pack_u32(v: int) -> bytes:
    return struct.pack("<I", v)


def pack_u64(v: int) -> bytes:
    return struct.pack("<Q", v)


def pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return pack_u32(len(raw)) + raw


def pack_tensor(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr, dtype=np.uint64)
    head = pack_u32(arr.ndim) + b"".join(pack_u32(d) for d in arr.shape)
    return head + (arr.astype("<u8")).tobytes()


def pack_tensors(arrays) -> bytes:
    arrays = list(arrays)
    return pack_u32(len(arrays)) + b"".join(pack_tensor(a) for a in arrays)


class Reader:
    """Cursor over a payload; raises FrameParseError on truncation."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FrameParseError("short-read", "payload truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")

    def tensor(self) -> np.ndarray:
        rank = self.u32()
        if rank > 32:
            raise FrameParseError("bad-tensor", f"rank {rank}")
        shape = tuple(self.u32() for _ in range(rank))
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = self.take(8 * count)
        return np.frombuffer(raw, dtype="<u8").astype(np.uint64).reshape(shape)

    def tensors(self) -> list[np.ndarray]:
        return [self.tensor() for _ in range(self.u32())]

    def done(self):
        if self.pos != len(self.data):
            raise FrameParseError("trailing-data", f"{len(self.data) - self.pos} bytes left")


# -- connections ------------------------------------------------------------

class Connection:
    """Ordered, reliable frame delivery with per-direction sequence numbers."""

    def __init__(self, session_id: bytes):
        self.session_id = session_id
        self._send_seq = 0
        self._recv_seq = 0
        self._lock = threading.Lock()

    def send(self, msg_type: int, payload: bytes = b""):
        with self._lock:
            frame = Frame(msg_type, self.session_id, self._send_seq, payload)
            self._send_seq += 1
        self._send_bytes(encode_frame(frame))

    def recv(self, timeout: float | None = None) -> Frame:
        frame = self._recv_frame(timeout)
        if frame.session_id != self.session_id:
            raise SequenceError("frame for a different session")
        if frame.seq != self._recv_seq:
            raise SequenceError(f"expected seq {self._recv_seq}, got {frame.seq}")
        self._recv_seq += 1
        return frame

    def _send_bytes(self, data: bytes):
        raise NotImplementedError

    def _recv_frame(self, timeout) -> Frame:
        raise NotImplementedError

    def close(self):
        pass


class LoopbackConnection(Connection):
    """One end of an in-process duplex pipe; bytes still cross the parser."""

    def __init__(self, session_id, inbox: queue.Queue, outbox: queue.Queue):
        super().__init__(session_id)
        self._inbox = inbox
        self._outbox = outbox
        self._parser = FrameParser()
        self._ready: list[Frame] = []

    def _send_bytes(self, data):
        self._outbox.put(data)

    def _recv_frame(self, timeout):
        while not self._ready:
            try:
                chunk = self._inbox.get(timeout=timeout)
            except queue.Empty:
                raise RecvTimeout("loopback recv deadline exceeded") from None
            if chunk is None:
                raise ConnectionClosed("loopback peer closed")
            self._ready.extend(self._parser.feed(chunk))
        return self._ready.pop(0)

    def close(self):
        self._outbox.put(None)


def loopback_pair(session_id: bytes) -> tuple[LoopbackConnection, LoopbackConnection]:
    ab: queue.Queue = queue.Queue()
    ba: queue.Queue = queue.Queue()
    return (LoopbackConnection(session_id, ba, ab),
            LoopbackConnection(session_id, ab, ba))


class TcpConnection(Connection):
    def __init__(self, session_id, sock: socket.socket):
        super().__init__(session_id)
        self._sock = sock
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._parser = FrameParser()
        self._ready: list[Frame] = []

    def _send_bytes(self, data):
        try:
            self._sock.sendall(data)
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from exc

    def _recv_frame(self, timeout):
        while not self._ready:
            self._sock.settimeout(timeout)
            try:
                chunk = self._sock.recv(1 << 20)
            except socket.timeout:
                raise RecvTimeout("tcp recv deadline exceeded") from None
            except OSError as exc:
                raise TransportError(f"recv failed: {exc}") from exc
            if not chunk:
                raise ConnectionClosed("tcp peer closed")
            self._ready.extend(self._parser.feed(chunk))
        return self._ready.pop(0)

    def close(self):
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


class TcpListener:
    def __init__(self, host: str, port: int):
        self._sock = socket.create_server((host, port))
        self.address = self._sock.getsockname()

    def accept(self, session_id: bytes, timeout: float | None = None) -> TcpConnection:
        self._sock.settimeout(timeout)
        try:
            conn, _ = self._sock.accept()
        except socket.timeout:
            raise RecvTimeout("accept deadline exceeded") from None
        return TcpConnection(session_id, conn)

    def close(self):
        self._sock.close()


def tcp_connect(host: str, port: int, session_id: bytes,
                timeout: float = 10.0, retries: int = 50) -> TcpConnection:
    import time
    last = None
    for _ in range(retries):
        try:
            return TcpConnection(session_id, socket.create_connection((host, port), timeout=timeout))
        except OSError as exc:
            last = exc
            time.sleep(0.1)
    raise TransportError(f"cannot reach {host}:{port}: {last}")
