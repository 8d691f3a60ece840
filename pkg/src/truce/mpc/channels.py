"""Channel interface used by the MPC engines.

Frames are opaque byte strings delivered in order. Implementations:
the in-memory DuplexChannel below (threads in one process) and the
authenticated encrypted channel from truce.transport.
"""

from __future__ import annotations

import queue
from typing import Optional, Protocol, Tuple


class Channel(Protocol):
    def send_frame(self, payload: bytes) -> None: ...

    def recv_frame(self, timeout: Optional[float] = None) -> bytes: ...

    @property
    def bytes_sent(self) -> int: ...

    @property
    def bytes_received(self) -> int: ...


class ChannelClosed(ConnectionError):
    pass


class DuplexChannel:
    """One endpoint of an in-memory bidirectional channel."""

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue):
        self._inbox = inbox
        self._outbox = outbox
        self._sent = 0
        self._received = 0
        self._closed = False

    @staticmethod
    def pair() -> Tuple["DuplexChannel", "DuplexChannel"]:
        q_ab: queue.Queue = queue.Queue()
        q_ba: queue.Queue = queue.Queue()
        return DuplexChannel(q_ba, q_ab), DuplexChannel(q_ab, q_ba)

    def send_frame(self, payload: bytes) -> None:
        if self._closed:
            raise ChannelClosed("channel closed")
        self._outbox.put(payload)
        self._sent += len(payload)

    def recv_frame(self, timeout: Optional[float] = None) -> bytes:
        try:
            payload = self._inbox.get(timeout=timeout if timeout is not None else 60.0)
        except queue.Empty:
            raise ChannelClosed("peer did not respond") from None
        if payload is None:
            raise ChannelClosed("peer closed channel")
        self._received += len(payload)
        return payload

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._outbox.put(None)

    @property
    def bytes_sent(self) -> int:
        return self._sent

    @property
    def bytes_received(self) -> int:
        return self._received


class SocketFrameChannel:
    """Channel over a stream socket using 4-byte length-prefixed frames."""

    def __init__(self, sock):
        self._sock = sock
        self._sent = 0
        self._received = 0

    def send_frame(self, payload: bytes) -> None:
        from ..transport.channel import FrameError, send_raw_frame

        try:
            self._sent += send_raw_frame(self._sock, payload)
        except (OSError, FrameError) as e:
            raise ChannelClosed(str(e)) from e

    def recv_frame(self, timeout: Optional[float] = None) -> bytes:
        from ..transport.channel import FrameError, recv_raw_frame

        if timeout is not None:
            self._sock.settimeout(timeout)
        try:
            payload = recv_raw_frame(self._sock)
        except (OSError, FrameError) as e:
            raise ChannelClosed(str(e)) from e
        self._received += len(payload)
        return payload

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass

    @property
    def bytes_sent(self) -> int:
        return self._sent

    @property
    def bytes_received(self) -> int:
        return self._received
