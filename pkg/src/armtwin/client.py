"""Headless protocol client over the newline-delimited TCP transport.

Used by scripted operator policies and integration tests; the browser UI
speaks the identical envelopes over WebSocket.
"""

from __future__ import annotations

import asyncio

from .protocol import Envelope, decode, encode, make_envelope


class TwinClient:
    def __init__(self):
        self._reader = None
        self._writer = None
        self._seq = 0
        self._clock = 0

    async def connect(self, host: str, port: int) -> None:
        self._reader, self._writer = await asyncio.open_connection(host, port)

    async def close(self) -> None:
        if self._writer is not None:
            self._writer.close()
            try:
                await self._writer.wait_closed()
            except Exception:
                pass

    async def send(self, payload) -> Envelope:
        """Wrap a payload in the next client envelope and ship it."""
        self._seq += 1
        self._clock += 1
        env = make_envelope(payload, seq=self._seq, stamp_ms=self._clock)
        self._writer.write(encode(env) + b"\n")
        await self._writer.drain()
        return env

    async def recv(self, timeout: float = 10.0) -> Envelope:
        line = await asyncio.wait_for(self._reader.readline(), timeout)
        if not line:
            raise ConnectionError("server closed the connection")
        return decode(line)

    async def recv_until(self, predicate, timeout: float = 10.0) -> Envelope:
        """Read (and drop) messages until one satisfies the predicate."""
        loop = asyncio.get_event_loop()
        deadline = loop.time() + timeout
        while True:
            remaining = deadline - loop.time()
            if remaining <= 0:
                raise asyncio.TimeoutError("predicate not satisfied in time")
            env = await self.recv(timeout=remaining)
            if predicate(env):
                return env

    async def recv_type(self, type_tag: str, timeout: float = 10.0) -> Envelope:
        return await self.recv_until(lambda e: e.type == type_tag, timeout)

    async def command(self, payload, reply_types=("scene_state",), timeout: float = 10.0) -> Envelope:
        """Send a command and wait for the first of the given reply types.

        Errors count as replies so callers always see rejections.
        """
        await self.send(payload)
        wanted = set(reply_types) | {"error"}
        return await self.recv_until(lambda e: e.type in wanted, timeout)
