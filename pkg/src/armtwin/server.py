"""Live operator service: WebSocket for UIs, newline-delimited TCP for scripts.

All connections feed one application queue, so every client observes the
same revision order no matter how sends interleave. Envelopes the node
receives (commands, detector output, robot results) are appended to the
command log before their effects are published.
"""

from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass

from websockets.asyncio.server import serve as ws_serve

from .errors import DecodeError
from .protocol import Envelope, ErrorInfo, decode, encode, make_envelope
from .session import BROADCAST, TO_SENDER, Session, footer_line, header_for_session

log = logging.getLogger(__name__)

MAX_FRAME_BYTES = 64 * 1024


@dataclass(eq=False)  # identity semantics; connections live in a set
class _Connection:
    send_text: object  # async callable(str)
    last_seq: int = -1


class TwinServer:
    """One session served to any number of concurrent operator clients."""

    def __init__(
        self,
        session: Session,
        log_path: str,
        host: str = "127.0.0.1",
        ws_port: int = 0,
        tcp_port: int = 0,
    ):
        self.session = session
        self.log_path = log_path
        self.host = host
        self._want_ws_port = ws_port
        self._want_tcp_port = tcp_port
        self.ws_port: int | None = None
        self.tcp_port: int | None = None
        self._queue: asyncio.Queue = asyncio.Queue()
        self._connections: set[_Connection] = set()
        self._log_fh = None
        self._worker_task = None
        self._ws_server = None
        self._tcp_server = None

    # --- lifecycle ----------------------------------------------------------

    async def start(self) -> None:
        self._log_fh = open(self.log_path, "w", encoding="utf-8")
        self._log_fh.write(header_for_session(self.session).to_line() + "\n")

        # first look at the world comes from the fixed camera
        initial = self.session.next_main_sense()
        self._log_envelope(initial)
        self.session.apply(initial)

        self._worker_task = asyncio.create_task(self._worker())
        self._ws_server = await ws_serve(
            self._handle_ws, self.host, self._want_ws_port, max_size=MAX_FRAME_BYTES
        )
        self.ws_port = next(iter(self._ws_server.sockets)).getsockname()[1]
        self._tcp_server = await asyncio.start_server(
            self._handle_tcp, self.host, self._want_tcp_port,
            limit=MAX_FRAME_BYTES,
        )
        self.tcp_port = self._tcp_server.sockets[0].getsockname()[1]
        log.info("serving ws=%s tcp=%s", self.ws_port, self.tcp_port)

    async def stop(self) -> None:
        if self._tcp_server is not None:
            self._tcp_server.close()
            await self._tcp_server.wait_closed()
        if self._ws_server is not None:
            self._ws_server.close()
            await self._ws_server.wait_closed()
        if self._worker_task is not None:
            await self._queue.join()
            self._worker_task.cancel()
        if self._log_fh is not None:
            self._log_fh.write(footer_line(self.session) + "\n")
            self._log_fh.close()
            self._log_fh = None

    def _log_envelope(self, env: Envelope) -> None:
        self._log_fh.write(encode(env).decode("utf-8") + "\n")
        self._log_fh.flush()

    # --- single-writer application loop --------------------------------------

    async def _worker(self) -> None:
        while True:
            kind, env, conn = await self._queue.get()
            try:
                if kind == "hello":
                    await self._send(conn, self.session._scene_msg())
                elif kind == "apply":
                    await self._apply_and_route(env, conn)
            except Exception:
                log.exception("worker failure on %s", kind)
            finally:
                self._queue.task_done()

    async def _apply_and_route(self, env: Envelope, conn: _Connection) -> None:
        self._log_envelope(env)
        outbound = self.session.apply(env)
        await self._publish(outbound, conn)
        # an accepted arm move immediately triggers an arm-camera sense
        if env.type == "move_arm" and not self._had_error(outbound):
            sense_env = self.session.next_arm_sense()
            self._log_envelope(sense_env)
            await self._publish(self.session.apply(sense_env), conn)
        # record the robot-side result next to the command that caused it and
        # apply it too, so live clock and replayed clock tick identically
        for out_env, _ in outbound:
            if out_env.type == "execution_result":
                self._log_envelope(out_env)
                self.session.apply(out_env)

    @staticmethod
    def _had_error(outbound) -> bool:
        return any(env.type == "error" for env, _ in outbound)

    async def _publish(self, outbound, sender: _Connection) -> None:
        for env, audience in outbound:
            if audience == TO_SENDER:
                await self._send(sender, env)
            else:
                assert audience == BROADCAST
                for conn in list(self._connections):
                    await self._send(conn, env)

    async def _send(self, conn: _Connection, env: Envelope) -> None:
        try:
            await conn.send_text(encode(env).decode("utf-8"))
        except Exception:
            self._connections.discard(conn)

    # --- connection handlers --------------------------------------------------

    async def _ingest(self, conn: _Connection, raw) -> None:
        try:
            if isinstance(raw, (bytes, bytearray)) and len(raw) > MAX_FRAME_BYTES:
                raise DecodeError("frame too large")
            env = decode(raw)
            if env.seq <= conn.last_seq:
                raise DecodeError(
                    f"seq regression: {env.seq} after {conn.last_seq}"
                )
            conn.last_seq = env.seq
        except DecodeError as exc:
            err = make_envelope(
                ErrorInfo(code=exc.code(), text=str(exc)),
                seq=0, stamp_ms=self.session.clock_ms,
            )
            await self._send(conn, err)
            return
        await self._queue.put(("apply", env, conn))

    async def _handle_ws(self, websocket) -> None:
        conn = _Connection(send_text=websocket.send)
        self._connections.add(conn)
        await self._queue.put(("hello", None, conn))
        try:
            async for message in websocket:
                await self._ingest(conn, message)
        except Exception:
            pass
        finally:
            self._connections.discard(conn)

    async def _handle_tcp(self, reader, writer) -> None:
        async def send_text(text: str) -> None:
            writer.write(text.encode("utf-8") + b"\n")
            await writer.drain()

        conn = _Connection(send_text=send_text)
        self._connections.add(conn)
        await self._queue.put(("hello", None, conn))
        try:
            while True:
                try:
                    line = await reader.readline()
                except (asyncio.LimitOverrunError, ValueError):
                    await self._send(
                        conn,
                        make_envelope(
                            ErrorInfo("decode_error", "frame too large"),
                            seq=0, stamp_ms=self.session.clock_ms,
                        ),
                    )
                    break
                if not line:
                    break
                if line.strip():
                    await self._ingest(conn, line)
        finally:
            self._connections.discard(conn)
            writer.close()
