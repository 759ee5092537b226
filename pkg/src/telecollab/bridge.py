"""Websocket bridge: the console's doorway into the framed-socket world.

Each websocket connection gets its own upstream TCP connection to the session
server (path "/") or the relay (path "/relay").  Text messages are the exact
JSON payloads of the framed protocol, without the 4-byte length prefix; the
bridge adds and strips the framing and nothing else.
"""

from __future__ import annotations

import asyncio
import struct

from .wire import (MAX_FRAME_BYTES, ProtocolError, decode_payload)


async def _ws_to_tcp(ws, writer) -> None:
    async for message in ws:
        if isinstance(message, bytes):
            message = message.decode("utf-8")
        decode_payload(message)  # reject garbage before it reaches the server
        payload = message.encode("utf-8")
        writer.write(struct.pack(">I", len(payload)) + payload)
        await writer.drain()


async def _tcp_to_ws(reader, ws) -> None:
    buffer = b""
    while True:
        chunk = await reader.read(65536)
        if not chunk:
            break
        buffer += chunk
        while len(buffer) >= 4:
            (length,) = struct.unpack(">I", buffer[:4])
            if length > MAX_FRAME_BYTES:
                raise ProtocolError(f"frame of {length} bytes exceeds limit")
            if len(buffer) < 4 + length:
                break
            payload = buffer[4:4 + length]
            buffer = buffer[4 + length:]
            await ws.send(payload.decode("utf-8"))


def serve_bridge(ws_port: int, upstream_host: str, upstream_port: int,
                 relay: tuple[str, int] | None = None) -> None:
    """Run the bridge until cancelled (blocking)."""
    asyncio.run(bridge_forever(ws_port, upstream_host, upstream_port, relay))


async def bridge_forever(ws_port: int, upstream_host: str,
                         upstream_port: int,
                         relay: tuple[str, int] | None = None,
                         started: "asyncio.Event | None" = None) -> None:
    from websockets.asyncio.server import serve

    async def handler(ws):
        path = ws.request.path if ws.request else "/"
        if path.startswith("/relay") and relay is not None:
            host, port = relay
        else:
            host, port = upstream_host, upstream_port
        try:
            reader, writer = await asyncio.open_connection(host, port)
        except OSError:
            await ws.close(code=1011, reason="upstream unreachable")
            return
        pump_up = asyncio.create_task(_ws_to_tcp(ws, writer))
        pump_down = asyncio.create_task(_tcp_to_ws(reader, ws))
        try:
            done, pending = await asyncio.wait(
                {pump_up, pump_down}, return_when=asyncio.FIRST_EXCEPTION)
            for task in pending:
                task.cancel()
        finally:
            writer.close()
            try:
                await ws.close()
            except Exception:
                pass

    async with serve(handler, "127.0.0.1", ws_port):
        if started is not None:
            started.set()
        await asyncio.Future()  # run forever
