"""
TCP mirror of broker traffic.

Every delivered message is pushed to connected sockets as one line of JSON:
``{"topic": "command/r01", "payload": {...}}``. The simulation runs in a
worker thread while the asyncio loop serves the sockets.
"""

import asyncio
import json
import logging
from typing import Any, Callable, Dict, Optional, Set, Tuple

from core.fleet import COMMAND, TELEMETRY, MessageBroker, parse_topic
from exceptions.sim_exceptions import TopicError

logger = logging.getLogger(__name__)


def encode_line(topic: str, payload: bytes) -> bytes:
    """One NDJSON line for a broker message."""
    parse_topic(topic)
    body = {"topic": topic, "payload": json.loads(payload.decode("utf-8"))}
    return json.dumps(body, separators=(",", ":")).encode("utf-8") + b"\n"


def decode_line(line: bytes) -> Tuple[str, Dict[str, Any]]:
    try:
        body = json.loads(line.decode("utf-8"))
        topic, payload = body["topic"], body["payload"]
    except (ValueError, KeyError, TypeError):
        raise TopicError(line.decode("utf-8", errors="replace").strip())
    parse_topic(topic)
    return topic, payload


class TcpMirror:
    """
    Line-oriented fan-out server.

    Attributes:
        sent: lines handed to the loop for broadcast
        clients: currently connected writers
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 0) -> None:
        self.host = host
        self.port = port
        self.sent = 0
        self.clients: Set[asyncio.StreamWriter] = set()
        self._server: Optional[asyncio.AbstractServer] = None
        self._loop: Optional[asyncio.AbstractEventLoop] = None

    def bind(self, broker: MessageBroker) -> "TcpMirror":
        for kind in (COMMAND, TELEMETRY):
            broker.subscribe(f"{kind}/#", self.on_message)
        return self

    async def start(self) -> int:
        """Listen and return the bound port."""
        self._loop = asyncio.get_running_loop()
        self._server = await asyncio.start_server(self._on_client, self.host, self.port)
        self.port = self._server.sockets[0].getsockname()[1]
        logger.info(f"Broker mirror listening on {self.host}:{self.port}")
        return self.port

    async def close(self) -> None:
        for writer in list(self.clients):
            writer.close()
        self.clients.clear()
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
            self._server = None

    def on_message(self, topic: str, payload: bytes) -> None:
        if self._loop is None:
            return
        line = encode_line(topic, payload)
        self.sent += 1
        self._loop.call_soon_threadsafe(self._broadcast, line)

    def _broadcast(self, line: bytes) -> None:
        for writer in list(self.clients):
            if writer.is_closing():
                self.clients.discard(writer)
            else:
                writer.write(line)

    async def _on_client(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        peer = writer.get_extra_info("peername")
        logger.info(f"Mirror client connected: {peer}")
        self.clients.add(writer)
        try:
            while await reader.read(1024):
                pass
        except ConnectionError:
            pass
        finally:
            self.clients.discard(writer)
            logger.info(f"Mirror client gone: {peer}")


async def run_mirrored(work: Callable[[], Any], mirror: TcpMirror) -> Any:
    """Serve ``mirror`` while ``work`` runs in a worker thread."""
    await mirror.start()
    try:
        return await asyncio.get_running_loop().run_in_executor(None, work)
    finally:
        # let queued broadcasts reach the sockets before closing
        await asyncio.sleep(0)
        await mirror.close()
