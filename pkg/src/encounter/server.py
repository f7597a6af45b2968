"""TCP pose-streaming service: one palm sample per line in, one tick per line out."""

from __future__ import annotations

import json
import logging
import socketserver
import threading

from .errors import ParseError
from .protocol import decode_palm, encode_tick
from .runtime import Session

log = logging.getLogger(__name__)


def _reply(wfile, obj) -> None:
    wfile.write(((obj if isinstance(obj, str) else json.dumps(obj, separators=(",", ":"))) + "\n").encode("utf-8"))
    wfile.flush()


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        session: Session = self.server.make_session()
        last_t = None
        for raw in self.rfile:
            try:
                line = raw.decode("utf-8")
            except UnicodeDecodeError:
                _reply(self.wfile, {"err": "parse"})
                continue
            if not line.strip():
                continue
            try:
                palm = decode_palm(line)
            except ParseError:
                _reply(self.wfile, {"err": "parse"})
                continue
            if last_t is not None and palm.t <= last_t:
                _reply(self.wfile, {"err": "order"})
                continue
            try:
                out = session.tick(palm)
            except Exception as exc:  # keep the connection alive
                log.exception("tick failed")
                _reply(self.wfile, {"err": type(exc).__name__})
                continue
            last_t = palm.t
            _reply(self.wfile, encode_tick(out))


class PoseServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, session_factory):
        self.make_session = session_factory
        super().__init__(address, _Handler)


def make_server(session_factory, host: str = "127.0.0.1", port: int = 0) -> PoseServer:
    """Bind (port 0 picks a free port); call ``serve_forever`` to run."""
    return PoseServer((host, port), session_factory)


def serve_in_thread(server: PoseServer) -> threading.Thread:
    th = threading.Thread(target=server.serve_forever, daemon=True)
    th.start()
    return th
