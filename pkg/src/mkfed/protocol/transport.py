"""Message delivery: in-process loopback and length-prefixed TCP frames.

Both transports route the exact same RoundMessage bytes between the same
state machines; the loopback pump simply skips the sockets. Message sums
are order-independent, so delivery interleaving never changes round
results.
"""

import selectors
import socket
import threading
from collections import deque

from ..errors import FrameError, ProtocolError
from . import messages as mp
from .messages import BROADCAST, SERVER_ID, MessageKind, RoundMessage
from .server import FederationServer, ServerPhase


def run_loopback_session(server: FederationServer, devices, *, codec_fidelity=True):
    """Drive one full session in process.

    With codec_fidelity every message still passes through the frame
    encoder/decoder, so the bytes on this path are the bytes TCP would
    carry. Returns the server (its phase tells how the session ended).
    """
    by_id = {d.device_id: d for d in devices}

    def ship(msg):
        if not codec_fidelity:
            return msg
        frame = mp.encode_frame(msg)
        parsed, consumed = mp.decode_frame(frame)
        assert consumed == len(frame)
        return parsed

    queue = deque()
    for dev in devices:
        for msg in dev.start():
            queue.append(("server", msg))

    while queue:
        target, msg = queue.popleft()
        msg = ship(msg)
        if target == "server":
            for dest, out in server.handle_message(msg):
                if dest == BROADCAST:
                    for dev_id in sorted(by_id):
                        queue.append((dev_id, out))
                else:
                    queue.append((dest, out))
        else:
            replies = by_id[target].handle_message(msg)
            for out in replies:
                queue.append(("server", out))

    if server.phase not in (ServerPhase.DONE, ServerPhase.ABORTED):
        # queues drained with the round incomplete: a device went silent
        for dest, out in server.handle_timeout():
            if dest == BROADCAST:
                for dev in devices:
                    dev.handle_message(out)
            else:
                by_id[dest].handle_message(out)
    return server


# --- TCP ---------------------------------------------------------------------


def _recv_exact(sock, count):
    buf = b""
    while len(buf) < count:
        piece = sock.recv(count - len(buf))
        if not piece:
            raise ConnectionError("peer closed")
        buf += piece
    return buf


def read_frame(sock, max_frame=mp.DEFAULT_MAX_FRAME) -> RoundMessage:
    length = int.from_bytes(_recv_exact(sock, 4), "big")
    if length > max_frame:
        raise FrameError(f"frame of {length} bytes exceeds limit {max_frame}")
    return mp.decode_message(_recv_exact(sock, length))


def write_frame(sock, msg: RoundMessage, max_frame=mp.DEFAULT_MAX_FRAME):
    sock.sendall(mp.encode_frame(msg, max_frame))


class TcpServerRunner:
    """Serves one federation session over TCP in a background thread."""

    def __init__(self, server: FederationServer, host="127.0.0.1", port=0,
                 max_frame=mp.DEFAULT_MAX_FRAME):
        self.server = server
        self.max_frame = max_frame
        self._listener = socket.create_server((host, port))
        self.address = self._listener.getsockname()
        self._conns = {}  # socket -> buffered reader state
        self._device_conns = {}  # device id -> socket
        self._thread = None
        self.error = None

    def start(self):
        self._thread = threading.Thread(target=self._run, name="mkfed-server", daemon=True)
        self._thread.start()
        return self

    def join(self, timeout=None):
        self._thread.join(timeout)
        if self._thread.is_alive():
            raise ProtocolError("server thread did not finish")
        if self.error:
            raise self.error

    def _route(self, outputs):
        for dest, msg in outputs:
            if dest == BROADCAST:
                socks = list(self._device_conns.values())
            else:
                sock = self._device_conns.get(dest)
                socks = [sock] if sock else []
            for sock in socks:
                try:
                    write_frame(sock, msg, self.max_frame)
                except OSError:
                    pass  # receiver gone; the timeout path will notice

    def _run(self):
        sel = selectors.DefaultSelector()
        sel.register(self._listener, selectors.EVENT_READ, "listen")
        try:
            while self.server.phase not in (ServerPhase.DONE, ServerPhase.ABORTED):
                events = sel.select(timeout=self.server.config.timeout_s)
                if not events:
                    self._route(self.server.handle_timeout())
                    break
                for key, _ in events:
                    if key.data == "listen":
                        conn, _ = self._listener.accept()
                        conn.setblocking(True)
                        sel.register(conn, selectors.EVENT_READ, "conn")
                        self._conns[conn] = b""
                        continue
                    conn = key.fileobj
                    try:
                        msg = read_frame(conn, self.max_frame)
                    except (ConnectionError, OSError):
                        sel.unregister(conn)
                        conn.close()
                        self._conns.pop(conn, None)
                        continue
                    except FrameError as exc:
                        try:
                            write_frame(conn, RoundMessage(
                                MessageKind.ABORT, 0, SERVER_ID, mp.abort_payload(str(exc))
                            ))
                        except OSError:
                            pass
                        continue
                    if msg.sender_id not in self._device_conns:
                        self._device_conns[msg.sender_id] = conn
                    self._route(self.server.handle_message(msg))
        except Exception as exc:  # pragma: no cover - surfaced via join()
            self.error = exc
        finally:
            for conn in list(self._conns):
                conn.close()
            self._listener.close()
            sel.close()


def run_tcp_device(device, host, port, timeout=30.0, max_frame=mp.DEFAULT_MAX_FRAME):
    """Run one device against a TCP server until it finishes or aborts."""
    with socket.create_connection((host, port), timeout=timeout) as sock:
        for msg in device.start():
            write_frame(sock, msg, max_frame)
        while not device.done and device.aborted is None:
            try:
                incoming = read_frame(sock, max_frame)
            except (ConnectionError, OSError):
                break
            for out in device.handle_message(incoming):
                write_frame(sock, out, max_frame)
    return device
