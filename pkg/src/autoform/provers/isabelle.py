"""Isabelle checking through the Isabelle server's TCP line protocol.

After a password handshake, commands are sent as `NAME {json}` lines.
Server messages are either one line, or a byte count on its own line
followed by that many bytes. Asynchronous replies (NOTE / FINISHED /
FAILED) are correlated by task id. Each check writes one temporary theory
file and submits it via use_theories.
"""
from __future__ import annotations

import json
import os
import socket
import tempfile
import time

from ..core import FormalLanguage, sanitize_theory_name
from ..errors import (LaunchFailed, ProtocolError, ProverCrashed,
                      ProverTimeout)
from .base import (CheckOutcome, CheckRequest, Diagnostic, Prover, Severity,
                   outcome_from_diagnostics)

_KIND_SEVERITY = {
    "error": Severity.ERROR,
    "warning": Severity.WARNING,
    "legacy": Severity.WARNING,
    "writeln": Severity.INFO,
    "information": Severity.INFO,
}


def split_server_message(message: str):
    """Split a decoded server message into (keyword, payload-or-None)."""
    message = message.strip()
    if not message:
        raise ProtocolError("empty server message")
    head, _, rest = message.partition(" ")
    if not rest:
        return head, None
    try:
        return head, json.loads(rest)
    except json.JSONDecodeError:
        return head, rest  # plain-text argument (e.g. handshake banner)


def _diag_from_message(entry: dict) -> Diagnostic:
    kind = entry.get("kind", "writeln")
    severity = _KIND_SEVERITY.get(kind, Severity.INFO)
    message = entry.get("message", "") or "(empty prover message)"
    position = None
    pos = entry.get("pos")
    if isinstance(pos, dict) and "line" in pos:
        position = (pos["line"], pos.get("offset", 0))
    return Diagnostic(severity, message, position)


def extract_use_theories_diagnostics(finished: dict) -> list:
    """Diagnostics from a use_theories FINISHED payload: node messages plus
    top-level errors, prover text preserved verbatim."""
    diagnostics = []
    for node in finished.get("nodes", ()):
        for entry in node.get("messages", ()):
            diagnostics.append(_diag_from_message(entry))
    for err in finished.get("errors", ()):
        if isinstance(err, dict):
            diagnostics.append(_diag_from_message(dict(err, kind="error")))
        else:
            diagnostics.append(Diagnostic(Severity.ERROR, str(err)))
    return diagnostics


class _LineChannel:
    """Blocking reader/writer over the server socket, handling the
    byte-counted long-message framing."""

    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._buf = b""

    def send_line(self, line: str) -> None:
        self._sock.sendall(line.encode("utf-8") + b"\n")

    def _read_until_newline(self, deadline) -> bytes:
        while b"\n" not in self._buf:
            self._sock.settimeout(max(0.01, deadline - time.monotonic()))
            try:
                chunk = self._sock.recv(65536)
            except socket.timeout:
                raise ProverTimeout("no server message before deadline")
            if not chunk:
                raise ProverCrashed("server closed the connection")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line

    def _read_exact(self, n: int, deadline) -> bytes:
        while len(self._buf) < n:
            self._sock.settimeout(max(0.01, deadline - time.monotonic()))
            try:
                chunk = self._sock.recv(65536)
            except socket.timeout:
                raise ProverTimeout("no server message before deadline")
            if not chunk:
                raise ProverCrashed("server closed the connection")
            self._buf += chunk
        out, self._buf = self._buf[:n], self._buf[n:]
        return out

    def read_message(self, deadline) -> str:
        line = self._read_until_newline(deadline)
        if line.isdigit():
            return self._read_exact(int(line), deadline).decode("utf-8")
        return line.decode("utf-8")


class IsabelleServerProver(Prover):
    language = FormalLanguage.ISABELLE_HOL
    prover_id = "isabelle-server"

    def __init__(self, host="127.0.0.1", port=0, password="",
                 session="HOL", startup_timeout=600.0):
        self.session_image = session
        try:
            sock = socket.create_connection((host, port), timeout=30)
        except OSError as exc:
            raise LaunchFailed(f"cannot reach Isabelle server at "
                               f"{host}:{port}: {exc}")
        self._chan = _LineChannel(sock)
        self._sock = sock
        self._chan.send_line(password)
        deadline = time.monotonic() + 30
        keyword, payload = split_server_message(self._chan.read_message(deadline))
        if keyword != "OK":
            raise LaunchFailed("Isabelle server rejected the handshake",
                               startup_output=f"{keyword} {payload}")
        self.session_id = self._start_session(startup_timeout)

    def _command(self, name: str, args: dict, deadline) -> dict:
        self._chan.send_line(f"{name} {json.dumps(args)}")
        keyword, payload = split_server_message(self._chan.read_message(deadline))
        if keyword == "ERROR":
            raise ProtocolError(f"server rejected {name}: {payload}")
        if keyword != "OK" or not isinstance(payload, dict):
            raise ProtocolError(f"unexpected reply to {name}: "
                                f"{keyword} {payload}")
        return payload

    def _await_task(self, task: str, deadline) -> dict:
        while True:
            keyword, payload = split_server_message(
                self._chan.read_message(deadline))
            if not isinstance(payload, dict) or payload.get("task") != task:
                continue  # NOTE traffic for other tasks / progress
            if keyword == "FINISHED":
                return payload
            if keyword == "FAILED":
                raise ProtocolError(f"server task failed: {payload}")

    def _start_session(self, timeout: float) -> str:
        deadline = time.monotonic() + timeout
        ok = self._command("session_start", {"session": self.session_image},
                           deadline)
        finished = self._await_task(ok["task"], deadline)
        return finished["session_id"]

    def check(self, request: CheckRequest) -> CheckOutcome:
        start = time.monotonic()
        deadline = start + request.timeout
        theory = sanitize_theory_name(request.theory_name)
        with tempfile.TemporaryDirectory(prefix="autoform_thy_") as master:
            with open(os.path.join(master, f"{theory}.thy"), "w",
                      encoding="utf-8") as fh:
                fh.write(request.code)
            ok = self._command("use_theories", {
                "session_id": self.session_id,
                "theories": [theory],
                "master_dir": master,
            }, deadline)
            finished = self._await_task(ok["task"], deadline)
        diagnostics = extract_use_theories_diagnostics(finished)
        return outcome_from_diagnostics(diagnostics,
                                        time.monotonic() - start,
                                        self.prover_id)

    def close(self) -> None:
        try:
            self._chan.send_line(
                "session_stop " + json.dumps({"session_id": self.session_id}))
        except OSError:
            pass
        self._sock.close()
