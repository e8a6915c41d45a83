"""Lean 4 checking through the community REPL.

Wire format: one JSON object per request on the REPL's stdin (for example
{"cmd": "<code>"}) followed by a blank line; the reply is a JSON object
terminated by a blank line, carrying a "messages" array.
"""
from __future__ import annotations

import json
import subprocess
import time

from ..core import FormalLanguage
from ..errors import LaunchFailed, ProtocolError, ProverCrashed, ProverTimeout
from .base import (CheckOutcome, CheckRequest, Diagnostic, Prover, Severity,
                   outcome_from_diagnostics)

_SEVERITIES = {
    "error": Severity.ERROR,
    "warning": Severity.WARNING,
    "info": Severity.INFO,
    "information": Severity.INFO,
}


def parse_lean_diagnostics(raw: str) -> list:
    """Map one complete REPL reply to Diagnostics. `sorry` warnings stay
    warnings and never fail the check."""
    try:
        reply = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"non-JSON REPL reply: {exc}")
    if not isinstance(reply, dict):
        raise ProtocolError("REPL reply is not an object")
    if "message" in reply and "messages" not in reply:
        # fatal REPL-level error, e.g. unknown environment
        return [Diagnostic(Severity.ERROR, str(reply["message"]))]
    diagnostics = []
    for entry in reply.get("messages", []):
        try:
            severity = _SEVERITIES[entry["severity"]]
            message = entry["data"]
        except (KeyError, TypeError) as exc:
            raise ProtocolError(f"malformed REPL message entry: {exc}")
        if not message:
            message = "(empty prover message)"
        position = None
        pos = entry.get("pos")
        if isinstance(pos, dict) and "line" in pos and "column" in pos:
            position = (pos["line"], pos["column"])
        diagnostics.append(Diagnostic(severity, message, position))
    return diagnostics


class LeanReplProver(Prover):
    language = FormalLanguage.LEAN4
    prover_id = "lean4-repl"

    def __init__(self, cmd, cwd=None):
        self.cmd = list(cmd)
        try:
            self.proc = subprocess.Popen(
                self.cmd, cwd=cwd, stdin=subprocess.PIPE,
                stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
        except OSError as exc:
            raise LaunchFailed(f"cannot start Lean REPL {self.cmd!r}: {exc}")
        # fail fast if the process died during startup
        time.sleep(0.05)
        if self.proc.poll() is not None:
            err = self.proc.stderr.read() if self.proc.stderr else ""
            raise LaunchFailed(
                f"Lean REPL exited with code {self.proc.returncode}",
                startup_output=err)

    def _roundtrip(self, payload: dict, timeout: float) -> str:
        if self.proc.poll() is not None:
            raise ProverCrashed("Lean REPL process died")
        self.proc.stdin.write(json.dumps(payload, ensure_ascii=False) + "\n\n")
        self.proc.stdin.flush()
        deadline = time.monotonic() + timeout
        lines = []
        while True:
            if time.monotonic() > deadline:
                raise ProverTimeout(f"no REPL reply within {timeout}s")
            line = self.proc.stdout.readline()
            if line == "":
                raise ProverCrashed("Lean REPL closed its output stream")
            if line.strip() == "" and lines:
                return "".join(lines)
            if line.strip() != "":
                lines.append(line)

    def check(self, request: CheckRequest) -> CheckOutcome:
        start = time.monotonic()
        raw = self._roundtrip({"cmd": request.code}, request.timeout)
        diagnostics = parse_lean_diagnostics(raw)
        return outcome_from_diagnostics(diagnostics, time.monotonic() - start,
                                        self.prover_id)

    def close(self) -> None:
        if self.proc.poll() is None:
            self.proc.terminate()
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
