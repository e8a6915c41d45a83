"""Session pool: N single-consumer prover sessions shared between callers.
A crashed session is closed and replaced before the error propagates."""
from __future__ import annotations

import queue
import threading

from ..errors import ProverCrashed, SessionUnavailable
from .base import CheckOutcome, CheckRequest, Prover


class ProverPool:
    def __init__(self, factory, size: int = 1, acquire_timeout: float = 300.0):
        if size < 1:
            raise ValueError("pool size must be >= 1")
        self._factory = factory
        self._sessions = queue.Queue()
        self._acquire_timeout = acquire_timeout
        self._lock = threading.Lock()
        for _ in range(size):
            self._sessions.put(factory())
        self.language = self._peek_language()

    def _peek_language(self):
        session = self._sessions.get()
        try:
            return session.language
        finally:
            self._sessions.put(session)

    def check(self, request: CheckRequest) -> CheckOutcome:
        try:
            session = self._sessions.get(timeout=self._acquire_timeout)
        except queue.Empty:
            raise SessionUnavailable("prover pool exhausted")
        try:
            return session.check(request)
        except ProverCrashed:
            try:
                session.close()
            finally:
                session = self._factory()
            raise
        finally:
            self._sessions.put(session)

    def close(self) -> None:
        while True:
            try:
                self._sessions.get_nowait().close()
            except queue.Empty:
                return
