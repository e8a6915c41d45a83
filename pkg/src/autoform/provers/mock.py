"""Rule-driven mock prover. Ships in the main package (not test-only) so the
whole pipeline can run with no prover installed."""
from __future__ import annotations

from ..errors import ProverCrashed, ProverTimeout
from .base import (CheckOutcome, CheckRequest, Prover,
                   outcome_from_diagnostics)


class MockProver(Prover):
    """Deterministic prover: the first rule whose substring occurs in the
    submitted code supplies the diagnostics; no match means a clean pass.

    Optional markers: code containing `timeout_on` raises ProverTimeout;
    code containing `crash_on` raises ProverCrashed once per session
    instance (the pool then recycles the session).
    """

    def __init__(self, rules=None, language=None, prover_id="mock",
                 timeout_on="MOCK_TIMEOUT", crash_on=None):
        from ..core import FormalLanguage
        self.rules = list(rules or [])
        self.language = language or FormalLanguage.ISABELLE_HOL
        self.prover_id = prover_id
        self.timeout_on = timeout_on
        self.crash_on = crash_on
        self._crashed = False

    def check(self, request: CheckRequest) -> CheckOutcome:
        if self.crash_on and self.crash_on in request.code and not self._crashed:
            self._crashed = True
            raise ProverCrashed("mock session crash")
        if self.timeout_on and self.timeout_on in request.code:
            raise ProverTimeout(f"mock timeout after {request.timeout}s")
        diagnostics = ()
        for substring, diags in self.rules:
            if substring in request.code:
                diagnostics = tuple(diags)
                break
        # elapsed fixed at 0.0: identical requests must yield identical outcomes
        return outcome_from_diagnostics(diagnostics, 0.0, self.prover_id)
