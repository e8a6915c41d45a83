"""Prover-facing types and the client interface."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from ..core import FormalLanguage


class Severity(Enum):
    ERROR = "error"
    WARNING = "warning"
    INFO = "info"


@dataclass(frozen=True)
class Diagnostic:
    severity: Severity
    message: str
    position: Optional[tuple] = None  # (line, column)

    def __post_init__(self):
        if not self.message:
            raise ValueError("diagnostic message must be non-empty")


@dataclass(frozen=True)
class CheckRequest:
    code: str
    language: FormalLanguage
    timeout: float = 120.0
    theory_name: str = "Scratch"

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")


@dataclass(frozen=True)
class CheckOutcome:
    passed: bool
    diagnostics: tuple
    elapsed: float
    prover_id: str

    def __post_init__(self):
        if self.passed and any(d.severity is Severity.ERROR
                               for d in self.diagnostics):
            raise ValueError("a passing outcome cannot carry errors")

    @property
    def error_text(self) -> str:
        return "\n".join(d.message for d in self.diagnostics
                         if d.severity is Severity.ERROR)


def outcome_from_diagnostics(diagnostics, elapsed, prover_id) -> CheckOutcome:
    """passed iff no Error-severity diagnostic; `sorry` warnings never fail
    a check (statement-level checking, not proof checking)."""
    diags = tuple(diagnostics)
    passed = not any(d.severity is Severity.ERROR for d in diags)
    return CheckOutcome(passed=passed, diagnostics=diags, elapsed=elapsed,
                        prover_id=prover_id)


@dataclass
class ProverConfig:
    kind: str = "mock"  # mock | lean4 | isabelle
    language: FormalLanguage = FormalLanguage.ISABELLE_HOL
    timeout: float = 120.0
    pool_size: int = 1
    # lean4
    lean_repl_cmd: list = field(default_factory=lambda: ["repl"])
    lean_cwd: Optional[str] = None
    # isabelle
    isabelle_host: str = "127.0.0.1"
    isabelle_port: int = 0
    isabelle_password: str = ""
    isabelle_session: str = "HOL"
    # mock: ordered (substring, [Diagnostic]) rules
    mock_rules: list = field(default_factory=list)


class Prover:
    """One prover session: single-consumer, one in-flight check at a time."""

    prover_id = "base"
    language = FormalLanguage.ISABELLE_HOL

    def check(self, request: CheckRequest) -> CheckOutcome:
        raise NotImplementedError

    def close(self) -> None:
        pass
