"""Theorem-prover clients: Lean 4 REPL, Isabelle server, rule-driven mock."""
from __future__ import annotations

from ..core import FormalLanguage
from ..errors import LaunchFailed
from .base import (CheckOutcome, CheckRequest, Diagnostic, Prover,
                   ProverConfig, Severity, outcome_from_diagnostics)
from .isabelle import IsabelleServerProver, extract_use_theories_diagnostics
from .lean import LeanReplProver, parse_lean_diagnostics
from .mock import MockProver
from .pool import ProverPool

__all__ = [
    "CheckOutcome", "CheckRequest", "Diagnostic", "Prover", "ProverConfig",
    "Severity", "MockProver", "ProverPool", "LeanReplProver",
    "IsabelleServerProver", "parse_lean_diagnostics",
    "extract_use_theories_diagnostics", "outcome_from_diagnostics",
    "open_session", "pool_from_config",
]


def open_session(language: FormalLanguage, config: ProverConfig) -> Prover:
    """Open one prover session of the configured kind."""
    if config.kind == "mock":
        return MockProver(rules=config.mock_rules, language=language)
    if config.kind == "lean4":
        if language is not FormalLanguage.LEAN4:
            raise LaunchFailed("lean4 prover only checks Lean4 code")
        return LeanReplProver(config.lean_repl_cmd, cwd=config.lean_cwd)
    if config.kind == "isabelle":
        if language is not FormalLanguage.ISABELLE_HOL:
            raise LaunchFailed("isabelle prover only checks Isabelle/HOL code")
        return IsabelleServerProver(
            host=config.isabelle_host, port=config.isabelle_port,
            password=config.isabelle_password, session=config.isabelle_session)
    raise LaunchFailed(f"unknown prover kind {config.kind!r}")


def pool_from_config(config: ProverConfig) -> ProverPool:
    return ProverPool(lambda: open_session(config.language, config),
                      size=config.pool_size)
