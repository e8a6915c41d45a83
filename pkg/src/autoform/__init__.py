"""Multi-agent autoformalization toolkit.

Translates natural-language mathematical statements into Isabelle/HOL or
Lean4 code with LLM agents, critiques the output via theorem provers and
LLM judges, refines it iteratively, and evaluates runs with MT-style
metrics plus pass rate.
"""
from .core import (AspectDescription, CritiqueKind, CritiqueResult,
                   ExemplarPair, FormalLanguage, Formalization,
                   FormalizationRecord, InformalStatement, Origin,
                   extract_code_block, wrap_theory)
from .llm import (CachedBackend, ChatExchange, ChatMessage, GenerationParams,
                  OpenAICompatibleBackend, ResponseCache, Role,
                  ScriptedBackend)

__version__ = "0.1.0"

__all__ = [
    "AspectDescription", "CritiqueKind", "CritiqueResult", "ExemplarPair",
    "FormalLanguage", "Formalization", "FormalizationRecord",
    "InformalStatement", "Origin", "extract_code_block", "wrap_theory",
    "CachedBackend", "ChatExchange", "ChatMessage", "GenerationParams",
    "OpenAICompatibleBackend", "ResponseCache", "Role", "ScriptedBackend",
    "__version__",
]
