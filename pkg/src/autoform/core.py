"""Shared domain types: statements, formal languages, formalizations, critiques.

Everything here is an immutable value type; instances can be shared freely
across threads.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .errors import MalformedWrapper


class FormalLanguage(Enum):
    ISABELLE_HOL = "Isabelle/HOL"
    LEAN4 = "Lean4"

    @property
    def default_imports(self) -> tuple:
        if self is FormalLanguage.ISABELLE_HOL:
            return ("Main",)
        return ()

    @property
    def wrapper_template(self) -> str:
        # exactly one hole per slot: theory_name, imports, body
        if self is FormalLanguage.ISABELLE_HOL:
            return "theory {theory_name} imports {imports} begin\n{body}\nend"
        # Lean4 accepts top-level declarations; the "wrapper" is just the
        # import block followed by the body (no theory-name slot exists).
        return "{imports}{body}"

    @property
    def keywords(self) -> tuple:
        """Top-level declaration keywords used for bare-code detection."""
        if self is FormalLanguage.ISABELLE_HOL:
            return ("theory", "definition", "lemma", "theorem")
        return ("import", "theorem", "def", "example")


class Origin(Enum):
    ZERO_SHOT = "zero_shot"
    FEW_SHOT = "few_shot"
    FORMAL_REFINEMENT = "formal_refinement"
    INFORMAL_REFINEMENT = "informal_refinement"
    DENOISED = "denoised"
    IMPORT_RETRIEVAL = "import_retrieval"


_INITIAL_ORIGINS = frozenset({Origin.ZERO_SHOT, Origin.FEW_SHOT})


@dataclass(frozen=True)
class InformalStatement:
    id: str
    text: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("informal statement text must be non-empty")


@dataclass(frozen=True)
class Formalization:
    code: str
    language: FormalLanguage
    origin: Origin
    parent: Optional["Formalization"] = None

    def __post_init__(self):
        if not self.code.strip():
            raise ValueError("formalization code must be non-empty")
        if (self.origin in _INITIAL_ORIGINS) != (self.parent is None):
            raise ValueError(
                "zero/few-shot formalizations have no parent; "
                "derived ones must carry one")

    def lineage(self) -> list:
        """Chain from this formalization back to its zero/few-shot root."""
        out, cur = [], self
        while cur is not None:
            out.append(cur)
            cur = cur.parent
        return out


@dataclass(frozen=True)
class ExemplarPair:
    informal: str
    formal: str
    language: FormalLanguage

    def __post_init__(self):
        if not self.informal.strip() or not self.formal.strip():
            raise ValueError("exemplar texts must be non-empty")


@dataclass(frozen=True)
class AspectDescription:
    name: str
    description: str

    def __post_init__(self):
        if not self.description.strip():
            raise ValueError("aspect description must be non-empty")


class CritiqueKind(Enum):
    HARD = "hard"
    SOFT = "soft"


@dataclass(frozen=True)
class CritiqueResult:
    kind: CritiqueKind
    verdict: bool
    detail: str
    aspect: Optional[AspectDescription] = None
    timed_out: bool = False  # hard critique only; timeouts are not syntax errors

    def __post_init__(self):
        if self.kind is CritiqueKind.SOFT and self.aspect is None:
            raise ValueError("soft critiques must carry an aspect")
        if self.kind is CritiqueKind.HARD and self.aspect is not None:
            raise ValueError("hard critiques carry no aspect")


@dataclass
class FormalizationRecord:
    """One statement's journey through a pipeline.

    attempts is append-only: each entry pairs a formalization with the
    critiques issued against it, so the full refinement lineage survives
    into reports.
    """
    statement: InformalStatement
    attempts: list = field(default_factory=list)  # [(Formalization, [CritiqueResult])]
    error: Optional[str] = None

    def add_attempt(self, formalization: Formalization) -> None:
        self.attempts.append((formalization, []))

    def add_critique(self, critique: CritiqueResult) -> None:
        self.attempts[-1][1].append(critique)

    @property
    def final(self) -> int:
        if not self.attempts:
            raise ValueError("record has no attempts")
        return len(self.attempts) - 1

    @property
    def final_formalization(self) -> Formalization:
        return self.attempts[self.final][0]

    def critiques(self):
        for _, cs in self.attempts:
            yield from cs


# ---------------------------------------------------------------------------
# theory wrapping


def sanitize_theory_name(name: str) -> str:
    """Map an arbitrary statement id to a legal Isabelle theory name."""
    clean = re.sub(r"[^A-Za-z0-9]", "_", name)
    if not clean or clean[0].isdigit():
        clean = "T_" + clean
    return clean


def _quote_import(imp: str) -> str:
    if re.fullmatch(r"[A-Za-z0-9_\-]+", imp):
        return imp
    return f'"{imp}"'


def _unquote(tok: str) -> str:
    return tok[1:-1] if len(tok) >= 2 and tok[0] == tok[-1] == '"' else tok


_THEORY_HEADER = re.compile(
    r"\A\s*theory\s+(?P<name>\S+)\s+(?:imports\s+(?P<imports>.*?))?\bbegin\b",
    re.DOTALL)


def _parse_imports(blob: str) -> list:
    return [_unquote(t) for t in re.findall(r'"[^"]+"|\S+', blob)]


def wrap_theory(code: str, language: FormalLanguage, theory_name: str,
                extra_imports: Optional[list] = None) -> str:
    """Embed bare formal code in a theory wrapper, or merge imports into an
    existing one. Idempotent: wrapping already-wrapped code with no new
    imports returns it unchanged."""
    if not code.strip():
        raise ValueError("code must be non-empty")
    extra_imports = list(extra_imports or [])

    if language is FormalLanguage.LEAN4:
        existing = re.findall(r"^import\s+(\S+)", code, re.MULTILINE)
        new = [i for i in extra_imports if i not in existing]
        if not new:
            return code
        header = "\n".join(f"import {i}" for i in dict.fromkeys(new))
        return header + "\n" + code

    m = _THEORY_HEADER.match(code)
    if m is not None:
        if re.search(r"\bend\s*\Z", code) is None:
            raise MalformedWrapper(
                "theory header present but no closing 'end' marker")
        present = _parse_imports(m.group("imports") or "")
        new = [i for i in dict.fromkeys(extra_imports) if i not in present]
        if not new:
            return code
        insertion = " ".join(_quote_import(i) for i in new)
        if m.group("imports") is not None:
            cut = m.end("imports")
            head = code[:cut].rstrip()
        else:  # header had no imports clause at all
            cut = m.start() + code[m.start():].index("begin")
            head = code[:cut].rstrip() + " imports"
        return head + " " + insertion + " " + code[cut:].lstrip(" ")

    if re.match(r"\s*theory\b", code):
        raise MalformedWrapper("theory header present but malformed")

    imports = list(dict.fromkeys(list(language.default_imports) + extra_imports))
    rendered = " ".join(_quote_import(i) for i in imports)
    return language.wrapper_template.format(
        theory_name=sanitize_theory_name(theory_name),
        imports=rendered,
        body=code.strip("\n"))


# ---------------------------------------------------------------------------
# code extraction from LLM replies


_FENCE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)


def extract_code_block(llm_output: str, language: FormalLanguage) -> str:
    """Pull formal code out of an LLM reply.

    Preference order: first fenced block, then the suffix starting at the
    first language keyword, then the input verbatim. Total: never returns
    empty output for non-empty input.
    """
    m = _FENCE.search(llm_output)
    if m is not None:
        block = m.group(1).strip("\n")
        if block.strip():
            return block

    pattern = r"\b(?:" + "|".join(language.keywords) + r")\b"
    kw = re.search(pattern, llm_output)
    if kw is not None:
        return llm_output[kw.start():].strip("\n")
    return llm_output
