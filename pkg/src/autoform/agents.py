"""The concrete agents: autoformalization, hard/soft critique, formal and
informal refinement, plus the two rule-based tool agents (denoising and
import retrieval)."""
from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from typing import Optional

from .core import (AspectDescription, CritiqueKind, CritiqueResult,
                   ExemplarPair, FormalLanguage, Formalization,
                   InformalStatement, Origin, extract_code_block, wrap_theory)
from .errors import EmptyGeneration, JudgmentUnparseable, ProverTimeout
from .kb import query as kb_query
from .llm import ChatMessage, GenerationParams, Role
from .metrics import edit_distance
from .provers.base import CheckRequest

# built-in judge aspects
ASPECT_AF = AspectDescription(
    name="AF",
    description="Is the formalized code accurately aligned with the "
                "intended semantics of the natural language statement?")
ASPECT_FC = AspectDescription(
    name="FC",
    description="Is the formalized code alone valid, nature and well-formed?")

BUILTIN_ASPECTS = {"AF": ASPECT_AF, "FC": ASPECT_FC}


# ---------------------------------------------------------------------------
# prompt templates


_HOLE = re.compile(r"\{([a-z_]+)\}")
_SECTION = re.compile(r"^--- (system|user) ---$", re.MULTILINE)


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    system: str
    user: str

    def holes(self) -> set:
        return set(_HOLE.findall(self.system)) | set(_HOLE.findall(self.user))

    def render(self, **bindings) -> list:
        missing = self.holes() - set(bindings)
        if missing:
            raise KeyError(f"template {self.name!r} has unbound holes: "
                           f"{sorted(missing)}")
        system = self.system.format(**bindings)
        user = self.user.format(**bindings)
        if not system.strip() or not user.strip():
            raise ValueError(f"template {self.name!r} rendered empty")
        return [ChatMessage(Role.SYSTEM, system),
                ChatMessage(Role.USER, user)]


def parse_template(name: str, text: str) -> PromptTemplate:
    parts = _SECTION.split(text)
    sections = dict(zip(parts[1::2], parts[2::2]))
    if "system" not in sections or "user" not in sections:
        raise ValueError(f"template {name!r} needs system and user sections")
    return PromptTemplate(name=name, system=sections["system"].strip(),
                          user=sections["user"].strip())


def load_template(name: str, path=None) -> PromptTemplate:
    """Load a named built-in template, or any template from an override
    path."""
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            return parse_template(name, fh.read())
    text = (resources.files("autoform") / "prompts" / f"{name}.txt").read_text(
        encoding="utf-8")
    return parse_template(name, text)


def render_exemplars(exemplars) -> str:
    out = []
    for i, pair in enumerate(exemplars, start=1):
        out.append(f"Example {i}.\nStatement:\n{pair.informal}\n"
                   f"Formalization:\n{pair.formal}\n")
    return "\n".join(out)


# ---------------------------------------------------------------------------
# LLM-backed agents


def _generate(template, bindings, backend, params, origin, parent):
    reply = backend.complete(template.render(**bindings), params)
    code = extract_code_block(reply, bindings_language(bindings))
    if not code.strip():
        raise EmptyGeneration(f"no code extracted from reply: {reply[:120]!r}")
    return Formalization(code=code, language=bindings_language(bindings),
                         origin=origin, parent=parent)


def bindings_language(bindings) -> FormalLanguage:
    return FormalLanguage(bindings["formal_language"])


def autoformalize(informal: InformalStatement, exemplars, language,
                  backend, params: GenerationParams,
                  template: Optional[PromptTemplate] = None) -> Formalization:
    """Zero-shot when exemplars is empty, few-shot otherwise."""
    exemplars = list(exemplars or [])
    for pair in exemplars:
        if pair.language is not language:
            raise ValueError("exemplar language does not match agent language")
    if exemplars:
        template = template or load_template("few_shot")
        bindings = {"informal": informal.text,
                    "formal_language": language.value,
                    "exemplars": render_exemplars(exemplars)}
        origin = Origin.FEW_SHOT
    else:
        template = template or load_template("zero_shot")
        bindings = {"informal": informal.text,
                    "formal_language": language.value}
        origin = Origin.ZERO_SHOT
    return _generate(template, bindings, backend, params, origin, parent=None)


def hard_critique(formalization: Formalization, prover_pool,
                  theory_name: str = "Scratch",
                  timeout: float = 120.0) -> CritiqueResult:
    """Prover verdict on a formalization; bare bodies get wrapped first."""
    code = wrap_theory(formalization.code, formalization.language, theory_name)
    try:
        outcome = prover_pool.check(CheckRequest(
            code=code, language=formalization.language,
            timeout=timeout, theory_name=theory_name))
    except ProverTimeout:
        return CritiqueResult(kind=CritiqueKind.HARD, verdict=False,
                              detail="timeout", timed_out=True)
    return CritiqueResult(kind=CritiqueKind.HARD, verdict=outcome.passed,
                          detail=outcome.error_text)


_JUDGMENT = re.compile(r"(?:judge?ment|verdict)[\s*]*[:=][\s*]*([A-Za-z]+)",
                       re.IGNORECASE)
_TRUE_TOKENS = {"true", "yes"}
_FALSE_TOKENS = {"false", "no"}


def parse_judgment(reply: str):
    """(verdict, explanation) from a judge reply; the last judgment line
    wins. Raises JudgmentUnparseable rather than guessing."""
    matches = list(_JUDGMENT.finditer(reply))
    verdict = None
    last = None
    for m in matches:
        token = m.group(1).lower()
        if token in _TRUE_TOKENS:
            verdict, last = True, m
        elif token in _FALSE_TOKENS:
            verdict, last = False, m
    if verdict is None:
        raise JudgmentUnparseable(
            f"no judgment token in reply: {reply[:200]!r}")
    explanation = reply[:last.start()].strip()
    m = re.search(r"explanation\s*[:=]\s*", explanation, re.IGNORECASE)
    if m is not None:
        explanation = explanation[m.end():].strip()
    return verdict, explanation


def soft_critique(informal: InformalStatement, formalization: Formalization,
                  aspect: AspectDescription, backend,
                  params: GenerationParams,
                  template: Optional[PromptTemplate] = None) -> CritiqueResult:
    template = template or load_template("judge")
    reply = backend.complete(template.render(
        informal=informal.text,
        formal_language=formalization.language.value,
        formalization=formalization.code,
        aspect_description=aspect.description), params)
    verdict, explanation = parse_judgment(reply)
    return CritiqueResult(kind=CritiqueKind.SOFT, verdict=verdict,
                          detail=explanation, aspect=aspect)


def formal_refine(informal: InformalStatement, formalization: Formalization,
                  error_details: str, backend, params: GenerationParams,
                  correctness: Optional[bool] = None,
                  template: Optional[PromptTemplate] = None) -> Formalization:
    """One repair attempt driven by prover error text. `correctness` is
    accepted for callers that pass it but carries no extra information
    beyond the error details."""
    if correctness is False and not error_details.strip():
        raise ValueError("error_details must be non-empty for a failed check")
    template = template or load_template("formal_refine")
    bindings = {"informal": informal.text,
                "formal_language": formalization.language.value,
                "formalization": formalization.code,
                "error_details": error_details}
    return _generate(template, bindings, backend, params,
                     Origin.FORMAL_REFINEMENT, parent=formalization)


def informal_refine(informal: InformalStatement, formalization: Formalization,
                    aspect: AspectDescription, aspect_evaluation: str,
                    backend, params: GenerationParams,
                    template: Optional[PromptTemplate] = None) -> Formalization:
    if not aspect_evaluation.strip():
        raise ValueError("aspect_evaluation must be non-empty")
    template = template or load_template("informal_refine")
    bindings = {"informal": informal.text,
                "formal_language": formalization.language.value,
                "formalization": formalization.code,
                "aspect_description": aspect.description,
                "aspect_evaluation": aspect_evaluation}
    return _generate(template, bindings, backend, params,
                     Origin.INFORMAL_REFINEMENT, parent=formalization)


# ---------------------------------------------------------------------------
# tool agent: denoising


DEFAULT_IMPORT_LEXICON = (
    "Main", "Complex_Main", "HOL.Real", "HOL.Complex", "HOL.Rat",
    "HOL.Transcendental", "HOL-Library.Sum_of_Squares",
    "HOL-Number_Theory.Number_Theory", "HOL-Analysis.Analysis",
)

_GOAL_KEYWORDS = ("theorem", "lemma", "corollary", "proposition", "schematic_goal")
_STATEMENT_CONTINUATIONS = ("fixes", "assumes", "shows", "defines", "obtains",
                            "and", "if", "for")
_PROOF_STARTERS = ("proof", "by", "apply", "using", "unfolding", "sorry",
                   "oops", "done", "..", ".")
_TOP_LEVEL = _GOAL_KEYWORDS + ("definition", "fun", "primrec", "abbreviation",
                               "datatype", "type_synonym", "axiomatization",
                               "locale", "end")


def _first_token(line: str) -> str:
    stripped = line.strip()
    return stripped.split(None, 1)[0] if stripped else ""


def repair_import_token(token: str, lexicon) -> str:
    """Nearest lexicon entry within edit distance 2, unique match required;
    known or unmatched tokens pass through unchanged."""
    if token in lexicon:
        return token
    candidates = [entry for entry in lexicon
                  if edit_distance(token, entry) <= 2]
    if len(candidates) == 1:
        return candidates[0]
    return token


def _repair_header_imports(header: str, lexicon) -> str:
    m = re.search(r"\bimports\b(?P<blob>.*?)(?=\bbegin\b|\Z)", header, re.DOTALL)
    if m is None:
        return header
    blob = m.group("blob")

    def fix(tok_match):
        tok = tok_match.group(0)
        quoted = tok.startswith('"')
        bare = tok[1:-1] if quoted else tok
        fixed = repair_import_token(bare, lexicon)
        if fixed == bare:
            return tok
        return f'"{fixed}"' if (quoted or not re.fullmatch(
            r"[A-Za-z0-9_\-]+", fixed)) else fixed

    fixed_blob = re.sub(r'"[^"]+"|\S+', fix, blob)
    return header[:m.start("blob")] + fixed_blob + header[m.end("blob"):]


def proof_region_is_sound(lines) -> bool:
    """Structural sanity of an Isabelle proof region: proof/qed balanced,
    cases separated by next, every show closed before the next step."""
    depth = 0
    open_show = False
    seen_case_at_depth = {}
    for line in lines:
        tok = _first_token(line)
        if tok == "proof":
            depth += 1
            open_show = False
        elif tok == "qed":
            depth -= 1
            if depth < 0:
                return False
            seen_case_at_depth.pop(depth + 1, None)
            open_show = False
        elif tok == "next":
            seen_case_at_depth.pop(depth, None)
            open_show = False
        elif tok == "case":
            if seen_case_at_depth.get(depth):
                return False  # consecutive cases without next
            seen_case_at_depth[depth] = True
        elif tok in ("show", "have", "obtain", "thus", "hence"):
            if open_show:
                return False  # previous show never discharged
            if tok == "show":
                open_show = True
        if open_show and (re.search(r"\bby\b", line) or tok == "sorry"
                          or ".." in line):
            open_show = False
        if open_show and tok == "proof":
            open_show = False
    return depth == 0


def _canonical_terminal(lines) -> Optional[str]:
    """A proof region that is a bare terminator normalizes to column 0."""
    text = " ".join(l.strip() for l in lines).strip()
    if text in ("sorry", "oops", "done"):
        return text
    return None


def _split_goal_block(lines):
    """Split a goal block into statement lines and proof-region lines."""
    in_statement = True
    statement, proof = [], []
    for i, line in enumerate(lines):
        tok = _first_token(line)
        if in_statement and i > 0 and (
                tok in _PROOF_STARTERS
                or (tok and tok not in _STATEMENT_CONTINUATIONS
                    and not line.strip().startswith('"')
                    and tok not in _GOAL_KEYWORDS)):
            in_statement = False
        (statement if in_statement else proof).append(line)
    return statement, proof


def _repair_goal_block(lines, missing_end: bool):
    statement, proof = _split_goal_block(lines)
    terminal = _canonical_terminal(proof)
    if terminal is not None:
        return statement + [terminal]
    if not proof:
        return statement + ["sorry"]
    first = _first_token(proof[0])
    if first in ("by", "using", "unfolding", "apply", "..", "."):
        if not missing_end:
            return statement + proof
        return statement + ["sorry"]
    if proof_region_is_sound(proof) and not missing_end:
        return statement + proof
    return statement + ["sorry"]


def denoise(formalization: Formalization, theory_name: str = "Scratch",
            lexicon=None) -> Formalization:
    """Rule-based cleanup with no LLM call: strip prose and fences, repair
    truncated import names against a known-imports lexicon, replace broken
    proof scripts with sorry, and re-wrap. Total and idempotent."""
    lexicon = tuple(lexicon) if lexicon is not None else DEFAULT_IMPORT_LEXICON
    language = formalization.language
    code = extract_code_block(formalization.code, language)

    if language is FormalLanguage.ISABELLE_HOL:
        code = _denoise_isabelle(code, lexicon)

    try:
        code = wrap_theory(code, language, theory_name)
    except Exception:
        pass  # denoise is total; keep the cleaned code as-is
    return Formalization(code=code, language=language,
                         origin=Origin.DENOISED, parent=formalization)


def _denoise_isabelle(code: str, lexicon) -> str:
    lines = code.splitlines()

    # locate header (theory ... begin), body, trailing end
    begin_idx = None
    if lines and _first_token(lines[0]) == "theory":
        for i, line in enumerate(lines):
            if re.search(r"\bbegin\b", line):
                begin_idx = i
                break
        if begin_idx is None:
            return code  # header but no begin: leave for wrap_theory/prover
    if begin_idx is None:
        header_lines, body = [], list(lines)
        missing_end = False
    else:
        header = "\n".join(lines[:begin_idx + 1])
        header_lines = _repair_header_imports(header, lexicon).splitlines()
        rest = lines[begin_idx + 1:]
        missing_end = not (rest and rest[-1].strip() == "end")
        body = rest[:-1] if not missing_end else rest

    # group body into top-level blocks and repair goal blocks
    blocks, current = [], []
    for line in body:
        if _first_token(line) in _TOP_LEVEL and current:
            blocks.append(current)
            current = []
        current.append(line)
    if current:
        blocks.append(current)

    out = []
    for block in blocks:
        if _first_token(block[0]) in _GOAL_KEYWORDS:
            out.extend(_repair_goal_block(block, missing_end))
        else:
            out.extend(block)
    while out and not out[-1].strip():
        out.pop()

    if begin_idx is None:
        return "\n".join(out)
    return "\n".join(header_lines + out + ["end"])


# ---------------------------------------------------------------------------
# tool agent: import retrieval


_ISABELLE_RESERVED = frozenset(
    "theory imports begin end definition lemma theorem corollary fun primrec "
    "where fixes assumes shows and is if then else let in case of proof qed "
    "by using unfolding apply sorry oops done have show from with obtain "
    "datatype for map".split())
_LEAN_RESERVED = frozenset(
    "import theorem def example lemma by sorry fun match with let in if then "
    "else have show from exact intro apply end namespace open variable".split())

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_']*")


def _code_identifiers(code: str, language: FormalLanguage) -> list:
    reserved = (_ISABELLE_RESERVED if language is FormalLanguage.ISABELLE_HOL
                else _LEAN_RESERVED)
    seen = dict.fromkeys(_IDENT.findall(code))
    return [tok for tok in seen if tok.lower() not in reserved]


def _undefined_tokens(diagnostics_text: str) -> list:
    out = []
    for line in diagnostics_text.splitlines():
        if "undefined" in line.lower():
            out.extend(re.findall(r'"([^"]+)"', line))
            out.extend(_IDENT.findall(re.sub(r'"[^"]*"', " ", line)))
    return out


def retrieve_imports(formalization: Formalization, kb_index, kb_records,
                     top_n: int, diagnostics_text: str = "",
                     theory_name: str = "Scratch") -> Formalization:
    """Add imports of the KB records best matching the code's identifiers
    (plus tokens of any 'Undefined ...' diagnostics). Existing imports are
    never removed."""
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    terms = _code_identifiers(formalization.code, formalization.language)
    if diagnostics_text:
        terms += _undefined_tokens(diagnostics_text)
    hits = kb_query(kb_index, " ".join(terms), top_n) if terms else []
    by_id = {rec.id: rec for rec in kb_records}
    imports = []
    for doc_id, _score in hits:
        for imp in by_id[doc_id].abs_imports:
            if imp not in imports:
                imports.append(imp)
    code = wrap_theory(formalization.code, formalization.language,
                       theory_name, imports)
    return Formalization(code=code, language=formalization.language,
                         origin=Origin.IMPORT_RETRIEVAL, parent=formalization)
