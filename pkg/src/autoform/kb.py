"""Knowledge base of formal-library records and a BM25 retriever over it.

KB files are JSON-lines (or a single JSON array) whose objects mirror the
dump schema: type, text, statement, assumes, proof, using, abs_imports,
source, id. Unknown fields are preserved on round-trip.
"""
from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field

from .errors import DuplicateId, ParseError

_KNOWN_FIELDS = ("type", "text", "statement", "assumes", "proof", "using",
                 "abs_imports", "source", "id")


@dataclass(frozen=True)
class KbRecord:
    type: str
    text: str
    statement: str
    assumes: str
    proof: str
    using: tuple
    abs_imports: tuple
    source: str
    id: int
    extra: tuple = ()  # unknown fields, kept for round-tripping

    def __post_init__(self):
        if not self.statement.strip():
            raise ValueError("statement must be non-empty")

    @classmethod
    def from_dict(cls, obj: dict) -> "KbRecord":
        extra = tuple(sorted((k, json.dumps(v, sort_keys=True))
                             for k, v in obj.items() if k not in _KNOWN_FIELDS))
        return cls(
            type=obj.get("type", ""),
            text=obj.get("text", ""),
            statement=obj["statement"],
            assumes=obj.get("assumes", ""),
            proof=obj.get("proof", ""),
            using=tuple(obj.get("using", ())),
            abs_imports=tuple(obj.get("abs_imports", ())),
            source=obj.get("source", ""),
            id=int(obj["id"]),
            extra=extra)

    def to_dict(self) -> dict:
        out = {
            "type": self.type, "text": self.text, "statement": self.statement,
            "assumes": self.assumes, "proof": self.proof,
            "using": list(self.using), "abs_imports": list(self.abs_imports),
            "source": self.source, "id": self.id,
        }
        for k, v in self.extra:
            out[k] = json.loads(v)
        return out


def load_kb(path) -> list:
    """Load KB records from JSON-lines or a JSON array file."""
    with open(path, encoding="utf-8") as fh:
        raw = fh.read()
    if not raw.strip():
        return []

    objs = []
    if raw.lstrip().startswith("["):
        try:
            arr = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, line=exc.lineno, column=exc.colno)
        objs = [(i + 1, o) for i, o in enumerate(arr)]
    else:
        for lineno, line in enumerate(raw.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                objs.append((lineno, json.loads(line)))
            except json.JSONDecodeError as exc:
                raise ParseError(exc.msg, line=lineno, column=exc.colno)

    records, seen = [], set()
    for lineno, obj in objs:
        if "statement" not in obj or "id" not in obj:
            raise ParseError("record missing 'statement' or 'id'", line=lineno)
        try:
            rec = KbRecord.from_dict(obj)
        except (ValueError, TypeError) as exc:
            raise ParseError(str(exc), line=lineno)
        if rec.id in seen:
            raise DuplicateId(f"duplicate record id {rec.id} at line {lineno}")
        seen.add(rec.id)
        records.append(rec)
    return records


# ---------------------------------------------------------------------------
# BM25


_TOKEN = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list:
    """Lowercase and split on non-alphanumerics (so '_' and '.' inside
    identifiers split too). Shared verbatim between indexing and querying."""
    return _TOKEN.findall(text.lower())


@dataclass
class Bm25Index:
    documents: list = field(default_factory=list)  # [(doc_id, Counter)]
    doc_lens: list = field(default_factory=list)
    df: dict = field(default_factory=dict)
    avgdl: float = 0.0
    k1: float = 1.5
    b: float = 0.75

    def __len__(self):
        return len(self.documents)


def record_tokens(record: KbRecord) -> list:
    return tokenize(record.statement + " " + record.text + " " + record.source)


def build_index(records, k1: float = 1.5, b: float = 0.75) -> Bm25Index:
    """Index statement + text + source of each record."""
    index = Bm25Index(k1=k1, b=b)
    for rec in records:
        toks = record_tokens(rec)
        index.documents.append((rec.id, Counter(toks)))
        index.doc_lens.append(len(toks))
    for _, tf in index.documents:
        for tok in tf:
            index.df[tok] = index.df.get(tok, 0) + 1
    if index.doc_lens:
        index.avgdl = sum(index.doc_lens) / len(index.doc_lens)
    return index


def _idf(index: Bm25Index, token: str) -> float:
    n = index.df.get(token, 0)
    return math.log(1.0 + (len(index.documents) - n + 0.5) / (n + 0.5))


def query(index: Bm25Index, query_text: str, top_n: int) -> list:
    """Okapi BM25 ranking: descending score, ties broken by ascending
    doc_id, zero-score documents dropped, at most top_n results."""
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    if not index.documents:
        return []
    q_tokens = tokenize(query_text)
    scored = []
    for (doc_id, tf), dl in zip(index.documents, index.doc_lens):
        s = 0.0
        norm = index.k1 * (1 - index.b + index.b * dl / index.avgdl)
        for tok in q_tokens:
            f = tf.get(tok, 0)
            if f == 0:
                continue
            s += _idf(index, tok) * f * (index.k1 + 1) / (f + norm)
        if s > 0.0:
            scored.append((doc_id, s))
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return scored[:top_n]
