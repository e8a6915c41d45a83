"""Evaluation metrics: pass rate, BLEU-4, chrF, RUBY, and judge aggregation.

All scores are percentages in [0, 100]. BLEU and chrF have independent
brute-force oracles in the test suite; the implementations here use pooled
n-gram counting.
"""
from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from .errors import EmptyInput, JudgmentUnparseable


def edit_distance(a, b) -> int:
    """Levenshtein distance over any two sequences (strings or token lists)."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i]
        for j, y in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1,
                           prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


# operators that get whitespace inserted around them before splitting, so
# token boundaries track code structure rather than raw whitespace
_OPERATORS = ("::", "⇒", "=>", "λ", "%", "|", '"', "(", ")", "[", "]",
              "{", "}", ",", ":", "=", "≤", "≥", "<", ">", "+", "-", "*",
              "/", "^", "!", ";")
_OP_PATTERN = re.compile("(" + "|".join(re.escape(op) for op in
                                        sorted(_OPERATORS, key=len,
                                               reverse=True)) + ")")


def tokenize_formal(text: str) -> list:
    """Whitespace tokenization after spacing out punctuation and formal-
    language operators; shared by BLEU and RUBY."""
    return _OP_PATTERN.sub(r" \1 ", text).split()


# ---------------------------------------------------------------------------
# BLEU-4


def _ngram_counts(tokens, n) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _bleu_stats(candidate, references, max_order=4):
    """Per-order (clipped match count, candidate count) plus candidate and
    effective reference lengths."""
    matches = [0] * max_order
    totals = [0] * max_order
    for n in range(1, max_order + 1):
        cand = _ngram_counts(candidate, n)
        best = Counter()
        for ref in references:
            for gram, cnt in _ngram_counts(ref, n).items():
                if cnt > best[gram]:
                    best[gram] = cnt
        matches[n - 1] = sum(min(cnt, best[gram])
                             for gram, cnt in cand.items())
        totals[n - 1] = max(len(candidate) - n + 1, 0)
    ref_len = min((len(r) for r in references),
                  key=lambda rl: (abs(rl - len(candidate)), rl))
    return matches, totals, len(candidate), ref_len


def _bleu_from_stats(matches, totals, cand_len, ref_len) -> float:
    if cand_len == 0:
        return 0.0
    log_sum = 0.0
    orders = 0
    for m, t in zip(matches, totals):
        if t == 0:
            continue  # candidate too short for this order: effective-order BLEU
        if m == 0:
            # add-one smoothing, applied only to zero-match orders
            m, t = m + 1, t + 1
        log_sum += math.log(m / t)
        orders += 1
    if orders == 0:
        return 0.0
    precision_mean = math.exp(log_sum / orders)
    bp = 1.0 if cand_len > ref_len else math.exp(1 - ref_len / cand_len)
    return 100.0 * bp * precision_mean


def bleu4(candidate, references) -> float:
    """Sentence BLEU with n-gram orders 1-4, uniform weights, standard
    brevity penalty, add-one smoothing on zero-match orders."""
    if not references:
        raise ValueError("references must be non-empty")
    if not candidate:
        return 0.0
    return _bleu_from_stats(*_bleu_stats(candidate, list(references)))


def corpus_bleu4(candidates, references_per_item) -> float:
    """Corpus BLEU: n-gram and length statistics pooled over all items."""
    if len(candidates) != len(references_per_item) or not candidates:
        raise ValueError("need one reference list per candidate")
    agg_m = [0] * 4
    agg_t = [0] * 4
    cand_len = ref_len = 0
    for cand, refs in zip(candidates, references_per_item):
        m, t, cl, rl = _bleu_stats(cand, list(refs))
        agg_m = [a + b for a, b in zip(agg_m, m)]
        agg_t = [a + b for a, b in zip(agg_t, t)]
        cand_len += cl
        ref_len += rl
    return _bleu_from_stats(agg_m, agg_t, cand_len, ref_len)


# ---------------------------------------------------------------------------
# chrF


def _char_ngrams(text: str, n: int) -> Counter:
    chars = [c for c in text if not c.isspace()]
    return Counter(tuple(chars[i:i + n]) for i in range(len(chars) - n + 1))


def chrf(candidate: str, reference: str, max_order: int = 6,
         beta: float = 2.0) -> float:
    """Character n-gram F-score, orders 1..max_order, whitespace excluded.
    Per-order precision/recall are macro-averaged before the F computation."""
    cand_stripped = "".join(candidate.split())
    ref_stripped = "".join(reference.split())
    if not cand_stripped and not ref_stripped:
        return 100.0
    if not cand_stripped or not ref_stripped:
        return 0.0
    precisions, recalls = [], []
    for n in range(1, max_order + 1):
        cand = _char_ngrams(candidate, n)
        ref = _char_ngrams(reference, n)
        cand_total = sum(cand.values())
        ref_total = sum(ref.values())
        if cand_total == 0 and ref_total == 0:
            continue  # both too short for this order
        overlap = sum(min(cnt, ref[gram]) for gram, cnt in cand.items())
        precisions.append(overlap / cand_total if cand_total else 0.0)
        recalls.append(overlap / ref_total if ref_total else 0.0)
    avg_p = sum(precisions) / len(precisions)
    avg_r = sum(recalls) / len(recalls)
    if avg_p == 0.0 and avg_r == 0.0:
        return 0.0
    b2 = beta * beta
    return 100.0 * (1 + b2) * avg_p * avg_r / (b2 * avg_p + avg_r)


# ---------------------------------------------------------------------------
# RUBY


def _string_edit_similarity(candidate: str, reference: str) -> float:
    c = tokenize_formal(candidate)
    r = tokenize_formal(reference)
    if not c and not r:
        return 100.0
    if not c or not r:
        return 0.0
    return 100.0 * (1.0 - edit_distance(c, r) / max(len(c), len(r)))


def _unavailable(candidate: str, reference: str) -> Optional[float]:
    return None


#: Fallback chain: the first level returning a score wins. Dependency-graph
#: and tree similarity have no Isabelle/Lean parser wired in, so they report
#: unavailable and the operative level is token edit similarity. Richer
#: levels can be plugged in by replacing the callables.
DEFAULT_RUBY_CHAIN = (
    ("dependency_graph", _unavailable),
    ("tree", _unavailable),
    ("string_edit", _string_edit_similarity),
)


def ruby(candidate: str, reference: str, chain=DEFAULT_RUBY_CHAIN) -> float:
    for _name, level in chain:
        score = level(candidate, reference)
        if score is not None:
            return score
    raise ValueError("no similarity level in the chain produced a score")


def ruby_operative_level(chain=DEFAULT_RUBY_CHAIN) -> str:
    """Name of the first level that actually scores (for report output)."""
    for name, level in chain:
        if level("a", "a") is not None:
            return name
    return "none"


# ---------------------------------------------------------------------------
# aggregate metrics


def pass_rate(outcomes) -> float:
    outcomes = list(outcomes)
    if not outcomes:
        raise EmptyInput("pass_rate needs at least one outcome")
    return 100.0 * sum(bool(o) for o in outcomes) / len(outcomes)


@dataclass
class MetricReport:
    bleu4: float
    chrf: float
    ruby: float
    pass_rate: float
    n_items: int
    af_pct: Optional[float] = None
    fc_pct: Optional[float] = None
    ruby_level: str = "string_edit"
    items: list = field(default_factory=list)
    flagged_unparseable: list = field(default_factory=list)

    def to_json(self) -> str:
        obj = {
            "corpus": {
                "bleu4": round(self.bleu4, 2),
                "chrf": round(self.chrf, 2),
                "ruby": round(self.ruby, 2),
                "pass_rate": round(self.pass_rate, 2),
                "af_pct": None if self.af_pct is None else round(self.af_pct, 2),
                "fc_pct": None if self.fc_pct is None else round(self.fc_pct, 2),
                "n_items": self.n_items,
                "ruby_level": self.ruby_level,
            },
            "items": self.items,
            "flagged_unparseable": self.flagged_unparseable,
        }
        return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False)

    def summary_table(self) -> str:
        # Column order mirrors standard MT-metric result tables.
        header = f"{'BLEU-4':>8} {'ChrF':>8} {'RUBY':>8} {'Pass':>8}"
        row = (f"{self.bleu4:8.2f} {self.chrf:8.2f} {self.ruby:8.2f} "
               f"{self.pass_rate:8.2f}")
        lines = [header, row]
        if self.af_pct is not None or self.fc_pct is not None:
            af = "-" if self.af_pct is None else f"{self.af_pct:.2f}"
            fc = "-" if self.fc_pct is None else f"{self.fc_pct:.2f}"
            lines.append(f"AF: {af}  FC: {fc}")
        lines.append(f"items: {self.n_items}  (RUBY level: {self.ruby_level})")
        return "\n".join(lines)


def judge_aggregate(records, aspect, backend, params) -> tuple:
    """Percentage of records whose final formalization the judge accepts for
    the aspect. Unparseable judgments count as False and are flagged.

    Returns (percentage, per_item_verdicts, flagged_ids)."""
    from .agents import soft_critique  # deferred: avoids an import cycle

    verdicts, flagged = [], []
    for record in records:
        try:
            result = soft_critique(record.statement,
                                   record.final_formalization,
                                   aspect, backend, params)
            verdicts.append((record.statement.id, result.verdict))
        except JudgmentUnparseable:
            verdicts.append((record.statement.id, False))
            flagged.append(record.statement.id)
    pct = pass_rate([v for _, v in verdicts])
    return pct, verdicts, flagged
