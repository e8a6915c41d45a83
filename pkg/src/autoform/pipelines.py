"""The three orchestration pipelines over the agents, with full lineage
logging into a run directory:

  * hcfr -- hard critique, then one formal refinement on failure
  * scir -- soft critique, then one informal refinement on a False judgment
  * isr  -- n iterations of hard critique / formal refinement, falling
            through to soft critique / informal refinement on a pass

Run directory layout: config.json snapshot, events.jsonl (one JSON object
per event), llm_cache.jsonl (when a cache is used), report.json.
"""
from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from typing import Optional

from .agents import (ASPECT_AF, autoformalize, denoise, formal_refine,
                     hard_critique, informal_refine, retrieve_imports,
                     soft_critique)
from .core import (AspectDescription, CritiqueKind, CritiqueResult,
                   FormalLanguage, Formalization, FormalizationRecord,
                   InformalStatement, Origin)
from .errors import CorruptLog, JudgmentUnparseable, PipelineFailed
from .kb import build_index
from .llm import GenerationParams, ScriptedBackend
from .metrics import (chrf, corpus_bleu4, MetricReport, ruby,
                      ruby_operative_level, tokenize_formal)

PIPELINES = ("hcfr", "scir", "isr")

_ROLES_REQUIRED = {
    "hcfr": ("m1", "m3"),
    "scir": ("m1", "m2", "m3"),
    "isr": ("m1", "m2"),
}


@dataclass
class PipelineConfig:
    language: FormalLanguage
    backends: dict  # role -> Backend, roles: m1 (generate), m2 (judge), m3 (refine)
    prover_pool: Optional[object] = None
    params: GenerationParams = field(default_factory=GenerationParams)
    exemplars: list = field(default_factory=list)
    aspect: AspectDescription = ASPECT_AF
    n_iterations: int = 1
    denoise_enabled: bool = False
    import_retrieval_enabled: bool = False
    top_n: int = 1
    kb_records: list = field(default_factory=list)
    workers: int = 1
    deterministic_log: bool = False

    def validate(self, pipeline: str) -> None:
        if pipeline not in PIPELINES:
            raise ValueError(f"unknown pipeline {pipeline!r}")
        for role in _ROLES_REQUIRED[pipeline]:
            if role not in self.backends:
                raise ValueError(f"pipeline {pipeline!r} needs backend "
                                 f"role {role!r}")
        if pipeline in ("hcfr", "isr") and self.prover_pool is None:
            raise ValueError(f"pipeline {pipeline!r} needs a prover pool")
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be >= 1")
        ordered = any(isinstance(b, ScriptedBackend) and b.ordered
                      for b in self.backends.values())
        if ordered and self.workers != 1:
            raise ValueError("ordered scripted backends require workers=1")


class EventLog:
    """Append-only serialized event sink. With deterministic timestamps the
    log is byte-identical across identical runs."""

    def __init__(self, path=None, deterministic: bool = False):
        self.path = str(path) if path is not None else None
        self.deterministic = deterministic
        self.events: list = []
        self._fh = open(self.path, "w", encoding="utf-8") if self.path else None

    def emit(self, item_id: str, kind: str, payload: dict) -> None:
        event = {
            "seq": len(self.events),
            "item_id": item_id,
            "kind": kind,
            "payload": payload,
            "ts": 0.0 if self.deterministic else time.time(),
        }
        self.events.append(event)
        if self._fh is not None:
            self._fh.write(json.dumps(event, sort_keys=True,
                                      ensure_ascii=False) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def _critique_payload(c: CritiqueResult) -> dict:
    return {
        "kind": c.kind.value,
        "verdict": c.verdict,
        "detail": c.detail,
        "timed_out": c.timed_out,
        "aspect": None if c.aspect is None else
                  {"name": c.aspect.name, "description": c.aspect.description},
    }


def _log_attempt(log, record, item_id, f: Formalization) -> None:
    record.add_attempt(f)
    log.emit(item_id, "formalization",
             {"origin": f.origin.value, "code": f.code,
              "language": f.language.value})


def _log_critique(log, record, item_id, c: CritiqueResult) -> None:
    record.add_critique(c)
    log.emit(item_id, "critique", _critique_payload(c))


def _pre_critique_tools(config, record, log, stmt, f):
    if config.denoise_enabled:
        f = denoise(f, theory_name=stmt.id)
        _log_attempt(log, record, stmt.id, f)
    if config.import_retrieval_enabled:
        index = build_index(config.kb_records)
        f = retrieve_imports(f, index, config.kb_records, config.top_n,
                             theory_name=stmt.id)
        _log_attempt(log, record, stmt.id, f)
    return f


def _run_items(dataset, config, pipeline, item_fn, run_dir):
    config.validate(pipeline)
    log = _open_log(run_dir, config, pipeline)
    records = []
    try:
        for stmt in dataset:
            record = FormalizationRecord(statement=stmt)
            log.emit(stmt.id, "item_start", {
                "text": stmt.text, "metadata": dict(stmt.metadata)})
            try:
                item_fn(stmt, record, log)
            except Exception as exc:  # per-item isolation
                record.error = f"{type(exc).__name__}: {exc}"
                log.emit(stmt.id, "item_error", {"message": record.error})
            log.emit(stmt.id, "item_end", {})
            records.append(record)
        log.emit("", "run_end", {"n_items": len(records)})
    finally:
        log.close()
    if dataset and not any(r.attempts and r.error is None for r in records):
        raise PipelineFailed("no item completed")
    return records


def _open_log(run_dir, config, pipeline) -> EventLog:
    if run_dir is None:
        return EventLog(None, config.deterministic_log)
    os.makedirs(run_dir, exist_ok=True)
    snapshot = {
        "pipeline": pipeline,
        "language": config.language.value,
        "aspect": {"name": config.aspect.name,
                   "description": config.aspect.description},
        "n_iterations": config.n_iterations,
        "denoise_enabled": config.denoise_enabled,
        "import_retrieval_enabled": config.import_retrieval_enabled,
        "top_n": config.top_n,
        "workers": config.workers,
        "backends": {role: b.backend_id
                     for role, b in sorted(config.backends.items())},
        "params": {"model": config.params.model,
                   "temperature": config.params.temperature,
                   "max_tokens": config.params.max_tokens,
                   "seed": config.params.seed},
    }
    with open(os.path.join(run_dir, "config.json"), "w",
              encoding="utf-8") as fh:
        json.dump(snapshot, fh, sort_keys=True, indent=2)
    return EventLog(os.path.join(run_dir, "events.jsonl"),
                    config.deterministic_log)


def run_hcfr(dataset, config: PipelineConfig, run_dir=None):
    """Autoformalize, hard-critique, and refine once on failure (no
    re-check after the refinement)."""

    def item(stmt, record, log):
        f = autoformalize(stmt, config.exemplars, config.language,
                          config.backends["m1"], config.params)
        _log_attempt(log, record, stmt.id, f)
        f = _pre_critique_tools(config, record, log, stmt, f)
        c = hard_critique(f, config.prover_pool, theory_name=stmt.id)
        _log_critique(log, record, stmt.id, c)
        if not c.verdict and not c.timed_out:
            refined = formal_refine(stmt, f, c.detail,
                                    config.backends["m3"], config.params,
                                    correctness=False)
            _log_attempt(log, record, stmt.id, refined)

    return _run_items(dataset, config, "hcfr", item, run_dir)


def run_scir(dataset, config: PipelineConfig, run_dir=None):
    """Autoformalize with m1, judge with m2, and refine once with m3 on a
    False judgment. No prover involvement."""

    def item(stmt, record, log):
        f = autoformalize(stmt, config.exemplars, config.language,
                          config.backends["m1"], config.params)
        _log_attempt(log, record, stmt.id, f)
        try:
            c = soft_critique(stmt, f, config.aspect,
                              config.backends["m2"], config.params)
        except JudgmentUnparseable as exc:
            # cannot justify refining on an unparsed judgment
            log.emit(stmt.id, "judgment_unparseable", {"message": str(exc)})
            return
        _log_critique(log, record, stmt.id, c)
        if not c.verdict:
            refined = informal_refine(stmt, f, config.aspect, c.detail,
                                      config.backends["m3"], config.params)
            _log_attempt(log, record, stmt.id, refined)

    return _run_items(dataset, config, "scir", item, run_dir)


def run_isr(dataset, config: PipelineConfig, run_dir=None):
    """n iterations per item: hard-critique then formal refinement on
    failure, otherwise soft critique then informal refinement on a False
    judgment. Both refiners share m1; the judge is m2. The loop never exits
    early: a passing item simply stays unrefined."""

    def item(stmt, record, log):
        f = autoformalize(stmt, config.exemplars, config.language,
                          config.backends["m1"], config.params)
        _log_attempt(log, record, stmt.id, f)
        f = _pre_critique_tools(config, record, log, stmt, f)
        for iteration in range(1, config.n_iterations + 1):
            log.emit(stmt.id, "iteration", {"index": iteration})
            c = hard_critique(f, config.prover_pool, theory_name=stmt.id)
            _log_critique(log, record, stmt.id, c)
            if c.timed_out:
                continue  # recorded, next iteration; no refinement on timeout
            if not c.verdict:
                f = formal_refine(stmt, f, c.detail,
                                  config.backends["m1"], config.params,
                                  correctness=False)
                _log_attempt(log, record, stmt.id, f)
                continue
            try:
                s = soft_critique(stmt, f, config.aspect,
                                  config.backends["m2"], config.params)
            except JudgmentUnparseable as exc:
                log.emit(stmt.id, "judgment_unparseable",
                         {"message": str(exc)})
                continue
            _log_critique(log, record, stmt.id, s)
            if not s.verdict:
                f = informal_refine(stmt, f, config.aspect, s.detail,
                                    config.backends["m1"], config.params)
                _log_attempt(log, record, stmt.id, f)

    return _run_items(dataset, config, "isr", item, run_dir)


# ---------------------------------------------------------------------------
# replay


_ORIGIN_BY_VALUE = {o.value: o for o in Origin}


def replay(run_dir) -> list:
    """Reconstruct the run's records from its event log alone; no backend
    or prover calls, and no dependence on the LLM cache."""
    path = os.path.join(run_dir, "events.jsonl")
    if not os.path.exists(path):
        raise CorruptLog(f"no events.jsonl in {run_dir}")
    records = []
    by_id = {}
    saw_run_end = False
    lineno = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            try:
                event = json.loads(line)
                kind = event["kind"]
                item_id = event["item_id"]
                payload = event["payload"]
            except (json.JSONDecodeError, KeyError) as exc:
                raise CorruptLog(f"unreadable event: {exc}", line=lineno)
            if kind == "run_end":
                saw_run_end = True
            elif kind == "item_start":
                stmt = InformalStatement(id=item_id, text=payload["text"],
                                         metadata=payload.get("metadata", {}))
                record = FormalizationRecord(statement=stmt)
                by_id[item_id] = record
                records.append(record)
            elif kind == "formalization":
                record = by_id[item_id]
                parent = (record.attempts[-1][0] if record.attempts else None)
                origin = _ORIGIN_BY_VALUE[payload["origin"]]
                record.add_attempt(Formalization(
                    code=payload["code"],
                    language=FormalLanguage(payload["language"]),
                    origin=origin,
                    parent=None if origin in (Origin.ZERO_SHOT,
                                              Origin.FEW_SHOT) else parent))
            elif kind == "critique":
                aspect = payload.get("aspect")
                by_id[item_id].add_critique(CritiqueResult(
                    kind=CritiqueKind(payload["kind"]),
                    verdict=payload["verdict"],
                    detail=payload["detail"],
                    timed_out=payload.get("timed_out", False),
                    aspect=None if aspect is None else AspectDescription(
                        name=aspect["name"],
                        description=aspect["description"])))
            elif kind == "item_error":
                by_id[item_id].error = payload["message"]
    if not saw_run_end:
        raise CorruptLog("log ends before run_end", line=lineno + 1)
    return records


# ---------------------------------------------------------------------------
# report construction (pure function of records + references)


def item_passed(record: FormalizationRecord) -> Optional[bool]:
    """Verdict of the item's last hard critique; None when the run never
    hard-critiqued it (e.g. scir)."""
    verdict = None
    for c in record.critiques():
        if c.kind is CritiqueKind.HARD:
            verdict = bool(c.verdict) and not c.timed_out
    return verdict


def build_report(records, references: Optional[dict] = None,
                 af_pct: Optional[float] = None,
                 fc_pct: Optional[float] = None,
                 judge_verdicts: Optional[dict] = None,
                 flagged: Optional[list] = None) -> MetricReport:
    """references maps statement id -> ground-truth formal text."""
    references = references or {}
    judge_verdicts = judge_verdicts or {}
    items = []
    cands, refs = [], []
    passes = []
    chrf_pairs, ruby_pairs = [], []
    for record in records:
        sid = record.statement.id
        passed = item_passed(record)
        if passed is not None:
            passes.append(passed)
        entry = {"id": sid, "pass": passed,
                 "error": record.error,
                 "attempts": len(record.attempts),
                 "bleu4": None, "chrf": None, "ruby": None}
        entry.update(judge_verdicts.get(sid, {}))
        ref = references.get(sid)
        if ref is not None and record.attempts:
            cand_code = record.final_formalization.code
            cands.append(tokenize_formal(cand_code))
            refs.append([tokenize_formal(ref)])
            from .metrics import bleu4 as sentence_bleu
            entry["bleu4"] = round(sentence_bleu(cands[-1], refs[-1]), 2)
            entry["chrf"] = round(chrf(cand_code, ref), 2)
            entry["ruby"] = round(ruby(cand_code, ref), 2)
            chrf_pairs.append((cand_code, ref))
            ruby_pairs.append((cand_code, ref))
        items.append(entry)
    corpus_bleu = corpus_bleu4(cands, refs) if cands else 0.0
    corpus_chrf = (sum(chrf(c, r) for c, r in chrf_pairs) / len(chrf_pairs)
                   if chrf_pairs else 0.0)
    corpus_ruby = (sum(ruby(c, r) for c, r in ruby_pairs) / len(ruby_pairs)
                   if ruby_pairs else 0.0)
    rate = (100.0 * sum(passes) / len(passes)) if passes else 0.0
    return MetricReport(
        bleu4=corpus_bleu, chrf=corpus_chrf, ruby=corpus_ruby,
        pass_rate=rate, n_items=len(records),
        af_pct=af_pct, fc_pct=fc_pct,
        ruby_level=ruby_operative_level(),
        items=items, flagged_unparseable=list(flagged or []))
