"""Benchmark harness CLI: dataset ingestion, pipeline execution, metric
reports, standalone prover checks, run replay.

Subcommands: run, eval, check, replay.
Exit codes: 0 success, 1 usage error, 2 pipeline failed / prover
unavailable, 3 check failed.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .agents import BUILTIN_ASPECTS, hard_critique
from .core import (AspectDescription, ExemplarPair, FormalLanguage,
                   Formalization, Origin)
from .errors import (AutoformError, LaunchFailed, MissingField,
                     MissingGroundTruth, ParseError, PipelineFailed,
                     SessionUnavailable)
from .kb import load_kb
from .llm import (CachedBackend, GenerationParams, OpenAICompatibleBackend,
                  ResponseCache, ScriptedBackend)
from .metrics import chrf, judge_aggregate, ruby, tokenize_formal
from .pipelines import (PipelineConfig, PIPELINES, build_report, replay,
                        run_hcfr, run_isr, run_scir)
from .provers import MockProver, ProverConfig, ProverPool, pool_from_config
from .provers.base import Diagnostic, Severity

_LANGUAGES = {
    "isabelle": FormalLanguage.ISABELLE_HOL,
    "isabelle/hol": FormalLanguage.ISABELLE_HOL,
    "lean4": FormalLanguage.LEAN4,
    "lean": FormalLanguage.LEAN4,
}


def parse_language(name: str) -> FormalLanguage:
    try:
        return _LANGUAGES[name.lower()]
    except KeyError:
        raise UsageError(f"unknown formal language {name!r}")


@dataclass(frozen=True)
class DatasetEntry:
    id: str
    informal: str
    language: FormalLanguage
    ground_truth: Optional[str] = None
    split: str = ""

    def __post_init__(self):
        if not self.informal.strip():
            raise ValueError("informal text must be non-empty")
        if self.ground_truth is not None and not self.ground_truth.strip():
            raise ValueError("ground_truth, when present, must be non-empty")


def load_dataset(path, language: FormalLanguage) -> list:
    """JSON-lines dataset: {id, informal, formal?, split?} per line."""
    entries, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(exc.msg, line=lineno, column=exc.colno)
            for field_name in ("id", "informal"):
                if field_name not in obj:
                    raise MissingField(f"missing field {field_name!r}",
                                       line=lineno)
            if obj["id"] in seen:
                raise ParseError(f"duplicate id {obj['id']!r}", line=lineno)
            seen.add(obj["id"])
            try:
                entries.append(DatasetEntry(
                    id=str(obj["id"]), informal=obj["informal"],
                    language=language, ground_truth=obj.get("formal"),
                    split=obj.get("split", "")))
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno)
    return entries


def statements_from_entries(entries) -> list:
    from .core import InformalStatement
    out = []
    for e in entries:
        meta = {"split": e.split}
        if e.ground_truth is not None:
            meta["ground_truth"] = e.ground_truth
        out.append(InformalStatement(id=e.id, text=e.informal, metadata=meta))
    return out


# ---------------------------------------------------------------------------
# config file


class UsageError(AutoformError):
    pass


def _resolve(base_dir, path):
    return path if os.path.isabs(path) else os.path.join(base_dir, path)


def load_script(path) -> ScriptedBackend:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if "replies" in doc:
        return ScriptedBackend(replies=doc["replies"],
                               backend_id=doc.get("id", "scripted"))
    if "by_key" in doc:
        return ScriptedBackend(by_key=doc["by_key"],
                               backend_id=doc.get("id", "scripted"))
    raise UsageError(f"script {path} needs 'replies' or 'by_key'")


def _build_backend(role, conf, base_dir, run_dir):
    kind = conf.get("kind", "remote")
    if kind == "scripted":
        backend = load_script(_resolve(base_dir, conf["script"]))
        backend.backend_id = conf.get("id", f"scripted-{role}")
    elif kind == "remote":
        backend = OpenAICompatibleBackend(
            base_url=conf.get("base_url", "https://api.openai.com/v1"),
            api_key_env=conf.get("api_key_env", "OPENAI_API_KEY"),
            backend_id=conf.get("id", f"remote-{role}"))
    else:
        raise UsageError(f"unknown backend kind {kind!r} for role {role}")
    if conf.get("cache"):
        cache_path = conf["cache"]
        if cache_path == "run":
            cache_path = os.path.join(run_dir or ".", "llm_cache.jsonl")
        else:
            cache_path = _resolve(base_dir, cache_path)
        backend = CachedBackend(backend, ResponseCache(cache_path))
    return backend


def _build_prover_config(conf, language) -> ProverConfig:
    rules = []
    for rule in conf.get("rules", []):
        severity = Severity(rule.get("severity", "error"))
        rules.append((rule["substring"],
                      [Diagnostic(severity, rule["message"])]))
    return ProverConfig(
        kind=conf.get("kind", "mock"),
        language=language,
        timeout=conf.get("timeout", 120.0),
        pool_size=conf.get("pool_size", 1),
        lean_repl_cmd=conf.get("lean_repl_cmd", ["repl"]),
        lean_cwd=conf.get("lean_cwd"),
        isabelle_host=conf.get("host", "127.0.0.1"),
        isabelle_port=conf.get("port", 0),
        isabelle_password=conf.get("password", ""),
        isabelle_session=conf.get("session", "HOL"),
        mock_rules=rules)


def load_config(path, run_dir=None, overrides=None):
    """Build a PipelineConfig (plus prover config) from a TOML file."""
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    base_dir = os.path.dirname(os.path.abspath(path))
    overrides = overrides or {}

    pipe = doc.get("pipeline", {})
    language = parse_language(pipe.get("language", "Isabelle/HOL"))

    backends = {}
    aliases = {}
    for role, conf in doc.get("backends", {}).items():
        if "alias" in conf:
            aliases[role] = conf["alias"]
        else:
            backends[role] = _build_backend(role, conf, base_dir, run_dir)
    for role, target in aliases.items():
        if target not in backends:
            raise UsageError(f"backend role {role} aliases unknown {target}")
        backends[role] = backends[target]

    prover_conf = None
    pool = None
    if "prover" in doc:
        prover_conf = _build_prover_config(doc["prover"], language)
        pool = pool_from_config(prover_conf)

    params_conf = doc.get("params", {})
    params = GenerationParams(
        model=params_conf.get("model", "default"),
        temperature=params_conf.get("temperature", 0.0),
        max_tokens=params_conf.get("max_tokens", 2048),
        seed=params_conf.get("seed"))

    exemplars = [ExemplarPair(informal=e["informal"], formal=e["formal"],
                              language=language)
                 for e in doc.get("exemplars", [])]

    aspect_name = overrides.get("aspect") or pipe.get("aspect", "AF")
    if aspect_name in BUILTIN_ASPECTS:
        aspect = BUILTIN_ASPECTS[aspect_name]
    elif os.path.exists(_resolve(base_dir, aspect_name)):
        with open(_resolve(base_dir, aspect_name), encoding="utf-8") as fh:
            obj = json.load(fh)
        aspect = AspectDescription(name=obj["name"],
                                   description=obj["description"])
    else:
        raise UsageError(f"aspect {aspect_name!r} is neither built-in "
                         f"(AF, FC) nor a readable file")

    kb_records = []
    if pipe.get("kb"):
        kb_records = load_kb(_resolve(base_dir, pipe["kb"]))

    config = PipelineConfig(
        language=language,
        backends=backends,
        prover_pool=pool,
        params=params,
        exemplars=exemplars,
        aspect=aspect,
        n_iterations=overrides.get("n_iterations") or pipe.get("n_iterations", 1),
        denoise_enabled=pipe.get("denoise", False),
        import_retrieval_enabled=pipe.get("import_retrieval", False),
        top_n=overrides.get("top_n") or pipe.get("top_n", 1),
        kb_records=kb_records,
        workers=overrides.get("workers") or pipe.get("workers", 1),
        deterministic_log=pipe.get("deterministic_log", False))
    return config


# ---------------------------------------------------------------------------
# subcommands


_RUNNERS = {"hcfr": run_hcfr, "scir": run_scir, "isr": run_isr}


def _references_from_records(records) -> dict:
    return {r.statement.id: r.statement.metadata["ground_truth"]
            for r in records if "ground_truth" in r.statement.metadata}


def _flagged_from_log(run_dir) -> list:
    path = os.path.join(run_dir, "events.jsonl")
    flagged = []
    if os.path.exists(path):
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                try:
                    event = json.loads(line)
                except json.JSONDecodeError:
                    continue
                if event.get("kind") == "judgment_unparseable":
                    flagged.append(event["item_id"])
    return flagged


def _write_report(report, run_dir) -> None:
    with open(os.path.join(run_dir, "report.json"), "w",
              encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")


def cmd_run(args) -> int:
    if args.pipeline not in PIPELINES:
        print(f"error: unknown pipeline {args.pipeline!r}; choose from "
              f"{', '.join(PIPELINES)}", file=sys.stderr)
        return 1
    overrides = {"workers": args.workers, "top_n": args.top_n,
                 "aspect": args.aspect,
                 "n_iterations": args.iterations}
    config = load_config(args.config, run_dir=args.out, overrides=overrides)
    dataset = load_dataset(args.dataset, config.language)
    statements = statements_from_entries(dataset)
    try:
        records = _RUNNERS[args.pipeline](statements, config,
                                          run_dir=args.out)
    except PipelineFailed as exc:
        print(f"pipeline failed: {exc}", file=sys.stderr)
        return 2
    report = build_report(records,
                          references=_references_from_records(records),
                          flagged=_flagged_from_log(args.out))
    _write_report(report, args.out)
    print(report.summary_table())
    return 0


def cmd_eval(args) -> int:
    if args.run_dir:
        records = replay(args.run_dir)
        references = _references_from_records(records)
        af_pct = fc_pct = None
        judge_verdicts = {}
        flagged = _flagged_from_log(args.run_dir)
        if args.af or args.fc:
            if not args.config:
                raise UsageError("--af/--fc need --config with a judge "
                                 "backend (role m2)")
            config = load_config(args.config)
            scored = [r for r in records if r.attempts]
            for flag, aspect_name in ((args.af, "AF"), (args.fc, "FC")):
                if not flag:
                    continue
                pct, verdicts, judge_flagged = judge_aggregate(
                    scored, BUILTIN_ASPECTS[aspect_name],
                    config.backends["m2"], config.params)
                if aspect_name == "AF":
                    af_pct = pct
                else:
                    fc_pct = pct
                for sid, verdict in verdicts:
                    judge_verdicts.setdefault(sid, {})[
                        aspect_name.lower()] = verdict
                flagged.extend(judge_flagged)
        report = build_report(records, references=references,
                              af_pct=af_pct, fc_pct=fc_pct,
                              judge_verdicts=judge_verdicts, flagged=flagged)
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            _write_report(report, args.out)
        print(report.summary_table())
        return 0

    # predictions + references mode
    if not args.predictions:
        raise UsageError("eval needs --run-dir or --predictions")
    if not args.references:
        raise MissingGroundTruth(
            "reference-based metrics requested without --references")
    preds = _load_id_code(args.predictions, "code")
    refs = _load_id_code(args.references, "formal")
    missing = [i for i in preds if i not in refs]
    if missing:
        raise MissingGroundTruth(f"no references for ids: {missing[:5]}")
    from .metrics import corpus_bleu4
    ids = list(preds)
    b = corpus_bleu4([tokenize_formal(preds[i]) for i in ids],
                     [[tokenize_formal(refs[i])] for i in ids])
    c = sum(chrf(preds[i], refs[i]) for i in ids) / len(ids)
    r = sum(ruby(preds[i], refs[i]) for i in ids) / len(ids)
    print(f"{'BLEU-4':>8} {'ChrF':>8} {'RUBY':>8}")
    print(f"{b:8.2f} {c:8.2f} {r:8.2f}")
    return 0


def _load_id_code(path, field_name) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if "id" not in obj:
                raise MissingField("missing field 'id'", line=lineno)
            value = obj.get(field_name, obj.get("code", obj.get("formal")))
            if value is None:
                raise MissingField(f"missing field {field_name!r}",
                                   line=lineno)
            out[str(obj["id"])] = value
    return out


def cmd_check(args) -> int:
    language = parse_language(args.language)
    with open(args.file, encoding="utf-8") as fh:
        code = fh.read()
    if args.mock:
        rules = []
        if args.config:
            with open(args.config, "rb") as fh:
                doc = tomllib.load(fh)
            prover_conf = _build_prover_config(doc.get("prover", {}), language)
            rules = prover_conf.mock_rules
        pool = ProverPool(lambda: MockProver(rules=rules, language=language))
    else:
        if not args.config:
            raise UsageError("check needs --config (or --mock)")
        with open(args.config, "rb") as fh:
            doc = tomllib.load(fh)
        prover_conf = _build_prover_config(doc.get("prover", {}), language)
        prover_conf.language = language
        try:
            pool = pool_from_config(prover_conf)
        except (LaunchFailed, SessionUnavailable) as exc:
            print(f"prover unavailable: {exc}", file=sys.stderr)
            return 2
    formalization = Formalization(code=code, language=language,
                                  origin=Origin.ZERO_SHOT)
    critique = hard_critique(formalization, pool,
                             theory_name=os.path.splitext(
                                 os.path.basename(args.file))[0],
                             timeout=args.timeout)
    if critique.verdict:
        print("PASS")
        return 0
    print("FAIL" + (" (timeout)" if critique.timed_out else ""))
    if critique.detail:
        print(critique.detail)
    return 3


def cmd_replay(args) -> int:
    records = replay(args.run_dir)
    report = build_report(records,
                          references=_references_from_records(records),
                          flagged=_flagged_from_log(args.run_dir))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_report(report, args.out)
    print(report.summary_table())
    return 0


# ---------------------------------------------------------------------------
# entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="autoform",
                     description="Autoformalization pipelines and evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a pipeline over a dataset")
    p_run.add_argument("--pipeline", required=True,
                       help="one of: hcfr, scir, isr")
    p_run.add_argument("--dataset", required=True)
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True, help="run directory")
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--top-n", dest="top_n", type=int, default=None)
    p_run.add_argument("--aspect", default=None,
                       help="AF, FC, or a path to a custom aspect file")
    p_run.add_argument("--iterations", type=int, default=None)

    p_eval = sub.add_parser("eval", help="compute metrics for a run")
    p_eval.add_argument("--run-dir", dest="run_dir")
    p_eval.add_argument("--predictions")
    p_eval.add_argument("--references")
    p_eval.add_argument("--config", help="needed for --af/--fc judging")
    p_eval.add_argument("--af", action="store_true")
    p_eval.add_argument("--fc", action="store_true")
    p_eval.add_argument("--out", help="directory for report.json")

    p_check = sub.add_parser("check", help="hard-critique one code file")
    p_check.add_argument("file")
    p_check.add_argument("--language", required=True)
    p_check.add_argument("--config")
    p_check.add_argument("--mock", action="store_true")
    p_check.add_argument("--timeout", type=float, default=120.0)

    p_replay = sub.add_parser("replay",
                              help="rebuild a report from a run's event log")
    p_replay.add_argument("--run-dir", dest="run_dir", required=True)
    p_replay.add_argument("--out")
    return parser


_COMMANDS = {"run": cmd_run, "eval": cmd_eval, "check": cmd_check,
             "replay": cmd_replay}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except (LaunchFailed, SessionUnavailable) as exc:
        print(f"prover unavailable: {exc}", file=sys.stderr)
        return 2
    except AutoformError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
