"""Command-line entry point.

Exit codes: 0 success, 1 runtime or I/O error, 2 validation failure in strict mode.
Every pipeline command writes into ``<output_dir>/<command>-<timestamp>-<digest8>/``
together with a ``manifest.json`` recording the config, input digests and
output digests. With a scripted backend the timestamp is fixed, so reruns
land in the same directory with identical bytes.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import shutil
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Sequence

from . import __version__
from .backend.port import AuditLog, ChatBackend, RemoteBackend, load_script_dir
from .bank import SkillBank, bank_summary, load_bank, save_bank
from .config import Config, ConfigError, load_config
from .errors import SkillFormatError, SupportSkillsError
from .evolution import Backends, EvolveConfig, FixedClock, bank_diff, evolve
from .iu import IngestError, corpus_stats, dump_corpus, ingest_corpus
from .metrics import evaluate_pairs, load_pairs
from .prototype import (
    BackendClusterer,
    cluster_prototypes,
    flag_risk,
    group_prototypes,
    read_clusters,
    summary_table,
    write_clusters,
    write_prototypes,
)
from .simulation import GradeBands, SimConfig, batch_simulate, load_profiles, write_transcripts
from .skill import validate_skill
from .synthesis import synthesize_skills, write_skills

log = logging.getLogger("supportskills")

FIXED_TIMESTAMP = "20000101T000000Z"


class StrictFailure(Exception):
    """Input failed validation in strict mode (exit code 2)."""


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    if path.is_dir():
        for p in sorted(q for q in path.rglob("*") if q.is_file()):
            h.update(p.relative_to(path).as_posix().encode())
            h.update(p.read_bytes())
    else:
        h.update(path.read_bytes())
    return h.hexdigest()


class Run:
    """A per-run output directory plus its manifest."""

    def __init__(self, command: str, cfg: Config, inputs: dict[str, str | None]) -> None:
        self.command = command
        self.cfg = cfg
        self.inputs = {k: _sha256(Path(v)) for k, v in inputs.items() if v}
        seed = json.dumps({"command": command, "config": cfg.snapshot(), "inputs": self.inputs}, sort_keys=True)
        self.digest = hashlib.sha256(seed.encode()).hexdigest()
        stamp = FIXED_TIMESTAMP if cfg.scripted else datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
        self.dir = Path(cfg.output_dir) / f"{command}-{stamp}-{self.digest[:8]}"
        if self.dir.exists() and (self.dir / "manifest.json").exists():
            shutil.rmtree(self.dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.stamp = stamp
        self.partial = False
        self.notes: list[str] = []

    def path(self, name: str) -> Path:
        return self.dir / name

    def write_text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8")
        return p

    def write_json(self, name: str, data: Any) -> Path:
        return self.write_text(name, json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n")

    def finish(self) -> None:
        outputs = {
            p.relative_to(self.dir).as_posix(): _sha256(p)
            for p in sorted(self.dir.rglob("*"))
            if p.is_file() and p.name != "manifest.json"
        }
        manifest = {
            "command": self.command,
            "version": __version__,
            "timestamp": self.stamp,
            "digest": self.digest,
            "config": self.cfg.snapshot(),
            "inputs": self.inputs,
            "outputs": outputs,
            "partial": self.partial,
            "notes": self.notes,
        }
        self.write_json("manifest.json", manifest)
        print(f"run directory: {self.dir}")


def make_backend(cfg: Config, run: Run | None) -> ChatBackend:
    audit = AuditLog(run.path("backend_audit.ndjson"), secrets=[cfg.api_key]) if run is not None else None
    if cfg.script_dir:
        return load_script_dir(cfg.script_dir, audit=audit)
    if not cfg.backend_url:
        raise SupportSkillsError("no backend configured: pass --scripted DIR or set BACKEND_URL (or backend.url in the config file)")
    return RemoteBackend(
        cfg.backend_url, cfg.api_key, cfg.backend_model, timeout=cfg.timeout, max_retries=cfg.max_retries, audit=audit
    )


def _bands(cfg: Config) -> GradeBands:
    return GradeBands(cfg.success_threshold, cfg.failure_threshold, cfg.grade_a, cfg.grade_b)


def _sim_config(cfg: Config) -> SimConfig:
    return SimConfig(max_turns=cfg.max_turns, k=cfg.top_k, bands=_bands(cfg), temperature=cfg.temperature)


def _require(value: str | None, flag: str) -> str:
    if not value:
        raise SupportSkillsError(f"missing required input: {flag}")
    return value


# --- commands --------------------------------------------------------------------------------


def cmd_ingest(cfg: Config) -> int:
    corpus = _require(cfg.corpus, "CORPUS")
    if not Path(corpus).is_file():
        raise FileNotFoundError(f"corpus not found: {corpus}")
    try:
        units, report = ingest_corpus(corpus, strict=cfg.strict)
    except IngestError as exc:
        raise StrictFailure(str(exc)) from None
    run = Run("ingest", cfg, {"corpus": corpus})
    stats = corpus_stats(units)
    dump_corpus(units, run.path("ius.ndjson"))
    run.write_json("stats.json", stats.to_dict())
    run.write_json(
        "ingest_report.json",
        {"lines_read": report.lines_read, "accepted": report.accepted, "issues": [asdict(i) for i in report.issues]},
    )
    run.partial = bool(report.skipped)
    print(f"total IUs: {stats.total}")
    print(f"key IUs: {stats.key_total} (positive {stats.key_positive}, negative {stats.key_negative})")
    print(f"non-key IUs: {stats.non_key}")
    if report.skipped:
        print(f"skipped records: {len(report.skipped)}")
    run.finish()
    return 0


def cmd_induce(cfg: Config, expand: str, clusterer_name: str, snippets: int) -> int:
    corpus = _require(cfg.corpus, "IUS")
    clusterer: Callable | None = None
    if clusterer_name == "semantic":
        if not (cfg.script_dir or cfg.backend_url):
            raise SupportSkillsError("--clusterer semantic needs a backend: pass --scripted DIR or set BACKEND_URL")
    try:
        units, _ = ingest_corpus(corpus, strict=cfg.strict)
    except IngestError as exc:
        raise StrictFailure(str(exc)) from None
    run = Run("induce", cfg, {"ius": corpus})
    if clusterer_name == "semantic":
        clusterer = BackendClusterer(make_backend(cfg, run))
    threshold = Fraction(str(cfg.effectiveness_threshold))
    prototypes = group_prototypes(units, cfg.min_support, threshold, expand=expand)
    recommended, risk = flag_risk(prototypes, threshold)
    kwargs = {"clusterer": clusterer} if clusterer is not None else {}
    clusters = cluster_prototypes(prototypes, ius=units, snippets_per_cluster=snippets, **kwargs)
    write_prototypes(prototypes, run.path("prototypes.ndjson"))
    write_clusters(clusters, run.path("clusters.ndjson"))
    text = "\n\n".join(
        [
            f"min_support={cfg.min_support}  effectiveness_threshold={threshold}  groups={len(prototypes)}  clusters={len(clusters)}",
            "Recommended prototypes\n" + summary_table(recommended),
            "Risk prototypes\n" + summary_table(risk),
        ]
    )
    run.write_text("summary.txt", text + "\n")
    print(text)
    run.finish()
    return 0


def cmd_synthesize(cfg: Config, clusters_path: str) -> int:
    run = Run("synthesize", cfg, {"clusters": clusters_path})
    clusters = read_clusters(clusters_path)
    outcomes = synthesize_skills(clusters, make_backend(cfg, run), cfg.temperature)
    written = write_skills(outcomes, run.path("bank"))
    errors = [{"cluster_id": o.cluster_id, "error": o.error} for o in outcomes if o.error]
    run.write_json("errors.json", errors)
    run.partial = bool(errors)
    print(f"skills written: {len(written)}  failed clusters: {len(errors)}")
    for e in errors:
        print(f"  {e['cluster_id']}: {e['error']}")
    run.finish()
    return 1 if errors else 0


def _load_bank_arg(cfg: Config) -> SkillBank:
    try:
        return load_bank(_require(cfg.bank, "--bank"), lenient=not cfg.strict)
    except SkillFormatError as exc:
        raise StrictFailure(str(exc)) from None


def cmd_simulate(cfg: Config) -> int:
    bank = _load_bank_arg(cfg)
    profiles = load_profiles(_require(cfg.profiles, "--profiles"))
    run = Run("simulate", cfg, {"bank": cfg.bank, "profiles": cfg.profiles})
    backend = make_backend(cfg, run)
    report = batch_simulate(profiles, bank, backend, backend, backend, cfg.parallelism, _sim_config(cfg))
    write_transcripts(report.transcripts, run.path("transcripts"))
    run.write_json("report.json", report.summary())
    table = report.table("no-skill" if len(bank) == 0 else f"bank ({len(bank)} skills)")
    run.write_text("table.txt", table + "\n")
    run.partial = report.aborted_count > 0
    print(table)
    run.finish()
    return 0


def cmd_evolve(cfg: Config) -> int:
    bank = _load_bank_arg(cfg)
    profiles = load_profiles(_require(cfg.profiles, "--profiles"))
    run = Run("evolve", cfg, {"bank": cfg.bank, "profiles": cfg.profiles})
    backend = make_backend(cfg, run)
    econf = EvolveConfig(
        n_verify=cfg.n_verify,
        max_attempts=cfg.max_attempts,
        parallelism=cfg.parallelism,
        consolidator=cfg.consolidator,  # type: ignore[arg-type]
        sim=_sim_config(cfg),
        temperature=cfg.temperature,
    )
    clock = FixedClock() if cfg.scripted else FixedClock(datetime.now(timezone.utc).isoformat(timespec="seconds"))
    result = evolve(bank, profiles, Backends.single(backend), econf, clock=clock)
    save_bank(result.bank, run.path("bank"))
    result.audit.write(run.path("audit.ndjson"))
    run.write_json(
        "plan.json",
        {"updates": [asdict(u) for u in result.plan.updates], "additions": [asdict(a) for a in result.plan.additions]},
    )
    diff = bank_diff(bank, result.bank)
    run.write_json("summary.json", {"before": bank_summary(bank), "after": bank_summary(result.bank), "diff": diff,
                                    "decisions": result.audit.decisions(), "stage1": result.stage1.summary()})
    print(f"plan: {len(result.plan.updates)} updates, {len(result.plan.additions)} additions")
    print(f"bank: {len(bank)} -> {len(result.bank)} skills ({len(diff['changed'])} updated, {len(diff['added'])} added)")
    run.finish()
    return 0


def cmd_eval(cfg: Config, pairs_path: str, label: str) -> int:
    pairs = load_pairs(pairs_path)
    run = Run("eval", cfg, {"pairs": pairs_path})
    report = evaluate_pairs(pairs)
    run.write_json("metrics.json", report.to_dict())
    table = report.table(label)
    run.write_text("table.txt", table + "\n")
    print(table)
    run.finish()
    return 0


def cmd_bank(cfg: Config, action: str, directory: str, name: str | None) -> int:
    # always lenient here: validate reports every bad file, strictness only changes the exit code
    bank = load_bank(directory, lenient=True)
    if action == "list":
        for skill in bank:
            print(f"{skill.name}\t{skill.category}\t{skill.version}")
        return 0
    if action == "show":
        if name is None:
            raise SupportSkillsError("bank show needs a skill name")
        bank.get(name)
        sys.stdout.write(bank.texts[name])
        return 0
    problems = {s.name: validate_skill(s) for s in bank}
    bad = {k: v for k, v in problems.items() if v}
    for issue in bank.load_issues:
        print(f"{issue.path}: {issue.error}")
    for skill_name, found in bad.items():
        for p in found:
            print(f"{skill_name}: {p}")
    print(f"{len(bank)} skills, {len(bad)} with schema problems, {len(bank.load_issues)} load issues")
    if bad or bank.load_issues:
        return 2 if cfg.strict else 1
    return 0


# --- argument parsing ------------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--out", dest="output_dir", help="root directory for run outputs (default: runs)")
    p.add_argument("--scripted", dest="script_dir", help="directory of scripted backend responses")
    p.add_argument("--parallelism", type=int)
    p.add_argument("--strict", action="store_true", default=None, help="fail on the first invalid input")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="supportskills", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate an IU corpus and report statistics")
    p.add_argument("corpus")
    _common(p)

    p = sub.add_parser("induce", help="group key IUs into prototypes and clusters")
    p.add_argument("corpus", metavar="ius")
    p.add_argument("--min-support", type=int)
    p.add_argument("--threshold", dest="effectiveness_threshold", type=float)
    p.add_argument("--expand", choices=("cross", "first"), default="cross")
    p.add_argument("--clusterer", choices=("state", "semantic"), default="state")
    p.add_argument("--snippets", type=int, default=3)
    _common(p)

    p = sub.add_parser("synthesize", help="write one SKILL.md per prototype cluster")
    p.add_argument("clusters")
    _common(p)

    for name, help_text in (("simulate", "run seeker simulations against a bank"), ("evolve", "verification-gated bank evolution")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--bank", required=True)
        p.add_argument("--profiles", required=True)
        p.add_argument("--max-turns", type=int)
        p.add_argument("--top-k", type=int)
        if name == "evolve":
            p.add_argument("--n-verify", type=int)
            p.add_argument("--max-attempts", type=int)
            p.add_argument("--consolidator", choices=("deterministic", "backend"))
        _common(p)

    p = sub.add_parser("eval", help="response metrics over gold/predicted pairs")
    p.add_argument("--pairs", required=True)
    p.add_argument("--label", default="model")
    _common(p)

    p = sub.add_parser("bank", help="inspect a skill bank")
    bank_sub = p.add_subparsers(dest="action", required=True)
    for action in ("list", "show", "validate"):
        q = bank_sub.add_parser(action)
        q.add_argument("directory")
        if action == "show":
            q.add_argument("name")
        _common(q)
    return parser


CONFIG_KEYS = (
    "output_dir", "script_dir", "parallelism", "strict", "min_support", "effectiveness_threshold",
    "max_turns", "top_k", "n_verify", "max_attempts", "consolidator", "corpus", "bank", "profiles",
)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: getattr(args, k, None) for k in CONFIG_KEYS}
    try:
        cfg = load_config(overrides, args.config)
        if args.command == "ingest":
            return cmd_ingest(cfg)
        if args.command == "induce":
            return cmd_induce(cfg, args.expand, args.clusterer, args.snippets)
        if args.command == "synthesize":
            return cmd_synthesize(cfg, args.clusters)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "evolve":
            return cmd_evolve(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, args.pairs, args.label)
        return cmd_bank(cfg, args.action, args.directory, getattr(args, "name", None))
    except StrictFailure as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return 2
    except (OSError, ConfigError, SupportSkillsError, ValueError, KeyError) as exc:
        kind = "io error" if isinstance(exc, OSError) else "error"
        print(f"{kind}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
