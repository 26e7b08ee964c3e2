"""``tcsauto`` command line.

Results go to stdout, diagnostics to stderr. Exit status: 0 on success,
1 for input/corpus/store problems, 2 for provider failures.
"""

from __future__ import annotations

import configparser
import csv
import dataclasses
import functools
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import click

from .corpus import full_thread_text, load_corpus
from .errors import EmptyStore, InvalidParams, ProviderError, TcsError
from .evalharness import (
    DEFAULT_KS,
    DEFAULT_TARGETS,
    eval_correction,
    eval_qa,
    eval_retrieval,
    eval_summarization,
    load_queries,
    qa_summary,
    retrieval_report,
    write_report,
)
from .metrics import TypoKind, TypoSpec, inject_typos
from .pipelines import answer_question, correct_email, summarize
from .provider import HttpProvider, MockMode, MockProvider, ProviderConfig
from .vectorstore import DEFAULT_CHUNK_OVERLAP, DEFAULT_CHUNK_SIZE, VectorStore

log = logging.getLogger("tcsauto")

EXIT_INPUT = 1
EXIT_PROVIDER = 2


@dataclass(frozen=True)
class AppConfig:
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    chunk_size: int = DEFAULT_CHUNK_SIZE
    chunk_overlap: int = DEFAULT_CHUNK_OVERLAP
    store_path: str = "store.tcsvec"
    seed: int = 42
    output_dir: str = "reports"

    def __post_init__(self) -> None:
        if not 0 <= self.chunk_overlap < self.chunk_size:
            raise InvalidParams("chunk_overlap must be smaller than chunk_size")


_APP_KEYS = {f.name: f.type for f in dataclasses.fields(AppConfig) if f.name != "provider"}
_PROVIDER_KEYS = {f.name: f.type for f in dataclasses.fields(ProviderConfig)}


def _coerce(kind: Any, value: str) -> Any:
    kind = str(kind)
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    return value


def build_config(config_path: str | None, overrides: dict[str, str]) -> AppConfig:
    """Defaults, then the INI file, then ``section.key`` overrides."""
    app: dict[str, Any] = {}
    prov: dict[str, Any] = {}
    raw: dict[str, str] = {}
    if config_path:
        parser = configparser.ConfigParser()
        with open(config_path, encoding="utf-8") as fh:
            parser.read_file(fh)
        for section in parser.sections():
            for key, value in parser.items(section):
                raw[f"{section}.{key}"] = value
    raw.update(overrides)
    for dotted, value in raw.items():
        section, _, key = dotted.rpartition(".")
        try:
            if section == "provider" and key in _PROVIDER_KEYS:
                prov[key] = _coerce(_PROVIDER_KEYS[key], value)
            elif section in ("", "general") and key in _APP_KEYS:
                app[key] = _coerce(_APP_KEYS[key], value)
            else:
                raise InvalidParams(f"unknown config key {dotted!r}")
        except ValueError as exc:
            if isinstance(exc, InvalidParams):
                raise
            raise InvalidParams(f"bad value for {dotted!r}: {value!r}") from None
    return AppConfig(provider=ProviderConfig(**prov), **app)


def _read_json_object(path: str) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict) or not all(isinstance(v, str) for v in obj.values()):
        raise InvalidParams(f"{path} must hold a JSON object of strings")
    return obj


def parse_mock(spec: str, *, truncate_n: int | None = None,
               lengths: dict[str, int] | None = None) -> MockMode:
    """Turn a ``--mock`` value into a MockMode.

    ``hash-embed`` only replaces the embedder; chat then echoes.
    """
    kind, _, arg = spec.partition(":")
    if kind in ("echo", "hash-embed"):
        return MockMode("echo")
    if kind == "truncate":
        n = truncate_n
        if arg:
            try:
                n = int(arg)
            except ValueError:
                raise InvalidParams(f"truncate length must be an integer, got {arg!r}") from None
        return MockMode("truncate", n=n, lengths=lengths or {})
    if kind == "canned":
        if not arg:
            raise InvalidParams("canned mode needs a path: canned:<path>")
        return MockMode("canned", responses=_read_json_object(arg))
    if kind == "dictfix":
        if not arg:
            raise InvalidParams("dictfix mode needs a path: dictfix:<path>")
        return MockMode("dictfix", fixes=_read_json_object(arg))
    raise InvalidParams(f"unknown mock mode {spec!r}")


@dataclass
class Ctx:
    config: AppConfig
    mock: str | None
    verbose: bool

    def provider(self, **mock_kw):
        if self.mock:
            return MockProvider(parse_mock(self.mock, **mock_kw), self.config.provider)
        return HttpProvider(self.config.provider)

    def run_metadata(self) -> dict[str, Any]:
        meta: dict[str, Any] = {}
        epoch = os.environ.get("SOURCE_DATE_EPOCH")
        if epoch:
            meta["timestamp"] = datetime.fromtimestamp(int(epoch), timezone.utc).isoformat()
        elif not self.mock:
            meta["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
        return meta

    def store_metadata(self) -> dict[str, Any]:
        return {"chunk_size": self.config.chunk_size, "chunk_overlap": self.config.chunk_overlap,
                "store": self.config.store_path}

    def load_store(self) -> VectorStore:
        path = Path(self.config.store_path)
        if not path.exists():
            raise InvalidParams(f"store {path} not found (run ingest first)")
        store = VectorStore.load(path, self.config.chunk_size, self.config.chunk_overlap)
        if len(store) == 0:
            raise EmptyStore()
        return store


def _fail(code: int, msg: str) -> None:
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def guarded(fn):
    """Map toolkit and I/O errors onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ProviderError as exc:
            _fail(EXIT_PROVIDER, str(exc))
        except (TcsError, OSError, ValueError) as exc:
            _fail(EXIT_INPUT, str(exc))

    return wrapper


def _read_input(text: str | None, file: str | None) -> str:
    if file:
        if file == "-":
            return sys.stdin.read()
        return Path(file).read_text(encoding="utf-8")
    if text is None:
        raise InvalidParams("provide input text or --file")
    return text


def _int_list(value: str) -> list[int]:
    try:
        return [int(x) for x in value.split(",") if x.strip()]
    except ValueError:
        raise InvalidParams(f"expected comma-separated integers, got {value!r}") from None


def _typo_spec(rate: float, kinds: str, seed: int) -> TypoSpec:
    try:
        parsed = tuple(TypoKind(k.strip()) for k in kinds.split(",") if k.strip())
    except ValueError:
        raise InvalidParams(f"unknown typo kind in {kinds!r}") from None
    return TypoSpec(rate=rate, seed=seed, kinds=parsed)


@click.group()
@click.option("--config", "config_path", default=None, help="INI config file.")
@click.option("--mock", default=None,
              help="Offline mode: echo | truncate[:N] | canned:<path> | dictfix:<path> | hash-embed.")
@click.option("--seed", type=int, default=None, help="Seed for typo injection (default 42).")
@click.option("--out", "out_dir", default=None, help="Report output directory.")
@click.option("--store", "store_path", default=None, help="Vector store file.")
@click.option("--chunk-size", type=int, default=None)
@click.option("--chunk-overlap", type=int, default=None)
@click.option("--set", "sets", multiple=True, metavar="SECTION.KEY=VALUE",
              help="Override any config key, e.g. provider.chat_model=gpt-4o.")
@click.option("--verbose", "-v", is_flag=True)
@click.pass_context
def main(ctx, config_path, mock, seed, out_dir, store_path, chunk_size, chunk_overlap, sets, verbose):
    """Technical-customer-support automation: correction, summaries, RAG Q&A."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    overrides: dict[str, str] = {}
    for item in sets:
        key, eq, value = item.partition("=")
        if not eq:
            _fail(EXIT_INPUT, f"--set expects SECTION.KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value
    for key, value in (("seed", seed), ("output_dir", out_dir), ("store_path", store_path),
                       ("chunk_size", chunk_size), ("chunk_overlap", chunk_overlap)):
        if value is not None:
            overrides[key] = str(value)
    try:
        config = build_config(config_path, overrides)
    except (TcsError, OSError, configparser.Error) as exc:
        _fail(EXIT_INPUT, f"config: {exc}")
    ctx.obj = Ctx(config, mock, verbose)


@main.command()
@click.argument("corpus_path")
@click.option("--force", is_flag=True, help="Overwrite an existing store.")
@click.pass_obj
@guarded
def ingest(app: Ctx, corpus_path, force):
    """Chunk, embed and store every inquiry thread of a corpus."""
    store_path = Path(app.config.store_path)
    if store_path.exists() and not force:
        _fail(EXIT_INPUT, f"store exists: {store_path} (use --force to overwrite)")
    corpus = load_corpus(corpus_path)
    provider = app.provider()
    store = VectorStore(app.config.provider.embed_dim, app.config.chunk_size, app.config.chunk_overlap)
    for inq in corpus:
        n = store.ingest(inq.id, full_thread_text(inq), provider)
        click.echo(f"{inq.id}\t{n}")
    store.save(store_path)
    click.echo(f"stored {len(store)} chunks in {store_path}", err=True)


@main.command()
@click.argument("text", required=False)
@click.option("--file", "file", default=None, help="Read the email from a file ('-' for stdin).")
@click.pass_obj
@guarded
def correct(app: Ctx, text, file):
    """Correct spelling errors in an email."""
    email = _read_input(text, file)
    click.echo(correct_email(app.provider(), email))


@main.command(name="summarize")
@click.argument("text", required=False)
@click.option("--file", "file", default=None)
@click.option("--words", "target", type=int, required=True, help="Target summary length.")
@click.pass_obj
@guarded
def summarize_cmd(app: Ctx, text, file, target):
    """Summarize a text to a target number of words."""
    source = _read_input(text, file)
    res = summarize(app.provider(truncate_n=target), source, target)
    click.echo(res.summary)
    if app.verbose:
        click.echo(f"words={res.actual_words} similarity={res.similarity:.4f}", err=True)


@main.command()
@click.argument("question")
@click.option("--k", type=int, default=3, show_default=True)
@click.pass_obj
@guarded
def ask(app: Ctx, question, k):
    """Answer a question from the stored inquiry history."""
    store = app.load_store()
    ans = answer_question(app.provider(), store, question, k)
    click.echo(ans.text)
    if app.verbose:
        for hit in ans.retrieved:
            click.echo(f"chunk {hit.chunk.chunk_id} {hit.chunk.inquiry_id} {hit.distance:.6f}", err=True)


@main.command(name="inject-typos")
@click.argument("text", required=False)
@click.option("--file", "file", default=None)
@click.option("--rate", type=float, default=0.15, show_default=True)
@click.option("--kinds", default="transposition,deletion", show_default=True)
@click.pass_obj
@guarded
def inject_typos_cmd(app: Ctx, text, file, rate, kinds):
    """Add letter twisters and missing letters to a text."""
    source = _read_input(text, file)
    click.echo(inject_typos(source, _typo_spec(rate, kinds, app.config.seed)))


@main.group(name="eval")
def eval_group():
    """Run an evaluation job and write <name>.csv / <name>.md."""


def _emit(app: Ctx, report) -> None:
    csv_path, md_path = write_report(report, app.config.output_dir)
    click.echo(f"wrote {csv_path} and {md_path}", err=True)


@eval_group.command(name="correction")
@click.argument("corpus_path")
@click.option("--rate", type=float, default=0.15, show_default=True)
@click.option("--kinds", default="transposition,deletion", show_default=True)
@click.pass_obj
@guarded
def eval_correction_cmd(app: Ctx, corpus_path, rate, kinds):
    corpus = load_corpus(corpus_path)
    spec = _typo_spec(rate, kinds, app.config.seed)
    report = eval_correction(corpus, spec, app.provider(), app.run_metadata())
    _emit(app, report)
    before = [c for c in report.column("uncorrected_errors") if isinstance(c, int)]
    after = [c for c in report.column("corrected_errors") if isinstance(c, int)]
    click.echo(
        f"mean residual errors: uncorrected {sum(before) / max(len(before), 1):.2f}, "
        f"corrected {sum(after) / max(len(after), 1):.2f} over {len(after)} emails"
    )


def _load_word_counts(path: str) -> dict[str, int]:
    """``inquiry,target,words`` CSV -> {"<inquiry>/<target>": words}."""
    out = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                out[f"{row['inquiry'].strip()}/{int(row['target'])}"] = int(row["words"])
            except (KeyError, ValueError, AttributeError):
                raise InvalidParams(f"{path}: rows need inquiry,target,words columns") from None
    return out


@eval_group.command(name="summarization")
@click.argument("corpus_path")
@click.option("--targets", default=",".join(map(str, DEFAULT_TARGETS)), show_default=True)
@click.option("--word-counts", default=None,
              help="inquiry,target,words CSV giving mock truncate lengths per cell.")
@click.pass_obj
@guarded
def eval_summarization_cmd(app: Ctx, corpus_path, targets, word_counts):
    corpus = load_corpus(corpus_path)
    lengths = _load_word_counts(word_counts) if word_counts else None
    target_list = _int_list(targets)
    truncate_n = target_list[0] if len(target_list) == 1 else None
    provider = app.provider(lengths=lengths, truncate_n=truncate_n)
    report = eval_summarization(corpus, target_list, provider, app.run_metadata())
    _emit(app, report)
    for t in target_list:
        saved = [c for c in report.column(f"time_saved_{t}") if isinstance(c, float)]
        mean = sum(saved) / len(saved) if saved else float("nan")
        click.echo(f"target={t} mean time saved {mean:.2f} min")


@eval_group.command(name="retrieval")
@click.argument("queries_path")
@click.option("--ks", default=",".join(map(str, DEFAULT_KS)), show_default=True)
@click.pass_obj
@guarded
def eval_retrieval_cmd(app: Ctx, queries_path, ks):
    store = app.load_store()
    queries = load_queries(queries_path)
    results = eval_retrieval(store, queries, _int_list(ks), app.provider())
    meta = {**app.run_metadata(), **app.store_metadata(), "queries": len(queries)}
    _emit(app, retrieval_report(results, meta))
    for r in results:
        click.echo(f"k={r.k} proportion {r.proportion:.2f}")


@eval_group.command(name="qa")
@click.argument("queries_path")
@click.option("--k", type=int, default=3, show_default=True)
@click.pass_obj
@guarded
def eval_qa_cmd(app: Ctx, queries_path, k):
    store = app.load_store()
    queries = load_queries(queries_path)
    meta = {**app.run_metadata(), **app.store_metadata()}
    matrix, report = eval_qa(store, queries, app.provider(), k, meta)
    dist_report = matrix.to_report()
    dist_report.metadata = dict(report.metadata)
    _emit(app, report)
    _emit(app, dist_report)
    s = qa_summary(report)
    line = f"relevant=min {s['relevant_is_min']}/{s['queries']}"
    if s["mean_relevant"] is not None:
        line += f"; mean relevant distance {s['mean_relevant']:.2f}"
    if s["mean_nearest_irrelevant"] is not None:
        line += f"; mean nearest irrelevant {s['mean_nearest_irrelevant']:.2f}"
    click.echo(line)


if __name__ == "__main__":
    main()
