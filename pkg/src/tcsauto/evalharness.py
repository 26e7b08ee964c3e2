"""Evaluation jobs producing the correction, summarization, retrieval and
question-answering report tables."""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence, TypeVar

from . import _backend
from .corpus import Corpus, full_thread_text, text_stats
from .errors import EmptyStore, InvalidParams, MalformedRecord, MissingGold, TcsError
from .metrics import PRNG_NAME, TypoSpec, inject_typos, residual_errors, time_saved_minutes
from .pipelines import answer_question, correct_email, summarize
from .provider import MockProvider, Provider
from .vectorstore import VectorStore

log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

DEFAULT_TARGETS = (100, 200, 500)
DEFAULT_KS = (1, 2, 3)


@dataclass(frozen=True)
class CellError:
    """A cell whose computation failed; rendered as ``ERR``."""

    message: str

    def __str__(self) -> str:
        return "ERR"


Cell = Any


@dataclass
class EvalReport:
    name: str
    columns: list[str]
    rows: list[tuple[str, list[Cell]]] = field(default_factory=list)
    metadata: dict[str, Any] = field(default_factory=dict)
    key_column: str = "inquiry"

    def __post_init__(self) -> None:
        seen = set()
        for key, cells in self.rows:
            if len(cells) != len(self.columns):
                raise InvalidParams(f"row {key!r} has {len(cells)} cells, expected {len(self.columns)}")
            if key in seen:
                raise InvalidParams(f"duplicate row key {key!r}")
            seen.add(key)

    def add_row(self, key: str, cells: list[Cell]) -> None:
        if len(cells) != len(self.columns):
            raise InvalidParams(f"row {key!r} has {len(cells)} cells, expected {len(self.columns)}")
        if any(k == key for k, _ in self.rows):
            raise InvalidParams(f"duplicate row key {key!r}")
        self.rows.append((key, cells))

    def column(self, name: str) -> list[Cell]:
        idx = self.columns.index(name)
        return [cells[idx] for _, cells in self.rows]

    def cell(self, key: str, column: str) -> Cell:
        idx = self.columns.index(column)
        for k, cells in self.rows:
            if k == key:
                return cells[idx]
        raise KeyError(key)


def format_cell(value: Cell) -> str:
    if value is None:
        return ""
    if isinstance(value, CellError):
        return "ERR"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        text = f"{value:.2f}"
        return "0.00" if text == "-0.00" else text
    return str(value)


def render_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow([report.key_column, *report.columns])
    for key, cells in report.rows:
        writer.writerow([key, *(format_cell(c) for c in cells)])
    return buf.getvalue()


def _md_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("|", "\\|").replace("\r\n", " ").replace("\n", " ")


def render_markdown(report: EvalReport, include_metadata: bool = True) -> str:
    header = [report.key_column, *report.columns]
    lines = [
        "| " + " | ".join(_md_escape(h) for h in header) + " |",
        "| " + " | ".join("---" for _ in header) + " |",
    ]
    for key, cells in report.rows:
        row = [key, *(format_cell(c) for c in cells)]
        lines.append("| " + " | ".join(_md_escape(c) for c in row) + " |")
    if include_metadata and report.metadata:
        lines.append("")
        for k in sorted(report.metadata):
            lines.append(f"- {k}: {json.dumps(report.metadata[k], sort_keys=True, ensure_ascii=False)}")
    return "\n".join(lines) + "\n"


def render_report(report: EvalReport, fmt: str) -> str:
    if fmt == "csv":
        return render_csv(report)
    if fmt in ("markdown", "md"):
        return render_markdown(report)
    raise InvalidParams(f"unknown report format {fmt!r}")


def write_report(report: EvalReport, out_dir: str | Path) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{report.name}.csv"
    md_path = out / f"{report.name}.md"
    csv_path.write_bytes(render_csv(report).encode("utf-8"))
    md_path.write_bytes(render_markdown(report).encode("utf-8"))
    return csv_path, md_path


# -- shared plumbing ---------------------------------------------------------

def provider_metadata(provider: Provider) -> dict[str, Any]:
    cfg = provider.config
    meta: dict[str, Any] = {
        "chat_model": cfg.chat_model,
        "summary_model": cfg.summary_model,
        "embed_model": cfg.embed_model,
        "embed_dim": cfg.embed_dim,
        "temperature": 0.0,
        "kernel_backend": _backend.BACKEND,
    }
    if isinstance(provider, MockProvider):
        meta["provider"] = f"mock:{provider.mode.kind}"
        meta["embed_model"] = "hash-mock/blake2b64"
    else:
        meta["provider"] = cfg.base_url
    return meta


def _run_cells(fn: Callable[[T], R], items: Sequence[T], workers: int) -> list[R | CellError]:
    """Apply ``fn`` to every item, turning toolkit errors into CellError.

    Results come back in input order whatever the completion order.
    """

    def guarded(item: T) -> R | CellError:
        try:
            return fn(item)
        except TcsError as exc:
            log.warning("cell failed: %s", exc)
            return CellError(str(exc))

    if workers <= 1 or len(items) <= 1:
        return [guarded(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(guarded, items))


# -- correction --------------------------------------------------------------

CORRECTION_COLUMNS = [
    "uncorrected_words", "uncorrected_chars", "uncorrected_errors",
    "corrected_words", "corrected_chars", "corrected_errors",
]


def eval_correction(corpus: Corpus, typo_spec: TypoSpec, provider: Provider,
                    metadata: dict[str, Any] | None = None) -> EvalReport:
    """Inject typos into every gold reply, correct it, count residual errors.

    The mock request key for each email is the inquiry id.
    """
    for inq in corpus:
        if inq.reply_gold is None:
            raise MissingGold(inq.id)

    typo_texts = [inject_typos(inq.reply_gold, typo_spec) for inq in corpus]

    def correct(i: int) -> str:
        return correct_email(provider, typo_texts[i], key=corpus.inquiries[i].id)

    corrected = _run_cells(correct, list(range(len(corpus))), provider.config.max_in_flight)

    report = EvalReport("correction", list(CORRECTION_COLUMNS))
    for inq, typo, fixed in zip(corpus, typo_texts, corrected):
        before = text_stats(typo)
        cells: list[Cell] = [before.words, before.chars, residual_errors(typo, inq.reply_gold).errors]
        if isinstance(fixed, CellError):
            cells += [fixed, fixed, fixed]
        else:
            after = text_stats(fixed)
            cells += [after.words, after.chars, residual_errors(fixed, inq.reply_gold).errors]
        report.add_row(inq.id, cells)
    report.metadata = {
        **provider_metadata(provider),
        "seed": typo_spec.seed,
        "prng": PRNG_NAME,
        "typo_rate": typo_spec.rate,
        "typo_kinds": [k.value for k in typo_spec.kinds],
        **(metadata or {}),
    }
    return report


# -- summarization -----------------------------------------------------------

def summarization_columns(targets: Sequence[int]) -> list[str]:
    return (["words"] + [f"words_{t}" for t in targets]
            + [f"similarity_{t}" for t in targets] + [f"time_saved_{t}" for t in targets])


def eval_summarization(corpus: Corpus, targets: Sequence[int], provider: Provider,
                       metadata: dict[str, Any] | None = None) -> EvalReport:
    """Summarize every thread at every target length.

    The mock request key for a cell is ``"<inquiry id>/<target>"``. A failed
    cell renders as ERR and the job carries on.
    """
    targets = list(targets)
    if not targets:
        raise InvalidParams("at least one summary target is required")
    if any(t < 1 for t in targets):
        raise InvalidParams("summary targets must be >= 1")

    sources = {inq.id: full_thread_text(inq) for inq in corpus}
    jobs = [(inq.id, t) for inq in corpus for t in targets]

    def run(job: tuple[str, int]):
        inq_id, t = job
        return summarize(provider, sources[inq_id], t, key=f"{inq_id}/{t}")

    results = dict(zip(jobs, _run_cells(run, jobs, provider.config.max_in_flight)))

    report = EvalReport("summarization", summarization_columns(targets))
    for inq in corpus:
        src_words = text_stats(sources[inq.id]).words
        words_cells: list[Cell] = []
        sim_cells: list[Cell] = []
        saved_cells: list[Cell] = []
        for t in targets:
            res = results[(inq.id, t)]
            if isinstance(res, CellError):
                words_cells.append(res)
                sim_cells.append(res)
                saved_cells.append(res)
                continue
            words_cells.append(res.actual_words)
            sim_cells.append(res.similarity)
            try:
                saved_cells.append(time_saved_minutes(src_words, res.actual_words))
            except TcsError as exc:
                saved_cells.append(CellError(str(exc)))
        report.add_row(inq.id, [src_words, *words_cells, *sim_cells, *saved_cells])
    report.metadata = {**provider_metadata(provider), "targets": targets,
                       "reading_wpm": 238, **(metadata or {})}
    return report


# -- retrieval ---------------------------------------------------------------

@dataclass(frozen=True)
class Query:
    question: str
    relevant: str
    id: str = ""


def load_queries(path: str | Path) -> list[Query]:
    """Read ``{question, relevant[, id]}`` records, one JSON object per line.

    Queries without an id are labelled by their relevant inquiry, with a
    ``#n`` suffix when that label repeats.
    """
    out: list[Query] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(lineno, f"invalid JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise MalformedRecord(lineno, "record is not an object")
            q, rel, qid = obj.get("question"), obj.get("relevant"), obj.get("id", "")
            if not isinstance(q, str) or not q.strip():
                raise MalformedRecord(lineno, "missing question")
            if not isinstance(rel, str) or not rel.strip():
                raise MalformedRecord(lineno, "missing relevant inquiry id")
            if not isinstance(qid, str):
                raise MalformedRecord(lineno, "id must be a string")
            out.append(Query(q.strip(), rel.strip(), qid.strip()))
    return label_queries(out)


def label_queries(queries: Iterable[Query]) -> list[Query]:
    out: list[Query] = []
    used: set[str] = set()
    for q in queries:
        qid = q.id or q.relevant
        if qid in used:
            n = 2
            while f"{qid}#{n}" in used:
                n += 1
            qid = f"{qid}#{n}"
        used.add(qid)
        out.append(Query(q.question, q.relevant, qid))
    return out


def _as_queries(queries: Iterable[Query | tuple[str, str]]) -> list[Query]:
    return label_queries(q if isinstance(q, Query) else Query(q[0], q[1]) for q in queries)


@dataclass(frozen=True)
class RelevanceResult:
    k: int
    proportion: float


def eval_retrieval(store: VectorStore, queries: Iterable[Query | tuple[str, str]],
                   ks: Sequence[int], embedder) -> list[RelevanceResult]:
    """Mean fraction of the top-k hits that belong to each query's relevant inquiry."""
    ks = list(ks)
    if not ks or any(k < 1 for k in ks):
        raise InvalidParams("ks must be a non-empty list of positive integers")
    if len(store) == 0:
        raise EmptyStore()
    qs = _as_queries(queries)
    if not qs:
        raise InvalidParams("at least one query is required")
    vectors = embedder.embed([q.question for q in qs])
    kmax = max(ks)
    ranked = [[h.chunk.inquiry_id for h in store.search(v, kmax)] for v in vectors]
    results = []
    for k in ks:
        fractions = []
        for q, ids in zip(qs, ranked):
            top = ids[:k]
            fractions.append(sum(1 for i in top if i == q.relevant) / len(top))
        results.append(RelevanceResult(k, sum(fractions) / len(fractions)))
    return results


def retrieval_report(results: Sequence[RelevanceResult],
                     metadata: dict[str, Any] | None = None) -> EvalReport:
    report = EvalReport("retrieval", ["proportion_relevant"], key_column="k",
                        metadata=dict(metadata or {}))
    for r in results:
        report.add_row(str(r.k), [r.proportion])
    return report


# -- question answering ------------------------------------------------------

@dataclass
class DistanceMatrix:
    query_ids: list[str]
    inquiry_ids: list[str]
    cells: list[list[float | None]]          # [inquiry][query]
    relevant: dict[str, str]

    def __post_init__(self) -> None:
        if len(self.cells) != len(self.inquiry_ids):
            raise InvalidParams("matrix row count does not match inquiry ids")
        for row in self.cells:
            if len(row) != len(self.query_ids):
                raise InvalidParams("matrix column count does not match query ids")
        for qid, rel in self.relevant.items():
            if rel not in self.inquiry_ids:
                raise InvalidParams(f"relevant inquiry {rel!r} of {qid!r} is not in the store")

    def column(self, query_id: str) -> dict[str, float | None]:
        j = self.query_ids.index(query_id)
        return {inq: row[j] for inq, row in zip(self.inquiry_ids, self.cells)}

    def to_report(self, name: str = "qa_distances") -> EvalReport:
        report = EvalReport(name, list(self.query_ids), key_column="historic_inquiry")
        for inq, row in zip(self.inquiry_ids, self.cells):
            report.add_row(inq, [CellError("column failed") if c is None else c for c in row])
        return report


QA_COLUMNS = [
    "relevant", "relevant_distance", "nearest_irrelevant", "nearest_irrelevant_distance",
    "margin", "relevant_is_min", "refusal",
]


def eval_qa(store: VectorStore, queries: Iterable[Query | tuple[str, str]], provider: Provider,
            k: int, metadata: dict[str, Any] | None = None) -> tuple[DistanceMatrix, EvalReport]:
    """Answer every query with RAG, embed the answer and measure its nearest
    chunk distance to every historic inquiry.

    The mock request key for a query is its id.
    """
    if len(store) == 0:
        raise EmptyStore()
    qs = _as_queries(queries)
    inquiry_ids = store.inquiry_ids
    for q in qs:
        if q.relevant not in inquiry_ids:
            raise InvalidParams(f"query {q.id!r} names unknown inquiry {q.relevant!r}")

    def run(q: Query):
        ans = answer_question(provider, store, q.question, k, key=q.id)
        (vec,) = provider.embed([ans.text])
        return ans, store.nearest_per_inquiry(vec)

    outcomes = _run_cells(run, qs, provider.config.max_in_flight)

    cells: list[list[float | None]] = [[None] * len(qs) for _ in inquiry_ids]
    report = EvalReport("qa", list(QA_COLUMNS), key_column="query")
    for j, (q, out) in enumerate(zip(qs, outcomes)):
        if isinstance(out, CellError):
            report.add_row(q.id, [q.relevant] + [out] * 6)
            continue
        ans, nearest = out
        for i, inq in enumerate(inquiry_ids):
            cells[i][j] = nearest[inq]
        rel_d = nearest[q.relevant]
        others = [(d, inq) for inq, d in nearest.items() if inq != q.relevant]
        if others:
            irr_d, irr_id = min(others)
            margin: float | None = irr_d - rel_d
        else:
            irr_d, irr_id, margin = None, None, None
        report.add_row(q.id, [q.relevant, rel_d, irr_id, irr_d, margin,
                              rel_d <= min(nearest.values()), ans.is_refusal])

    matrix = DistanceMatrix([q.id for q in qs], inquiry_ids, cells,
                            {q.id: q.relevant for q in qs})
    report.metadata = {**provider_metadata(provider), "k": k, **(metadata or {})}
    return matrix, report


def qa_summary(report: EvalReport) -> dict[str, Any]:
    """Count of queries whose relevant inquiry is the column minimum, and the
    mean relevant / nearest-irrelevant distances over successful queries."""
    flags = [c for c in report.column("relevant_is_min") if isinstance(c, bool)]
    rel = [c for c in report.column("relevant_distance") if isinstance(c, float)]
    irr = [c for c in report.column("nearest_irrelevant_distance") if isinstance(c, float)]
    return {
        "queries": len(report.rows),
        "relevant_is_min": sum(flags),
        "mean_relevant": sum(rel) / len(rel) if rel else None,
        "mean_nearest_irrelevant": sum(irr) / len(irr) if irr else None,
    }
