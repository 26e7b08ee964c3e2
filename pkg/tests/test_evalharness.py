import csv
import io

import numpy as np
import pytest

from oracles import group_min
from tcsauto.corpus import Corpus, Inquiry, Message, Role, full_thread_text, load_corpus
from tcsauto.errors import EmptyStore, InvalidParams, MalformedRecord, MissingGold
from tcsauto.evalharness import (
    CellError,
    EvalReport,
    Query,
    eval_correction,
    eval_qa,
    eval_retrieval,
    eval_summarization,
    format_cell,
    label_queries,
    load_queries,
    qa_summary,
    render_csv,
    render_markdown,
    render_report,
    retrieval_report,
    summarization_columns,
    write_report,
)
from tcsauto.metrics import TypoSpec, time_saved_minutes
from tcsauto.provider import MockMode, MockProvider, ProviderConfig, mock_embed
from tcsauto.vectorstore import VectorStore

TARGETS = [100, 200, 500]


def published_counts(fixtures_dir):
    with open(fixtures_dir / "summary_counts.csv", newline="") as fh:
        return list(csv.DictReader(fh))


def counts_corpus(rows):
    """One inquiry per row whose thread has exactly the published word count."""
    inquiries = []
    for r in rows:
        n = int(r["words"])
        inquiries.append(Inquiry(r["inquiry"], "synthetic", " ".join(f"w{i}" for i in range(n))))
    return Corpus(tuple(inquiries))


def counts_lengths(rows):
    return {f"{r['inquiry']}/{t}": int(r[f"words_{t}"]) for r in rows for t in TARGETS}


# -- rendering ---------------------------------------------------------------

def test_empty_report_header_only():
    rep = EvalReport("x", ["a", "b"])
    assert render_csv(rep) == "inquiry,a,b\r\n"
    assert render_markdown(rep) == "| inquiry | a | b |\n| --- | --- | --- |\n"


def test_csv_quoting():
    rep = EvalReport("x", ["note"], [("Inc1", ['says "hi", twice']), ("Inc2", ["two\nlines"])])
    rows = list(csv.reader(io.StringIO(render_csv(rep), newline="")))
    assert rows == [["inquiry", "note"], ["Inc1", 'says "hi", twice'], ["Inc2", "two\nlines"]]
    assert '"says ""hi"", twice"' in render_csv(rep)


def test_markdown_escapes_pipes():
    rep = EvalReport("x", ["note"], [("Inc1", ["a|b"])])
    assert "a\\|b" in render_markdown(rep)


@pytest.mark.parametrize("value, text", [
    (0.125, "0.12"), (-0.001, "0.00"), (3, "3"), (True, "yes"), (None, ""),
    (CellError("boom"), "ERR"), ("Inc4", "Inc4"),
])
def test_format_cell(value, text):
    assert format_cell(value) == text


def test_report_invariants():
    with pytest.raises(InvalidParams):
        EvalReport("x", ["a"], [("k", [1, 2])])
    rep = EvalReport("x", ["a"])
    rep.add_row("k", [1])
    with pytest.raises(InvalidParams):
        rep.add_row("k", [2])
    with pytest.raises(InvalidParams):
        render_report(rep, "xlsx")


def _summary_report(rows):
    rep = EvalReport("summarization", summarization_columns(TARGETS))
    for r in rows:
        cells = [int(r["words"])] + [int(r[f"words_{t}"]) for t in TARGETS]
        cells += [float(r[f"similarity_{t}"]) for t in TARGETS]
        cells += [float(r[f"time_saved_{t}"]) for t in TARGETS]
        rep.add_row(r["inquiry"], cells)
    return rep


def test_published_counts_golden_markdown(fixtures_dir):
    rep = _summary_report(published_counts(fixtures_dir))
    text = render_markdown(rep)
    assert text == (fixtures_dir / "summary_report.md").read_text(encoding="utf-8")
    lines = text.splitlines()
    assert len(lines) == 2 + 15
    assert all(line.count(" | ") == 10 for line in lines)


def test_published_counts_golden_csv(fixtures_dir):
    rep = _summary_report(published_counts(fixtures_dir))
    assert render_csv(rep).encode() == (fixtures_dir / "summary_report.csv").read_bytes()


def test_write_report(tmp_path):
    rep = EvalReport("demo", ["v"], [("a", [1.0])], metadata={"seed": 42})
    csv_path, md_path = write_report(rep, tmp_path / "out")
    assert csv_path.read_bytes() == b"inquiry,v\r\na,1.00\r\n"
    assert md_path.read_text().endswith("- seed: 42\n")


# -- summarization -----------------------------------------------------------

def test_time_saved_reproduces_published_counts(fixtures_dir):
    rows = published_counts(fixtures_dir)
    provider = MockProvider(MockMode("truncate", lengths=counts_lengths(rows)),
                            ProviderConfig(embed_dim=64))
    rep = eval_summarization(counts_corpus(rows), TARGETS, provider)
    assert len(rep.rows) == 15 and len(rep.columns) == 10
    for r in rows:
        assert rep.cell(r["inquiry"], "words") == int(r["words"])
        for t in TARGETS:
            assert rep.cell(r["inquiry"], f"words_{t}") == int(r[f"words_{t}"])
            got = rep.cell(r["inquiry"], f"time_saved_{t}")
            assert abs(got - float(r[f"time_saved_{t}"])) <= 0.01
    assert round(rep.cell("Inc12", "time_saved_100"), 2) == 11.68


def test_time_saved_consistent_with_word_cells(data_dir):
    corpus = load_corpus(data_dir / "sample_corpus.jsonl")
    provider = MockProvider(MockMode("truncate", n=20), ProviderConfig(embed_dim=64))
    rep = eval_summarization(corpus, [20, 40], provider)
    for key, _ in rep.rows:
        for t in (20, 40):
            assert rep.cell(key, f"time_saved_{t}") == time_saved_minutes(
                rep.cell(key, "words"), rep.cell(key, f"words_{t}"))


def test_echo_summary_similarity_one_time_zero():
    corpus = Corpus((Inquiry("A", "t", "the modem restarts", (Message(Role.AGENT, "swap it"),)),))
    rep = eval_summarization(corpus, [5], MockProvider(config=ProviderConfig(embed_dim=32)))
    assert rep.cell("A", "similarity_5") == pytest.approx(1.0, abs=1e-9)
    assert rep.cell("A", "time_saved_5") == 0.0


def test_empty_targets():
    with pytest.raises(InvalidParams):
        eval_summarization(Corpus(()), [], MockProvider())


def test_provider_failure_is_per_cell():
    corpus = Corpus((Inquiry("A", "t", "one two three four"), Inquiry("B", "t", "five six seven")))
    provider = MockProvider(MockMode("truncate", lengths={"A/2": 2, "B/2": 1}), ProviderConfig(embed_dim=16))
    rep = eval_summarization(corpus, [2, 3], provider)
    assert rep.cell("A", "words_2") == 2
    assert isinstance(rep.cell("A", "words_3"), CellError)
    assert "ERR" in render_csv(rep)


def test_negative_saving_is_err_cell():
    corpus = Corpus((Inquiry("A", "t", "short"),))
    provider = MockProvider(MockMode("canned", responses={"A/1": "much longer than the source"}),
                            ProviderConfig(embed_dim=16))
    rep = eval_summarization(corpus, [1], provider)
    assert rep.cell("A", "words_1") == 5
    assert isinstance(rep.cell("A", "time_saved_1"), CellError)


def test_order_independent_of_concurrency(data_dir):
    corpus = load_corpus(data_dir / "sample_corpus.jsonl")

    def run(workers):
        cfg = ProviderConfig(embed_dim=64, max_in_flight=workers)
        return render_csv(eval_summarization(corpus, [30, 60], MockProvider(MockMode("truncate", n=30), cfg)))

    assert run(1) == run(8)


# -- correction --------------------------------------------------------------

def _gold_corpus(fixtures_dir):
    import json
    recs = [json.loads(x) for x in (fixtures_dir / "emails.jsonl").read_text().splitlines() if x.strip()]
    return Corpus(tuple(Inquiry(r["id"], "mail", "request", reply_gold=r["text"]) for r in recs))


def test_canned_corrector_zero_errors(fixtures_dir):
    corpus = _gold_corpus(fixtures_dir)
    provider = MockProvider(MockMode("canned", responses={i.id: i.reply_gold for i in corpus}))
    rep = eval_correction(corpus, TypoSpec(rate=0.15, seed=42), provider)
    assert rep.column("corrected_errors") == [0] * 20
    assert all(e > 0 for e in rep.column("uncorrected_errors"))
    assert rep.metadata["seed"] == 42 and rep.metadata["prng"] == "splitmix64"


def test_rate_zero_no_uncorrected_errors(fixtures_dir):
    corpus = _gold_corpus(fixtures_dir)
    rep = eval_correction(corpus, TypoSpec(rate=0.0), MockProvider())
    assert rep.column("uncorrected_errors") == [0] * 20
    assert rep.column("corrected_errors") == [0] * 20


def test_missing_gold():
    corpus = Corpus((Inquiry("A", "t", "r"),))
    with pytest.raises(MissingGold):
        eval_correction(corpus, TypoSpec(rate=0.1), MockProvider())


def test_correction_rerun_identical(fixtures_dir):
    corpus = _gold_corpus(fixtures_dir)
    runs = [render_markdown(eval_correction(corpus, TypoSpec(rate=0.15), MockProvider())) for _ in range(2)]
    assert runs[0] == runs[1]


# -- retrieval ---------------------------------------------------------------

def _one_chunk_store(corpus, dim=256):
    provider = MockProvider(config=ProviderConfig(embed_dim=dim))
    store = VectorStore(dim, 100_000, 0)
    for inq in corpus:
        store.ingest(inq.id, full_thread_text(inq), provider)
    return store, provider


def test_verbatim_queries_self_match(data_dir):
    corpus = load_corpus(data_dir / "sample_corpus.jsonl")
    store, provider = _one_chunk_store(corpus)
    queries = [(c.text, c.inquiry_id) for c in store.chunks]
    results = eval_retrieval(store, queries, [1, 2, 3], provider)
    assert results[0].proportion == 1.0
    props = [r.proportion for r in results]
    assert props == sorted(props, reverse=True)
    assert retrieval_report(results).cell("1", "proportion_relevant") == 1.0


def test_single_inquiry_store():
    corpus = Corpus((Inquiry("Only", "t", "alpha beta gamma " * 50),))
    provider = MockProvider(config=ProviderConfig(embed_dim=32))
    store = VectorStore(32, 60, 10)
    store.ingest("Only", full_thread_text(corpus.inquiries[0]), provider)
    results = eval_retrieval(store, [("anything at all", "Only")], [1, 2, 3, 10], provider)
    assert [r.proportion for r in results] == [1.0] * 4


def test_retrieval_errors():
    provider = MockProvider(config=ProviderConfig(embed_dim=8))
    with pytest.raises(EmptyStore):
        eval_retrieval(VectorStore(8), [("q", "A")], [1], provider)
    with pytest.raises(InvalidParams):
        eval_retrieval(VectorStore(8), [("q", "A")], [], provider)


def test_load_queries(tmp_path, data_dir):
    qs = load_queries(data_dir / "sample_queries.jsonl")
    assert len(qs) == 10
    assert [q.id for q in qs] == [f"Inc{i}" for i in range(1, 11)]
    bad = tmp_path / "q.jsonl"
    bad.write_text('{"question": "x", "relevant": "A"}\n{"question": "y"}\n')
    with pytest.raises(MalformedRecord) as exc:
        load_queries(bad)
    assert exc.value.line == 2


def test_label_queries_repeats():
    qs = label_queries([Query("a", "Inc1"), Query("b", "Inc1"), Query("c", "Inc2", "x")])
    assert [q.id for q in qs] == ["Inc1", "Inc1#2", "x"]


# -- question answering ------------------------------------------------------

VOCABS = [
    "router firmware reset power light restart cable",
    "licence antivirus payment subscription renewal invoice key",
    "filter parental banking website blocked whitelist browser",
]


def _disjoint_corpus(vocabs):
    return Corpus(tuple(
        Inquiry(f"Inc{i + 1}", "t", f"{v} {v}", (Message(Role.AGENT, v),))
        for i, v in enumerate(vocabs)
    ))


def test_three_inquiry_diagonal():
    corpus = _disjoint_corpus(VOCABS)
    store, _ = _one_chunk_store(corpus, dim=1024)
    answers = {f"q{i}": full_thread_text(inq) for i, inq in enumerate(corpus)}
    provider = MockProvider(MockMode("canned", responses=answers), ProviderConfig(embed_dim=1024))
    queries = [Query(f"question {i}", inq.id, f"q{i}") for i, inq in enumerate(corpus)]
    matrix, rep = eval_qa(store, queries, provider, k=1)
    rows = [list(c.vector.values) for c in store.chunks]
    for q in queries:
        col = matrix.column(q.id)
        want = group_min(rows, [c.inquiry_id for c in store.chunks],
                         list(mock_embed(answers[q.id], 1024).values))
        assert col == want
        assert col[q.relevant] == pytest.approx(0.0, abs=1e-9)
        assert all(col[q.relevant] < d for inq, d in col.items() if inq != q.relevant)
        assert rep.cell(q.id, "relevant_is_min") is True
        assert rep.cell(q.id, "margin") > 0.5
    assert qa_summary(rep)["relevant_is_min"] == 3
    assert matrix.to_report().key_column == "historic_inquiry"


def test_qa_column_permutation_invariance():
    corpus = _disjoint_corpus(VOCABS)
    store, _ = _one_chunk_store(corpus, dim=512)
    answers = {f"q{i}": VOCABS[i] for i in range(3)}
    provider = MockProvider(MockMode("canned", responses=answers), ProviderConfig(embed_dim=512))
    queries = [Query(f"question {i}", f"Inc{i + 1}", f"q{i}") for i in range(3)]
    m1, _ = eval_qa(store, queries, provider, k=2)
    m2, _ = eval_qa(store, list(reversed(queries)), provider, k=2)
    for q in queries:
        assert m1.column(q.id) == m2.column(q.id)


def test_qa_failed_column_is_err():
    corpus = _disjoint_corpus(VOCABS)
    store, _ = _one_chunk_store(corpus, dim=64)
    provider = MockProvider(MockMode("canned", responses={"q0": VOCABS[0]}), ProviderConfig(embed_dim=64))
    queries = [Query("a", "Inc1", "q0"), Query("b", "Inc2", "q1")]
    matrix, rep = eval_qa(store, queries, provider, k=1)
    assert isinstance(rep.cell("q1", "relevant_is_min"), CellError)
    assert matrix.column("q1") == {"Inc1": None, "Inc2": None, "Inc3": None}
    assert "ERR" in render_csv(matrix.to_report())
    assert qa_summary(rep)["relevant_is_min"] == 1


def test_qa_refusal_flag():
    corpus = _disjoint_corpus(VOCABS)
    store, _ = _one_chunk_store(corpus, dim=64)
    provider = MockProvider(MockMode("canned", responses={"q": "I don't know"}), ProviderConfig(embed_dim=64))
    _, rep = eval_qa(store, [Query("?", "Inc1", "q")], provider, k=1)
    assert rep.cell("q", "refusal") is True


def test_qa_unknown_relevant():
    corpus = _disjoint_corpus(VOCABS)
    store, provider = _one_chunk_store(corpus, dim=64)
    with pytest.raises(InvalidParams):
        eval_qa(store, [Query("?", "Inc99", "q")], provider, k=1)
    with pytest.raises(EmptyStore):
        eval_qa(VectorStore(64), [Query("?", "Inc1", "q")], provider, k=1)


def test_distance_cells_in_range(data_dir):
    corpus = load_corpus(data_dir / "sample_corpus.jsonl")
    provider = MockProvider(config=ProviderConfig(embed_dim=128))
    store = VectorStore(128, 400, 80)
    for inq in corpus:
        store.ingest(inq.id, full_thread_text(inq), provider)
    matrix, _ = eval_qa(store, load_queries(data_dir / "sample_queries.jsonl"), provider, k=3)
    vals = np.array(matrix.cells, dtype=float)
    assert vals.shape == (15, 10)
    assert np.all((vals >= 0) & (vals <= 2))
