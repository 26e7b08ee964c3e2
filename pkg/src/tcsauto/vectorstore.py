"""Character-window chunking and an exact cosine k-NN store with a
single-file binary format.

File layout (all little-endian)::

    header   magic "TCSVEC01" | version u32 | dim u32 | metric u8 | count u64
    record   chunk_id u64 | inquiry_id (u16 len + UTF-8) | start u64 | end u64
             | text (u32 len + UTF-8) | dim x f32
"""

from __future__ import annotations

import os
import struct
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import _backend
from .errors import (
    BadMagic,
    Corrupt,
    DimensionMismatch,
    DuplicateInquiry,
    EmptyStore,
    InvalidParams,
    VersionUnsupported,
    ZeroVector,
)
from .metrics import EmbeddingVector

MAGIC = b"TCSVEC01"
VERSION = 1
METRIC_COSINE = 0

DEFAULT_CHUNK_SIZE = 1000
DEFAULT_CHUNK_OVERLAP = 200

_HEADER = struct.Struct("<8sIIBQ")
_U64 = struct.Struct("<Q")
_U32 = struct.Struct("<I")
_U16 = struct.Struct("<H")


def chunk_text(text: str, size: int, overlap: int) -> list[tuple[int, int]]:
    """Sliding windows ``[s, min(s + size, len))`` with stride ``size - overlap``.

    Stops at the first window that reaches the end of the text, so no window
    is contained in an earlier one.
    """
    if size < 1 or not 0 <= overlap < size:
        raise InvalidParams(f"need size >= 1 and 0 <= overlap < size (got {size}, {overlap})")
    n = len(text)
    stride = size - overlap
    spans = []
    start = 0
    while start < n:
        end = min(start + size, n)
        spans.append((start, end))
        if end == n:
            break
        start += stride
    return spans


@dataclass(frozen=True)
class Chunk:
    chunk_id: int
    inquiry_id: str
    text: str
    start: int
    end: int
    vector: EmbeddingVector


@dataclass(frozen=True)
class SearchHit:
    chunk: Chunk
    distance: float


@dataclass(frozen=True)
class StoreHeader:
    magic: bytes
    version: int
    dim: int
    metric: str
    count: int


class _State(NamedTuple):
    matrix: np.ndarray          # (n, dim) float32
    chunk_ids: np.ndarray       # (n,) uint64, strictly increasing
    inquiry_ids: tuple[str, ...]
    starts: tuple[int, ...]
    ends: tuple[int, ...]
    texts: tuple[str, ...]


def _empty_state(dim: int) -> _State:
    return _State(np.zeros((0, dim), dtype=np.float32), np.zeros(0, dtype=np.uint64), (), (), (), ())


class VectorStore:
    """Exact exhaustive cosine index over text chunks.

    Searches read an immutable snapshot, so they may run concurrently with
    each other and never see a half-ingested inquiry. Ingest and save are
    serialized by an internal lock.
    """

    def __init__(
        self,
        dim: int,
        chunk_size: int = DEFAULT_CHUNK_SIZE,
        chunk_overlap: int = DEFAULT_CHUNK_OVERLAP,
        model_tag: str = "",
    ) -> None:
        if dim < 1:
            raise InvalidParams("store dim must be >= 1")
        if chunk_size < 1 or not 0 <= chunk_overlap < chunk_size:
            raise InvalidParams("need chunk_size >= 1 and 0 <= chunk_overlap < chunk_size")
        self.dim = dim
        self.chunk_size = chunk_size
        self.chunk_overlap = chunk_overlap
        self.model_tag = model_tag
        self._state = _empty_state(dim)
        self._lock = threading.RLock()
        self._pending: set[str] = set()

    # -- inspection ---------------------------------------------------------

    def __len__(self) -> int:
        return self._state.matrix.shape[0]

    @property
    def count(self) -> int:
        return len(self)

    @property
    def header(self) -> StoreHeader:
        return StoreHeader(MAGIC, VERSION, self.dim, "cosine", len(self))

    @property
    def inquiry_ids(self) -> list[str]:
        """Distinct inquiry ids in insertion order."""
        return list(dict.fromkeys(self._state.inquiry_ids))

    def _chunk(self, st: _State, row: int) -> Chunk:
        vec = EmbeddingVector(tuple(st.matrix[row].tolist()), self.model_tag)
        return Chunk(int(st.chunk_ids[row]), st.inquiry_ids[row], st.texts[row],
                     st.starts[row], st.ends[row], vec)

    @property
    def chunks(self) -> list[Chunk]:
        st = self._state
        return [self._chunk(st, i) for i in range(st.matrix.shape[0])]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VectorStore):
            return NotImplemented
        a, b = self._state, other._state
        return (
            self.dim == other.dim
            and a.inquiry_ids == b.inquiry_ids
            and a.starts == b.starts
            and a.ends == b.ends
            and a.texts == b.texts
            and np.array_equal(a.chunk_ids, b.chunk_ids)
            and a.matrix.tobytes() == b.matrix.tobytes()
        )

    __hash__ = None  # type: ignore[assignment]

    # -- mutation -----------------------------------------------------------

    def _next_id(self) -> int:
        ids = self._state.chunk_ids
        return int(ids[-1]) + 1 if len(ids) else 0

    def add(
        self,
        inquiry_id: str,
        spans: Sequence[tuple[int, int]],
        texts: Sequence[str],
        vectors: Sequence[EmbeddingVector | Sequence[float]],
    ) -> list[int]:
        """Append pre-embedded chunks for one inquiry; returns their ids."""
        if not inquiry_id:
            raise InvalidParams("inquiry id must be non-empty")
        if not len(spans) == len(texts) == len(vectors):
            raise InvalidParams("spans, texts and vectors must have equal length")
        with self._lock:
            if inquiry_id in self._pending or inquiry_id in self._state.inquiry_ids:
                raise DuplicateInquiry(inquiry_id)
            return self._append(inquiry_id, spans, texts, vectors)

    def _append(self, inquiry_id, spans, texts, vectors) -> list[int]:
        n = len(spans)
        if n == 0:
            return []
        rows = np.empty((n, self.dim), dtype=np.float32)
        for i, ((s, e), text, vec) in enumerate(zip(spans, texts, vectors)):
            vals = vec.values if isinstance(vec, EmbeddingVector) else vec
            if len(vals) != self.dim:
                raise DimensionMismatch(len(vals), self.dim)
            if not 0 <= s < e or len(text) != e - s:
                raise InvalidParams(f"chunk span ({s}, {e}) does not match its text")
            rows[i] = vals
            if not np.all(np.isfinite(rows[i])):
                raise InvalidParams("chunk vector is not finite in float32")
            if not np.any(rows[i]):
                raise ZeroVector("cannot index a zero vector under the cosine metric")
        st = self._state
        first = self._next_id()
        new_ids = np.arange(first, first + n, dtype=np.uint64)
        self._state = _State(
            np.concatenate([st.matrix, rows]),
            np.concatenate([st.chunk_ids, new_ids]),
            st.inquiry_ids + (inquiry_id,) * n,
            st.starts + tuple(int(s) for s, _ in spans),
            st.ends + tuple(int(e) for _, e in spans),
            st.texts + tuple(texts),
        )
        return [int(x) for x in new_ids]

    def ingest(self, inquiry_id: str, text: str, embedder) -> int:
        """Chunk ``text``, embed every window and append the chunks.

        Returns the number of chunks added. Each inquiry id may be ingested
        once; embedding happens outside the store lock.
        """
        with self._lock:
            if inquiry_id in self._pending or inquiry_id in self._state.inquiry_ids:
                raise DuplicateInquiry(inquiry_id)
            self._pending.add(inquiry_id)
        try:
            spans = chunk_text(text, self.chunk_size, self.chunk_overlap)
            if not spans:
                return 0
            texts = [text[s:e] for s, e in spans]
            vectors = embedder.embed(texts)
            if len(vectors) != len(texts):
                raise InvalidParams("embedder returned the wrong number of vectors")
            for v in vectors:
                if v.dim != self.dim:
                    raise DimensionMismatch(v.dim, self.dim)
            if not self.model_tag and vectors:
                self.model_tag = vectors[0].model_tag
            with self._lock:
                self._append(inquiry_id, spans, texts, vectors)
            return len(spans)
        finally:
            with self._lock:
                self._pending.discard(inquiry_id)

    # -- queries ------------------------------------------------------------

    def _query(self, query: EmbeddingVector | Sequence[float]) -> np.ndarray:
        vals = query.values if isinstance(query, EmbeddingVector) else query
        q = np.asarray(vals, dtype=np.float32)
        if q.ndim != 1 or q.shape[0] != self.dim:
            raise DimensionMismatch(q.shape[0] if q.ndim == 1 else -1, self.dim)
        if not np.any(q):
            raise ZeroVector("query vector is zero")
        return np.ascontiguousarray(q)

    def distances(self, query: EmbeddingVector | Sequence[float]) -> np.ndarray:
        """Cosine distance from ``query`` to every chunk, in row order.

        The query is rounded to float32 like the stored vectors; arithmetic
        is done in float64.
        """
        q = self._query(query)
        st = self._state
        if st.matrix.shape[0] == 0:
            raise EmptyStore()
        return _backend.cosine_distances(st.matrix, q)

    def search(self, query: EmbeddingVector | Sequence[float], k: int) -> list[SearchHit]:
        """The ``min(k, count)`` nearest chunks, ascending distance, ties by chunk id."""
        if k < 1:
            raise InvalidParams("k must be >= 1")
        st = self._state
        if st.matrix.shape[0] == 0:
            raise EmptyStore()
        q = self._query(query)
        dist = _backend.cosine_distances(st.matrix, q)
        n = dist.shape[0]
        if k < n:
            kth = np.partition(dist, k - 1)[k - 1]
            cand = np.flatnonzero(dist <= kth)
        else:
            cand = np.arange(n)
        order = cand[np.lexsort((st.chunk_ids[cand], dist[cand]))][:k]
        return [SearchHit(self._chunk(st, int(i)), float(dist[i])) for i in order]

    def nearest_per_inquiry(self, query: EmbeddingVector | Sequence[float]) -> dict[str, float]:
        """Minimum chunk distance for every inquiry, in insertion order."""
        st = self._state
        if st.matrix.shape[0] == 0:
            raise EmptyStore()
        dist = _backend.cosine_distances(st.matrix, self._query(query))
        out: dict[str, float] = {}
        for inq, d in zip(st.inquiry_ids, dist.tolist()):
            if inq not in out or d < out[inq]:
                out[inq] = d
        return out

    # -- persistence --------------------------------------------------------

    def to_bytes(self) -> bytes:
        with self._lock:
            st = self._state
            parts = [_HEADER.pack(MAGIC, VERSION, self.dim, METRIC_COSINE, st.matrix.shape[0])]
            le = st.matrix.astype("<f4", copy=False)
            for i in range(st.matrix.shape[0]):
                inq = st.inquiry_ids[i].encode("utf-8")
                text = st.texts[i].encode("utf-8")
                if len(inq) > 0xFFFF:
                    raise InvalidParams("inquiry id longer than 65535 bytes")
                parts.append(_U64.pack(int(st.chunk_ids[i])))
                parts.append(_U16.pack(len(inq)) + inq)
                parts.append(_U64.pack(st.starts[i]) + _U64.pack(st.ends[i]))
                parts.append(_U32.pack(len(text)) + text)
                parts.append(le[i].tobytes())
            return b"".join(parts)

    def save(self, path: str | Path) -> None:
        """Write the store atomically (temp file + rename)."""
        path = Path(path)
        data = self.to_bytes()
        fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name + ".", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    @classmethod
    def from_bytes(
        cls,
        data: bytes,
        chunk_size: int = DEFAULT_CHUNK_SIZE,
        chunk_overlap: int = DEFAULT_CHUNK_OVERLAP,
    ) -> VectorStore:
        if len(data) >= len(MAGIC) and data[: len(MAGIC)] != MAGIC:
            raise BadMagic(f"bad magic {data[:len(MAGIC)]!r}")
        if len(data) < _HEADER.size:
            if data[: len(MAGIC)] != MAGIC[: len(data)]:
                raise BadMagic("bad magic")
            raise Corrupt(len(data), "truncated header")
        _, version, dim, metric, count = _HEADER.unpack_from(data, 0)
        if version != VERSION:
            raise VersionUnsupported(version)
        if dim < 1:
            raise Corrupt(12, "dim must be >= 1")
        if metric != METRIC_COSINE:
            raise Corrupt(16, f"unknown metric code {metric}")

        reader = _Reader(data, _HEADER.size)
        # every record takes at least 30 bytes plus its vector
        if count > (len(data) - _HEADER.size) // (30 + 4 * dim):
            raise Corrupt(17, f"count {count} exceeds file size")
        ids = np.empty(count, dtype=np.uint64)
        matrix = np.empty((count, dim), dtype=np.float32)
        inqs, starts, ends, texts = [], [], [], []
        prev_id = -1
        for i in range(count):
            rec_off = reader.pos
            cid = reader.u64()
            if cid <= prev_id:
                raise Corrupt(rec_off, "chunk ids are not strictly increasing")
            prev_id = cid
            inq = reader.string(reader.u16())
            start = reader.u64()
            end = reader.u64()
            text = reader.string(reader.u32())
            if not start < end or len(text) != end - start or not inq:
                raise Corrupt(rec_off, "inconsistent chunk record")
            vec_off = reader.pos
            row = np.frombuffer(reader.take(4 * dim), dtype="<f4")
            if not np.all(np.isfinite(row)):
                raise Corrupt(vec_off, "non-finite vector component")
            ids[i] = cid
            matrix[i] = row
            inqs.append(inq)
            starts.append(start)
            ends.append(end)
            texts.append(text)
        if reader.pos != len(data):
            raise Corrupt(reader.pos, "trailing bytes after last record")

        store = cls(dim, chunk_size, chunk_overlap)
        store._state = _State(matrix, ids, tuple(inqs), tuple(starts), tuple(ends), tuple(texts))
        return store

    @classmethod
    def load(
        cls,
        path: str | Path,
        chunk_size: int = DEFAULT_CHUNK_SIZE,
        chunk_overlap: int = DEFAULT_CHUNK_OVERLAP,
    ) -> VectorStore:
        return cls.from_bytes(Path(path).read_bytes(), chunk_size, chunk_overlap)


class _Reader:
    def __init__(self, data: bytes, pos: int) -> None:
        self.data = data
        self.pos = pos

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise Corrupt(self.pos, f"need {n} bytes, {len(self.data) - self.pos} left")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u64(self) -> int:
        return _U64.unpack(self.take(8))[0]

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def u16(self) -> int:
        return _U16.unpack(self.take(2))[0]

    def string(self, n: int) -> str:
        off = self.pos
        raw = self.take(n)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise Corrupt(off, "invalid UTF-8") from None


# module-level spellings of the store operations

def ingest(store: VectorStore, inquiry_id: str, text: str, embedder) -> int:
    return store.ingest(inquiry_id, text, embedder)


def search(store: VectorStore, query, k: int) -> list[SearchHit]:
    return store.search(query, k)


def nearest_per_inquiry(store: VectorStore, query) -> dict[str, float]:
    return store.nearest_per_inquiry(query)


def save(store: VectorStore, path: str | Path) -> None:
    store.save(path)


def load(path: str | Path, chunk_size: int = DEFAULT_CHUNK_SIZE,
         chunk_overlap: int = DEFAULT_CHUNK_OVERLAP) -> VectorStore:
    return VectorStore.load(path, chunk_size, chunk_overlap)
