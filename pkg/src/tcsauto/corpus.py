"""Customer inquiries: data model, line-delimited JSON ingestion, text stats."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DuplicateId, MalformedRecord

log = logging.getLogger(__name__)

# Unicode White_Space property (PropList.txt). str.isspace() is close but
# also accepts U+001C..U+001F, which are not White_Space.
WHITE_SPACE = (
    "\t\n\x0b\x0c\r\x20\x85\xa0\u1680"
    "\u2000\u2001\u2002\u2003\u2004\u2005\u2006\u2007\u2008\u2009\u200a"
    "\u2028\u2029\u202f\u205f\u3000"
)
_WORD_RE = re.compile("[^" + re.escape(WHITE_SPACE) + "]+")

THREAD_SEPARATOR = "\n\n"

_KNOWN_KEYS = {"id", "topic", "request", "messages", "reply_gold"}


class Role(str, Enum):
    CUSTOMER = "customer"
    AGENT = "agent"


@dataclass(frozen=True)
class Message:
    role: Role
    text: str

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("message text must be non-empty")


@dataclass(frozen=True)
class Inquiry:
    id: str
    topic: str
    request: str
    messages: tuple[Message, ...] = ()
    reply_gold: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("inquiry id must be non-empty")
        if not self.request:
            raise ValueError("inquiry request must be non-empty")


@dataclass(frozen=True)
class Corpus:
    inquiries: tuple[Inquiry, ...] = ()

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for inq in self.inquiries:
            if inq.id in seen:
                raise DuplicateId(inq.id)
            seen.add(inq.id)

    def __len__(self) -> int:
        return len(self.inquiries)

    def __iter__(self) -> Iterator[Inquiry]:
        return iter(self.inquiries)

    def get(self, inquiry_id: str) -> Inquiry:
        for inq in self.inquiries:
            if inq.id == inquiry_id:
                return inq
        raise KeyError(inquiry_id)

    @property
    def ids(self) -> list[str]:
        return [inq.id for inq in self.inquiries]


@dataclass(frozen=True)
class TextStats:
    words: int
    chars: int


def words(text: str) -> list[str]:
    """Split ``text`` into maximal runs of non-White_Space characters."""
    return _WORD_RE.findall(text)


def word_spans(text: str) -> list[tuple[int, int]]:
    return [m.span() for m in _WORD_RE.finditer(text)]


def text_stats(text: str) -> TextStats:
    # len() of a str counts code points, which for valid text are scalar values
    return TextStats(words=len(words(text)), chars=len(text))


def full_thread_text(inq: Inquiry) -> str:
    """Request followed by every message, separated by one blank line."""
    return THREAD_SEPARATOR.join([inq.request, *(m.text for m in inq.messages)])


def _require_str(obj: dict, key: str, line: int) -> str:
    value = obj.get(key)
    if not isinstance(value, str):
        raise MalformedRecord(line, f"field {key!r} must be a string")
    return value.strip()


def parse_record(obj: object, line: int) -> Inquiry:
    if not isinstance(obj, dict):
        raise MalformedRecord(line, "record is not an object")
    unknown = set(obj) - _KNOWN_KEYS
    if unknown:
        log.warning("line %d: ignoring unknown keys %s", line, sorted(unknown))

    inquiry_id = _require_str(obj, "id", line)
    if not inquiry_id:
        raise MalformedRecord(line, "empty id")
    topic = _require_str(obj, "topic", line)
    request = _require_str(obj, "request", line)
    if not request:
        raise MalformedRecord(line, "empty request")

    raw_messages = obj.get("messages", [])
    if not isinstance(raw_messages, list):
        raise MalformedRecord(line, "field 'messages' must be an array")
    messages = []
    for idx, raw in enumerate(raw_messages):
        if not isinstance(raw, dict):
            raise MalformedRecord(line, f"message {idx} is not an object")
        try:
            role = Role(raw.get("role"))
        except ValueError:
            raise MalformedRecord(line, f"message {idx} has invalid role {raw.get('role')!r}") from None
        text = raw.get("text")
        if not isinstance(text, str) or not text.strip():
            raise MalformedRecord(line, f"message {idx} has empty or missing text")
        messages.append(Message(role, text.strip()))

    reply_gold = obj.get("reply_gold")
    if reply_gold is not None:
        if not isinstance(reply_gold, str):
            raise MalformedRecord(line, "field 'reply_gold' must be a string")
        reply_gold = reply_gold.strip() or None

    return Inquiry(inquiry_id, topic, request, tuple(messages), reply_gold)


def parse_lines(lines: Iterable[str]) -> Corpus:
    inquiries: list[Inquiry] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(lineno, f"invalid JSON ({exc.msg})") from None
        inq = parse_record(obj, lineno)
        if inq.id in seen:
            raise DuplicateId(inq.id)
        seen.add(inq.id)
        inquiries.append(inq)
    return Corpus(tuple(inquiries))


def load_corpus(path: str | Path) -> Corpus:
    """Read a corpus file with one JSON record per line.

    Raises MalformedRecord, DuplicateId, or OSError.
    """
    with open(path, encoding="utf-8") as fh:
        return parse_lines(fh)


def record_of(inq: Inquiry) -> dict:
    rec: dict = {
        "id": inq.id,
        "topic": inq.topic,
        "request": inq.request,
        "messages": [{"role": m.role.value, "text": m.text} for m in inq.messages],
    }
    if inq.reply_gold is not None:
        rec["reply_gold"] = inq.reply_gold
    return rec


def dump_record(inq: Inquiry) -> str:
    return json.dumps(record_of(inq), ensure_ascii=False)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for inq in corpus:
            fh.write(dump_record(inq))
            fh.write("\n")
