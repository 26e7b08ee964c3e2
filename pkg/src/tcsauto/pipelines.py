"""Email correction, length-targeted summarization and retrieval-augmented
question answering on top of a provider."""

from __future__ import annotations

import string
from dataclasses import dataclass

from .corpus import text_stats
from .errors import EmptyStore, InvalidParams
from .metrics import cosine_similarity
from .provider import ChatRequest, ChatResponse, Provider
from .vectorstore import SearchHit, VectorStore


class TemplateError(InvalidParams):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    """System/user message pair with ``{name}`` placeholders.

    Rendering is plain substitution; ``{{`` and ``}}`` produce literal braces.
    """

    system: str
    user: str = "{input}"

    @staticmethod
    def _fields(template: str) -> set[str]:
        names = set()
        for _, name, spec, conv in string.Formatter().parse(template):
            if name is None:
                continue
            if not name.isidentifier() or spec or conv:
                raise TemplateError(f"unsupported placeholder {{{name}}}")
            names.add(name)
        return names

    @property
    def placeholders(self) -> set[str]:
        return self._fields(self.system) | self._fields(self.user)

    def render(self, **values: str) -> tuple[str, str]:
        missing = self.placeholders - values.keys()
        if missing:
            raise TemplateError(f"unbound placeholders: {sorted(missing)}")
        return self.system.format_map(values), self.user.format_map(values)


CORRECTION_PROMPT = PromptTemplate(
    system="You are a language expert. Please correct the following email:",
)

SUMMARY_PROMPT = PromptTemplate(
    system="You are a helpful assistant. Summarize the following text in exactly {num_words}.",
)

QA_PROMPT = PromptTemplate(
    system='''
Answer the user questions in detail and explain all the necessary solution
steps. If the context doesn't contain any relevant information to answer the
question, just say "I don't know":

<context>
{context}
</context>
''',
)

REFUSAL = "I don't know"
CONTEXT_SEPARATOR = "\n\n"


def _ask(provider: Provider, template: PromptTemplate, model: str, key: str | None,
         **values: str) -> ChatResponse:
    system, user = template.render(**values)
    return provider.chat(ChatRequest(system=system, user=user, model=model, temperature=0.0, key=key))


def correct_email(provider: Provider, email_text: str, *, key: str | None = None) -> str:
    """Return the provider's corrected version of ``email_text`` unchanged."""
    if not email_text.strip():
        raise InvalidParams("email text must be non-empty")
    return _ask(provider, CORRECTION_PROMPT, provider.config.chat_model, key, input=email_text).text


@dataclass(frozen=True)
class SummaryResult:
    summary: str
    target_words: int
    actual_words: int
    similarity: float
    source_words: int


def summarize(provider: Provider, source_text: str, target_words: int, *,
              key: str | None = None) -> SummaryResult:
    if target_words < 1:
        raise InvalidParams("target_words must be >= 1")
    if not source_text.strip():
        raise InvalidParams("source text must be non-empty")
    summary = _ask(provider, SUMMARY_PROMPT, provider.config.summary_model, key,
                   num_words=f"{target_words} words", input=source_text).text
    src_vec, sum_vec = provider.embed([source_text, summary])
    return SummaryResult(
        summary=summary,
        target_words=target_words,
        actual_words=text_stats(summary).words,
        similarity=cosine_similarity(src_vec, sum_vec),
        source_words=text_stats(source_text).words,
    )


@dataclass(frozen=True)
class Answer:
    text: str
    question: str
    retrieved: tuple[SearchHit, ...]
    is_refusal: bool
    system_prompt: str = ""


def is_refusal(text: str) -> bool:
    return text.strip() == REFUSAL


def build_context(hits: list[SearchHit] | tuple[SearchHit, ...]) -> str:
    return CONTEXT_SEPARATOR.join(h.chunk.text for h in hits)


def answer_question(provider: Provider, store: VectorStore, question: str, k: int, *,
                    key: str | None = None) -> Answer:
    """Retrieve the top-``k`` chunks for ``question`` and answer from them."""
    if k < 1:
        raise InvalidParams("k must be >= 1")
    if not question.strip():
        raise InvalidParams("question must be non-empty")
    if len(store) == 0:
        raise EmptyStore()
    (qvec,) = provider.embed([question])
    hits = tuple(store.search(qvec, k))
    system, user = QA_PROMPT.render(context=build_context(hits), input=question)
    resp = provider.chat(ChatRequest(system=system, user=user, model=provider.config.chat_model,
                                     temperature=0.0, key=key))
    return Answer(resp.text, question, hits, is_refusal(resp.text), system)
