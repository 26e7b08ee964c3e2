"""LLM-backed technical-customer-support toolkit: email correction,
length-targeted summarization, retrieval-augmented Q&A and the metrics to
evaluate them."""

from ._backend import BACKEND
from .corpus import Corpus, Inquiry, Message, TextStats, full_thread_text, load_corpus, save_corpus, text_stats
from .metrics import (
    EmbeddingVector,
    ErrorCount,
    TypoSpec,
    cosine_distance,
    cosine_similarity,
    inject_typos,
    residual_errors,
    time_saved_minutes,
)
from .pipelines import answer_question, correct_email, summarize
from .provider import ChatRequest, ChatResponse, HttpProvider, MockMode, MockProvider, ProviderConfig, mock_embed
from .vectorstore import Chunk, SearchHit, VectorStore, chunk_text

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ChatRequest",
    "ChatResponse",
    "Chunk",
    "Corpus",
    "EmbeddingVector",
    "ErrorCount",
    "HttpProvider",
    "Inquiry",
    "Message",
    "MockMode",
    "MockProvider",
    "ProviderConfig",
    "SearchHit",
    "TextStats",
    "TypoSpec",
    "VectorStore",
    "answer_question",
    "chunk_text",
    "correct_email",
    "cosine_distance",
    "cosine_similarity",
    "full_thread_text",
    "inject_typos",
    "load_corpus",
    "mock_embed",
    "residual_errors",
    "save_corpus",
    "summarize",
    "text_stats",
    "time_saved_minutes",
]
