"""Exception hierarchy shared by every tcsauto module."""

from __future__ import annotations


class TcsError(Exception):
    """Base class for all toolkit errors."""


class InvalidParams(TcsError, ValueError):
    pass


# corpus

class CorpusError(TcsError):
    pass


class MalformedRecord(CorpusError):
    def __init__(self, line: int, reason: str) -> None:
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class DuplicateId(CorpusError):
    def __init__(self, inquiry_id: str) -> None:
        super().__init__(f"duplicate inquiry id {inquiry_id!r}")
        self.inquiry_id = inquiry_id


# metrics

class DimensionMismatch(TcsError, ValueError):
    def __init__(self, left: int, right: int) -> None:
        super().__init__(f"dimension mismatch: {left} != {right}")
        self.left = left
        self.right = right


class ZeroVector(TcsError, ValueError):
    pass


class NegativeSaving(TcsError, ValueError):
    pass


# provider

class ProviderError(TcsError):
    pass


class AuthMissing(ProviderError):
    def __init__(self, env_var: str) -> None:
        super().__init__(f"environment variable {env_var} is not set")
        self.env_var = env_var


class RateLimited(ProviderError):
    pass


class TransportError(ProviderError):
    pass


class MalformedResponse(ProviderError):
    pass


# vectorstore

class StoreError(TcsError):
    pass


class EmptyStore(StoreError):
    def __init__(self) -> None:
        super().__init__("empty store")


class DuplicateInquiry(StoreError):
    def __init__(self, inquiry_id: str) -> None:
        super().__init__(f"inquiry {inquiry_id!r} already ingested")
        self.inquiry_id = inquiry_id


class BadMagic(StoreError):
    pass


class VersionUnsupported(StoreError):
    def __init__(self, version: int) -> None:
        super().__init__(f"unsupported store version {version}")
        self.version = version


class Corrupt(StoreError):
    def __init__(self, offset: int, reason: str = "truncated or invalid data") -> None:
        super().__init__(f"corrupt store at byte {offset}: {reason}")
        self.offset = offset


# evalharness

class MissingGold(TcsError):
    def __init__(self, inquiry_id: str) -> None:
        super().__init__(f"inquiry {inquiry_id!r} has no gold reply")
        self.inquiry_id = inquiry_id
