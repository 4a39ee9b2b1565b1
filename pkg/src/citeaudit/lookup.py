"""External-lookup port with a persistent replay cache and a token-bucket limiter.

The port is the only serialized resource in verification: every live call
passes through :class:`TokenBucket`, and every answer is appended to the
cache so later runs can replay it without network access.
"""
from __future__ import annotations

import enum
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol


class LookupOutcome(str, enum.Enum):
    RECORD_FOUND = "RECORD_FOUND"
    CITED_BY_MULTIPLE = "CITED_BY_MULTIPLE"
    NOT_FOUND = "NOT_FOUND"


class LookupTimeout(Exception):
    pass


class CacheMiss(LookupError):
    """Replay mode found no cached answer for a query."""


@dataclass(frozen=True)
class ExternalLookupResult:
    query_title_norm: str
    outcome: LookupOutcome
    evidence_count: int = 0
    fetched_at: str = "1970-01-01T00:00:00Z"

    def __post_init__(self):
        if self.evidence_count < 0:
            raise ValueError("evidence_count must be >= 0")
        if self.outcome is LookupOutcome.CITED_BY_MULTIPLE and self.evidence_count < 2:
            raise ValueError("CITED_BY_MULTIPLE needs evidence_count >= 2")

    @property
    def verified(self) -> bool:
        return self.outcome in (LookupOutcome.RECORD_FOUND, LookupOutcome.CITED_BY_MULTIPLE)

    def to_json(self) -> dict:
        return {
            "query_title_norm": self.query_title_norm,
            "outcome": self.outcome.value,
            "evidence_count": self.evidence_count,
            "fetched_at": self.fetched_at,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ExternalLookupResult":
        return cls(obj["query_title_norm"], LookupOutcome(obj["outcome"]), int(obj["evidence_count"]), obj["fetched_at"])


class LookupPort(Protocol):
    def lookup(self, title_norm: str) -> ExternalLookupResult: ...


class NullLookup:
    """Offline stub: nothing is ever found externally."""

    def lookup(self, title_norm: str) -> ExternalLookupResult:
        return ExternalLookupResult(title_norm, LookupOutcome.NOT_FOUND, 0)


class CallableLookup:
    """Adapt ``fn(title_norm) -> (outcome, evidence_count)`` to the port protocol."""

    def __init__(self, fn: Callable[[str], tuple], clock: Callable[[], float] = time.time):
        self.fn = fn
        self.clock = clock

    def lookup(self, title_norm: str) -> ExternalLookupResult:
        outcome, evidence = self.fn(title_norm)
        stamp = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(self.clock()))
        return ExternalLookupResult(title_norm, LookupOutcome(outcome), int(evidence), stamp)


class TokenBucket:
    def __init__(self, rate: float, capacity: float | None = None,
                 clock: Callable[[], float] = time.monotonic, sleep: Callable[[float], None] = time.sleep):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(1.0, rate)
        self.tokens = self.capacity
        self.clock = clock
        self.sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        with self._lock:
            while True:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self._last) * self.rate)
                self._last = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                self.sleep((1.0 - self.tokens) / self.rate)


class CachedLookup:
    """Cache-first wrapper around a live port.

    In replay mode live calls are forbidden and a cache miss raises
    :class:`CacheMiss`.
    """

    def __init__(self, port: LookupPort | None, cache_path, replay: bool = False, limiter: TokenBucket | None = None):
        if port is None and not replay:
            raise ValueError("a live port is required outside replay mode")
        self.port = port
        self.path = Path(cache_path)
        self.replay = replay
        self.limiter = limiter
        self._lock = threading.Lock()
        self.cache: dict[str, ExternalLookupResult] = {}
        self.live_calls = 0
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        r = ExternalLookupResult.from_json(json.loads(line))
                        self.cache[r.query_title_norm] = r

    def lookup(self, title_norm: str) -> ExternalLookupResult:
        with self._lock:
            hit = self.cache.get(title_norm)
        if hit is not None:
            return hit
        if self.replay:
            raise CacheMiss(title_norm)
        if self.limiter is not None:
            self.limiter.acquire()
        result = self.port.lookup(title_norm)
        with self._lock:
            self.live_calls += 1
            if title_norm not in self.cache:
                self.cache[title_norm] = result
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(result.to_json(), sort_keys=True, ensure_ascii=False) + "\n")
                    fh.flush()
                    os.fsync(fh.fileno())
            return self.cache[title_norm]
