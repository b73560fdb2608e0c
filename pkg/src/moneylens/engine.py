"""Engine wiring: load artifacts, extract amounts, produce suggestion bundles.

The engine is built once from a config (file or kwargs) and is immutable
afterwards, so concurrent callers can share it freely.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .crowd import CrowdCorpus
from .embedding import EmbeddingIndex, EmbeddingProvider, HashedNgramProvider, RemoteEmbeddingProvider
from .familiarity import apply_familiarity, load_familiarity_model
from .parsing import Measurement, extract_measurements
from .policies import (
    PER_CAPITA_SUFFIX,
    POLICIES,
    PolicyEngines,
    PolicyFailure,
    SuggestionBundle,
    US_POPULATION,
    suggest_all,
)
from .ranking import load_ranker
from .references import ReferenceCorpus, load_corpus

__all__ = ["EngineConfig", "Engine", "MeasurementSuggestions"]

DEFAULT_MAX_TEXT_CHARS = 20_000

_SENTENCE_BREAK = re.compile(r"(?<=[.!?])\s+(?=[A-Z\"'“(])")
_ABBREV_TAIL = re.compile(r"(?:^|\s)(?:[A-Z]\.)+$")


@dataclass(frozen=True)
class EngineConfig:
    """Paths and knobs for one engine instance.

    File format: one ``key = value`` per line, ``#`` comments; every key can
    be overridden by CLI flags.
    """

    corpus_path: Optional[str] = None
    crowd_corpus_path: Optional[str] = None
    rank_model_path: Optional[str] = None
    familiarity_model_path: Optional[str] = None
    embeddings_cache_path: Optional[str] = None
    embedding_provider: str = "builtin"  # "builtin" or an http(s) endpoint URL
    builtin_dims: int = 256
    population: int = US_POPULATION
    per_capita_suffix: str = PER_CAPITA_SUFFIX
    prefilter_k: int = 50
    enabled_policies: tuple[str, ...] = POLICIES
    selection_log_path: str = "selections.csv"
    listen_host: str = "127.0.0.1"
    listen_port: int = 8080
    max_text_chars: int = DEFAULT_MAX_TEXT_CHARS

    def __post_init__(self) -> None:
        if not self.enabled_policies:
            raise ValueError("at least one policy must be enabled")
        unknown = set(self.enabled_policies) - set(POLICIES)
        if unknown:
            raise ValueError(f"unknown policies: {sorted(unknown)}")
        if self.population <= 0:
            raise ValueError("population must be positive")

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "EngineConfig":
        values: dict = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
        return cls.from_mapping(values, **overrides)

    @classmethod
    def from_mapping(cls, values: dict, **overrides) -> "EngineConfig":
        kwargs: dict = {}
        for key, raw in values.items():
            if key in (
                "corpus_path",
                "crowd_corpus_path",
                "rank_model_path",
                "familiarity_model_path",
                "embeddings_cache_path",
                "embedding_provider",
                "per_capita_suffix",
                "selection_log_path",
                "listen_host",
            ):
                kwargs[key] = raw
            elif key in ("builtin_dims", "population", "prefilter_k", "listen_port", "max_text_chars"):
                kwargs[key] = int(raw)
            elif key == "enabled_policies":
                kwargs[key] = tuple(p.strip() for p in raw.split(",") if p.strip())
            else:
                raise ValueError(f"unknown config key {key!r}")
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kwargs)


@dataclass(frozen=True)
class MeasurementSuggestions:
    """One detected amount with its suggestion bundle and policy failures."""

    measurement: Measurement
    bundle: SuggestionBundle
    failures: tuple[PolicyFailure, ...]


def split_sentences(text: str) -> list[tuple[int, int]]:
    """Character spans of sentences, via punctuation + capital heuristics.

    Single-capital abbreviations ("U.S.") do not end a sentence. Falls back
    to the whole text when nothing matches.
    """
    spans: list[tuple[int, int]] = []
    start = 0
    for m in _SENTENCE_BREAK.finditer(text):
        candidate = text[start : m.start()]
        if _ABBREV_TAIL.search(candidate):
            continue
        spans.append((start, m.start()))
        start = m.end()
    if start < len(text):
        spans.append((start, len(text)))
    return spans or [(0, len(text))]


def containing_sentence(text: str, start: int, end: int) -> str:
    """The sentence holding [start, end); the full text when spans disagree."""
    for s, e in split_sentences(text):
        if s <= start and end <= e:
            return text[s:e]
    return text


class Engine:
    """Immutable suggestion engine assembled from an :class:`EngineConfig`."""

    def __init__(self, config: EngineConfig):
        self.config = config
        self.provider = self._make_provider(config)
        self.corpus: Optional[ReferenceCorpus] = None
        self.index: Optional[EmbeddingIndex] = None
        self.familiarity: Optional[dict[str, float]] = None
        self.ranker = None
        self.crowd_corpus: Optional[CrowdCorpus] = None

        if config.crowd_corpus_path:
            self.crowd_corpus = CrowdCorpus.load(config.crowd_corpus_path)
        if config.corpus_path:
            self.corpus = load_corpus(config.corpus_path)
            self.index = self._load_or_build_index(config)
        if config.familiarity_model_path:
            self._require_index("familiarity model")
            model, provider_name = load_familiarity_model(config.familiarity_model_path)
            self._check_provider(provider_name, config.familiarity_model_path)
            self.familiarity = apply_familiarity(self.corpus, self.index, model)
        if config.rank_model_path:
            self._require_index("helpfulness model")
            self.ranker, provider_name = load_ranker(config.rank_model_path)
            self._check_provider(provider_name, config.rank_model_path)

    @staticmethod
    def _make_provider(config: EngineConfig) -> EmbeddingProvider:
        if config.embedding_provider == "builtin":
            return HashedNgramProvider(dims=config.builtin_dims)
        if config.embedding_provider.startswith(("http://", "https://")):
            return RemoteEmbeddingProvider(config.embedding_provider)
        raise ValueError(
            f"embedding_provider must be 'builtin' or an http(s) URL, "
            f"got {config.embedding_provider!r}"
        )

    def _load_or_build_index(self, config: EngineConfig) -> EmbeddingIndex:
        cache = Path(config.embeddings_cache_path) if config.embeddings_cache_path else None
        if cache is not None and cache.exists():
            index = EmbeddingIndex.load(cache)
            if index.provider_name == self.provider.name and set(index.ids) == {
                o.id for o in self.corpus.objects
            }:
                return index
        index = EmbeddingIndex.build(self.corpus, self.provider)
        if cache is not None:
            index.save(cache)
        return index

    def _require_index(self, what: str) -> None:
        if self.corpus is None or self.index is None:
            raise ValueError(f"{what} requires corpus_path to be configured")

    def _check_provider(self, provider_name: str, path: str) -> None:
        if provider_name != self.provider.name:
            raise ValueError(
                f"{path}: model was built with provider {provider_name!r} but the "
                f"engine uses {self.provider.name!r}"
            )

    def _engines(self) -> PolicyEngines:
        return PolicyEngines(
            population=self.config.population,
            suffix=self.config.per_capita_suffix,
            crowd_corpus=self.crowd_corpus,
            corpus=self.corpus,
            index=self.index,
            familiarity=self.familiarity,
            ranker=self.ranker,
            provider=self.provider,
            prefilter_k=self.config.prefilter_k,
            enabled=self.config.enabled_policies,
        )

    def suggest_for(self, sentence: str, measurement: Measurement) -> MeasurementSuggestions:
        bundle, failures = suggest_all(sentence, measurement, self._engines())
        return MeasurementSuggestions(
            measurement=measurement, bundle=bundle, failures=tuple(failures)
        )

    def suggest(self, text: str) -> list[MeasurementSuggestions]:
        """Detect amounts in ``text`` and bundle suggestions for each.

        Zero amounts are detected but produce no bundle entry.
        """
        out = []
        for measurement in extract_measurements(text):
            if measurement.value <= 0:
                continue
            sentence = containing_sentence(text, measurement.span.start, measurement.span.end)
            out.append(self.suggest_for(sentence, measurement))
        return out

    def health(self) -> dict:
        return {
            "status": "ok",
            "provider": self.provider.name,
            "corpus_size": len(self.corpus) if self.corpus is not None else 0,
            "crowd_corpus_size": len(self.crowd_corpus) if self.crowd_corpus is not None else 0,
            "policies": list(self.config.enabled_policies),
            "contextual_ready": self._engines().contextual_ready(),
        }
