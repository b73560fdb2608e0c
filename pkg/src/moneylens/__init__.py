"""moneylens: dollar-amount detection and perspective suggestions.

Detects dollar amounts in text and offers up to three re-expressions per
amount: a per-capita rewrite, the nearest crowd-verified comparison, and a
reference object ranked by a learned, context-aware helpfulness model.
"""

from .engine import Engine, EngineConfig
from .parsing import Measurement, TextSpan, extract_measurements, magnitude_of
from .policies import (
    CONTEXTUAL,
    CROWDSOURCED,
    POLICIES,
    RULE_BASED,
    Perspective,
    SuggestionBundle,
    format_multiplier,
    per_capita,
    round_sig,
)
from .references import ReferenceCorpus, ReferenceObject, load_corpus, save_corpus

__version__ = "0.1.0"

__all__ = [
    "Engine",
    "EngineConfig",
    "Measurement",
    "TextSpan",
    "extract_measurements",
    "magnitude_of",
    "POLICIES",
    "RULE_BASED",
    "CROWDSOURCED",
    "CONTEXTUAL",
    "Perspective",
    "SuggestionBundle",
    "per_capita",
    "format_multiplier",
    "round_sig",
    "ReferenceCorpus",
    "ReferenceObject",
    "load_corpus",
    "save_corpus",
    "__version__",
]
