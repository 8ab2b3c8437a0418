"""Alignment of extracted phrases back to their source-document sentences.

Matching is two-stage: exact substring search over whitespace/case-normalized
sentences, then a token-sequence fallback that ignores punctuation. Documents
with any unmatched phrase are flagged for exclusion rather than guessed at.
"""

from __future__ import annotations

import csv
import re
import string
from dataclasses import dataclass, field

from .text import tokenize

_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")
_WS_RE = re.compile(r"\s+")


def split_sentences(text: str) -> list[str]:
    """Split on ., ! or ? followed by whitespace; no abbreviation handling."""
    parts = _SENTENCE_SPLIT_RE.split(text.strip())
    return [p for p in parts if p.strip()]


def _normalize(text: str) -> str:
    text = _WS_RE.sub(" ", text.lower()).strip()
    return text.strip(string.punctuation + " ")


def _word_tokens(text: str) -> list[str]:
    return [t for t in tokenize(text) if any(ch.isalnum() for ch in t)]


def _contains_subsequence(haystack: list[str], needle: list[str]) -> bool:
    if not needle or len(needle) > len(haystack):
        return False
    for start in range(len(haystack) - len(needle) + 1):
        if haystack[start : start + len(needle)] == needle:
            return True
    return False


@dataclass
class PhraseOutcome:
    phrase: str
    doc_id: str
    sentence_index: int | None  # None when unmatched

    @property
    def matched(self) -> bool:
        return self.sentence_index is not None


@dataclass
class DocumentAlignment:
    doc_id: str
    sentences: list[str]
    outcomes: list[PhraseOutcome]
    sentence_labels: list[set[str]]

    @property
    def accuracy(self) -> float:
        if not self.outcomes:
            return 1.0
        return sum(o.matched for o in self.outcomes) / len(self.outcomes)

    @property
    def excluded(self) -> bool:
        return any(not o.matched for o in self.outcomes)


@dataclass
class MatchReport:
    outcomes: list[PhraseOutcome] = field(default_factory=list)
    per_document_accuracy: dict[str, float] = field(default_factory=dict)
    excluded_documents: list[str] = field(default_factory=list)

    @property
    def accuracy(self) -> float:
        if not self.outcomes:
            return 1.0
        return sum(o.matched for o in self.outcomes) / len(self.outcomes)

    def add(self, alignment: DocumentAlignment):
        self.outcomes.extend(alignment.outcomes)
        self.per_document_accuracy[alignment.doc_id] = alignment.accuracy
        if alignment.excluded:
            self.excluded_documents.append(alignment.doc_id)


def align_phrases(document_text: str, phrases, doc_id: str = "") -> DocumentAlignment:
    """Locate each (phrase, labels) pair in the document's sentences.

    A match assigns the phrase's labels to the containing sentence; the first
    matching sentence wins. Unmatched phrases are reported, never guessed.
    """
    sentences = split_sentences(document_text)
    norm_sentences = [_normalize(s) for s in sentences]
    word_sequences = [_word_tokens(s) for s in sentences]
    outcomes = []
    sentence_labels = [set() for _ in sentences]
    for phrase_text, labels in phrases:
        norm = _normalize(phrase_text)
        index = None
        if norm:
            for i, sent in enumerate(norm_sentences):
                if norm in sent:
                    index = i
                    break
        if index is None:
            words = _word_tokens(phrase_text)
            for i, seq in enumerate(word_sequences):
                if _contains_subsequence(seq, words):
                    index = i
                    break
        outcomes.append(PhraseOutcome(phrase=phrase_text, doc_id=doc_id, sentence_index=index))
        if index is not None:
            sentence_labels[index].update(labels)
    return DocumentAlignment(doc_id=doc_id, sentences=sentences, outcomes=outcomes,
                             sentence_labels=sentence_labels)


def write_match_report(path, report: MatchReport):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phrase", "doc_id", "sentence_index"])
        for o in report.outcomes:
            writer.writerow([o.phrase, o.doc_id, o.sentence_index if o.matched else "UNMATCHED"])
