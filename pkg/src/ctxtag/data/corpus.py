"""Corpus records, file formats, broadcasting, splitting, and class weights.

Two on-disk forms:
  * raw corpus: JSON lines, one document per line,
    ``{"doc_id": ..., "sentences": [{"text": ..., "labels": [names]}]}``
  * prepared corpus: a single JSON document with the class list, the vocab in
    id order, and per-document tokenized sentences with label indices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError
from .text import MAX_WORDS, Vocab, encode_pad, tokenize

# Table of the 17 Sustainable Development Goal classes with hand-coded
# sentence counts from the source corpus (used for the paper-schema weights).
SDG_CLASSES = (
    "No Poverty",
    "Zero Hunger",
    "Good Health",
    "Education",
    "Gender Equality",
    "Clean Water",
    "Clean Energy",
    "Economic Growth",
    "Infrastructure",
    "Reduced Inequality",
    "Sustainable Cities",
    "Responsible Production",
    "Climate Action",
    "Aquatic Life",
    "Land Life",
    "Peace and Justice",
    "Partnerships",
)

SDG_CLASS_COUNTS = (15, 850, 1042, 322, 367, 841, 2258, 241, 579, 65, 591, 625, 1106, 283, 1056, 121, 406)

PREPARED_FORMAT = "ctxtag-corpus-v1"

DEFAULT_MAX_SENTENCES = 64


@dataclass
class RawDocument:
    """A tokenized document before vocabulary encoding; labels are class names."""

    doc_id: str
    sentences: list[list[str]]
    label_names: list[set[str]]


@dataclass
class DocumentRecord:
    """Encoded document: fixed-width token ids, word masks, per-sentence labels."""

    doc_id: str
    sentences: np.ndarray  # (S x max_words) int64 token ids
    word_mask: np.ndarray  # (S x max_words) bool, True at real tokens
    labels: list[frozenset[int]]  # per sentence, class indices

    @property
    def n_sentences(self) -> int:
        return self.sentences.shape[0]

    @property
    def relevance(self) -> np.ndarray:
        """A sentence is relevant iff it carries at least one class label."""
        return np.array([len(l) > 0 for l in self.labels], dtype=bool)

    def label_matrix(self, n_classes: int) -> np.ndarray:
        out = np.zeros((self.n_sentences, n_classes), dtype=np.float64)
        for i, labels in enumerate(self.labels):
            for c in labels:
                out[i, c] = 1.0
        return out


@dataclass
class TrainingSample:
    """One labelled sentence paired with its source document (the broadcast unit)."""

    doc: DocumentRecord
    sentence_index: int
    label_vector: np.ndarray  # (K,) bool


@dataclass
class Corpus:
    classes: list[str]
    vocab: Vocab
    documents: list[DocumentRecord]

    @property
    def n_classes(self) -> int:
        return len(self.classes)


@dataclass
class SplitCorpus:
    train: list[DocumentRecord]
    val: list[DocumentRecord]
    test: list[DocumentRecord]


def resolve_classes(raw_docs) -> list[str]:
    """Class list for a raw corpus: the fixed 17-goal schema when the labels
    are a subset of it, otherwise the sorted set of names encountered."""
    seen = set()
    for doc in raw_docs:
        for names in doc.label_names:
            seen.update(names)
    if seen and seen.issubset(set(SDG_CLASSES)):
        return list(SDG_CLASSES)
    return sorted(seen)


def encode_documents(raw_docs, vocab: Vocab, classes, max_words: int = MAX_WORDS,
                     max_sentences: int = DEFAULT_MAX_SENTENCES) -> list[DocumentRecord]:
    class_index = {name: i for i, name in enumerate(classes)}
    records = []
    for doc in raw_docs:
        rows, masks, labels = [], [], []
        for tokens, names in zip(doc.sentences, doc.label_names):
            if not tokens:
                continue
            ids, mask = encode_pad(vocab, tokens, max_words)
            rows.append(ids)
            masks.append(mask)
            unknown = names - class_index.keys()
            if unknown:
                raise DataError(f"document {doc.doc_id}: unknown class name(s) {sorted(unknown)}")
            labels.append(frozenset(class_index[n] for n in names))
        if not rows:
            raise DataError(f"document {doc.doc_id}: no non-empty sentences")
        rows, masks, labels = rows[:max_sentences], masks[:max_sentences], labels[:max_sentences]
        records.append(DocumentRecord(
            doc_id=str(doc.doc_id),
            sentences=np.stack(rows),
            word_mask=np.stack(masks),
            labels=labels,
        ))
    return records


def build_corpus(raw_docs, max_vocab: int = 10000, max_words: int = MAX_WORDS,
                 max_sentences: int = DEFAULT_MAX_SENTENCES) -> Corpus:
    raw_docs = list(raw_docs)
    classes = resolve_classes(raw_docs)
    vocab = Vocab.build((s for d in raw_docs for s in d.sentences), max_size=max_vocab)
    documents = encode_documents(raw_docs, vocab, classes, max_words, max_sentences)
    return Corpus(classes=classes, vocab=vocab, documents=documents)


def broadcast_samples(document: DocumentRecord, n_classes: int) -> list[TrainingSample]:
    """One sample per relevant sentence, each carrying the whole document."""
    samples = []
    for i, labels in enumerate(document.labels):
        if not labels:
            continue
        vec = np.zeros(n_classes, dtype=bool)
        for c in labels:
            vec[c] = True
        samples.append(TrainingSample(doc=document, sentence_index=i, label_vector=vec))
    return samples


def split_corpus(documents, ratio: float = 0.8, val_fraction: float = 0.1, seed: int = 0) -> SplitCorpus:
    """Document-level split: floor(1-ratio) test, then a validation slice
    carved from the training documents. Deterministic given the seed."""
    documents = list(documents)
    if len(documents) < 3:
        raise DataError(f"split_corpus: need at least 3 documents, got {len(documents)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(documents))
    n_test = int(len(documents) * (1.0 - ratio))
    test_idx = order[:n_test]
    train_idx = order[n_test:]
    n_val = int(len(train_idx) * val_fraction)
    val_idx = train_idx[:n_val]
    train_idx = train_idx[n_val:]
    pick = lambda idx: [documents[i] for i in sorted(idx)]
    return SplitCorpus(train=pick(train_idx), val=pick(val_idx), test=pick(test_idx))


def class_weights(counts) -> np.ndarray:
    """Inverse-frequency weights w_c = total / (K * count_c); mean weight is ~1."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 1 or counts.size == 0:
        raise ValueError("class_weights: counts must be a non-empty 1-D sequence")
    if np.any(counts <= 0):
        raise ValueError("class_weights: zero or negative count (drop or smooth empty classes first)")
    return counts.sum() / (counts.size * counts)


# ---------------------------------------------------------------------------
# file IO
# ---------------------------------------------------------------------------


def read_raw_corpus(path) -> list[RawDocument]:
    docs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {lineno}: invalid JSON ({exc})")
            if "doc_id" not in obj or "sentences" not in obj:
                raise DataError(f"{path}: line {lineno}: expected doc_id and sentences keys")
            sentences, labels = [], []
            for sent in obj["sentences"]:
                sentences.append(tokenize(sent["text"]))
                labels.append(set(sent.get("labels", [])))
            docs.append(RawDocument(doc_id=str(obj["doc_id"]), sentences=sentences, label_names=labels))
    if not docs:
        raise DataError(f"{path}: empty corpus")
    return docs


def write_raw_corpus(path, raw_docs, texts=None):
    """Write raw-corpus JSONL; sentence text is the space-joined token list
    unless original texts are supplied."""
    with open(path, "w", encoding="utf-8") as fh:
        for d, doc in enumerate(raw_docs):
            sentences = []
            for s, (tokens, names) in enumerate(zip(doc.sentences, doc.label_names)):
                text = texts[d][s] if texts is not None else " ".join(tokens)
                sentences.append({"text": text, "labels": sorted(names)})
            fh.write(json.dumps({"doc_id": doc.doc_id, "sentences": sentences}, sort_keys=True))
            fh.write("\n")


def corpus_to_dict(corpus: Corpus) -> dict:
    return {
        "format": PREPARED_FORMAT,
        "classes": list(corpus.classes),
        "vocab": list(corpus.vocab.tokens),
        "documents": [
            {
                "doc_id": doc.doc_id,
                "sentences": [
                    {
                        "ids": doc.sentences[i].tolist(),
                        "length": int(doc.word_mask[i].sum()),
                        "labels": sorted(doc.labels[i]),
                    }
                    for i in range(doc.n_sentences)
                ],
            }
            for doc in corpus.documents
        ],
    }


def corpus_from_dict(obj: dict, source: str = "corpus") -> Corpus:
    if obj.get("format") != PREPARED_FORMAT:
        raise DataError(f"{source}: not a prepared corpus (format {obj.get('format')!r})")
    vocab = Vocab.from_tokens(obj["vocab"])
    classes = list(obj["classes"])
    documents = []
    for d in obj["documents"]:
        ids = np.array([s["ids"] for s in d["sentences"]], dtype=np.int64)
        mask = np.zeros_like(ids, dtype=bool)
        for i, s in enumerate(d["sentences"]):
            mask[i, : s["length"]] = True
        labels = [frozenset(s["labels"]) for s in d["sentences"]]
        documents.append(DocumentRecord(doc_id=str(d["doc_id"]), sentences=ids, word_mask=mask, labels=labels))
    return Corpus(classes=classes, vocab=vocab, documents=documents)


def save_prepared_corpus(path, corpus: Corpus):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(corpus_to_dict(corpus), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_prepared_corpus(path) -> Corpus:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})")
    return corpus_from_dict(obj, source=str(path))
