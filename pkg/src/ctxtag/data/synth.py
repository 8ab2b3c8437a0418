"""Synthetic corpus generator for desk-scale verification.

Each document draws a topic class; its non-relevant sentences carry topic
marker tokens while relevant sentences are built from an ambiguous shared
content pool. ``context_strength`` sets the fraction of relevant sentences
whose label is the document topic and recoverable only from surrounding
sentences; the remainder draw an independent label and expose it with an
in-sentence label token, so at strength 0 every label is surface-recoverable.
"""

from __future__ import annotations

import numpy as np

from .corpus import RawDocument

N_FILLERS = 20
N_CONTENT = 30


def class_name(c: int) -> str:
    return f"class_{c:02d}"


def synth_corpus(seed: int, n_docs: int, sents_per_doc: int, n_classes: int,
                 relevance_rate: float, context_strength: float,
                 multi_label_rate: float = 0.15, class_priors=None) -> list[RawDocument]:
    """Deterministic synthetic corpus; labels are ``class_00`` .. ``class_K-1``."""
    if min(n_docs, sents_per_doc, n_classes) <= 0:
        raise ValueError("synth_corpus: n_docs, sents_per_doc and n_classes must be positive")
    if not 0.0 <= context_strength <= 1.0:
        raise ValueError("synth_corpus: context_strength must lie in [0, 1]")
    if class_priors is None:
        priors = np.full(n_classes, 1.0 / n_classes)
    else:
        priors = np.asarray(class_priors, dtype=np.float64)
        if priors.shape != (n_classes,) or np.any(priors < 0):
            raise ValueError("synth_corpus: class_priors must be K nonnegative floats")
        priors = priors / priors.sum()
    rng = np.random.default_rng(seed)
    fillers = [f"filler{i:02d}" for i in range(N_FILLERS)]
    content = [f"term{i:02d}" for i in range(N_CONTENT)]
    markers = [(f"topic{c:02d}a", f"topic{c:02d}b") for c in range(n_classes)]

    docs = []
    for d in range(n_docs):
        topic = int(rng.choice(n_classes, p=priors))
        sentences, label_names = [], []
        for _ in range(sents_per_doc):
            if rng.random() < relevance_rate:
                from_context = rng.random() < context_strength
                label = topic if from_context else int(rng.choice(n_classes, p=priors))
                labels = {label}
                if rng.random() < multi_label_rate:
                    labels.add((label + 1) % n_classes)
                tokens = [content[i] for i in rng.integers(0, N_CONTENT, size=rng.integers(3, 7))]
                if not from_context:
                    for c in sorted(labels):
                        tokens.insert(int(rng.integers(0, len(tokens) + 1)), f"label{c:02d}")
                sentences.append(tokens)
                label_names.append({class_name(c) for c in labels})
            else:
                tokens = [fillers[i] for i in rng.integers(0, N_FILLERS, size=rng.integers(2, 5))]
                n_markers = int(rng.integers(1, 3))
                for _ in range(n_markers):
                    marker = markers[topic][int(rng.integers(0, 2))]
                    tokens.insert(int(rng.integers(0, len(tokens) + 1)), marker)
                sentences.append(tokens)
                label_names.append(set())
        docs.append(RawDocument(doc_id=f"doc{d:04d}", sentences=sentences, label_names=label_names))
    return docs
