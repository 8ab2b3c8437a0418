"""The two-branch model: document summarizer, sentence classifier, the shared
encoding slice between them, and the joint weighted objective.

The summarizer encodes every sentence with a word-level bidirectional GRU plus
attention, runs a sentence-level GRU over the pooled encodings for
cross-sentence context, and scores per-sentence relevance. The classifier
encodes a single sentence the same way and scores K labels; in the multi-task
configuration its head additionally sees the summarizer's context encoding of
that sentence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, clip, concat, gather_rows, log, one_minus, reduce, reshape, take_rows
from .layers import (
    AttentionPool,
    DenseHead,
    EmbeddingLayer,
    GRUCell,
    attention_pool_batch,
    bigru,
    dense_sigmoid,
    embed_lookup,
    gru_sequence,
    gru_step,
)
from .data.corpus import DocumentRecord, TrainingSample

EPS = 1e-7

MODEL_KINDS = ("multitask", "classifier", "summarizer")


@dataclass
class ModelConfig:
    """Dimensions and wiring; vocab_size 0 means "set from the corpus vocab"."""

    vocab_size: int = 0
    n_classes: int = 17
    max_words: int = 30
    max_sentences: int = 64
    pretrained_dim: int = 50
    learned_dim: int = 25
    word_hidden: int = 50
    sent_hidden: int = 50
    attention_dim: int = 100
    classifier_learned_embeddings: bool = False
    sent_bidirectional: bool = False


class SummarizerBranch:
    """Hierarchical encoder: word bigru + attention per sentence, then a
    sentence-level GRU and a 1-output relevance head."""

    def __init__(self, cfg: ModelConfig, pretrained: np.ndarray, rng: np.random.Generator):
        self.cfg = cfg
        self.embedding = EmbeddingLayer(pretrained, cfg.learned_dim, rng)
        in_dim = self.embedding.dim
        self.word_fwd = GRUCell(in_dim, cfg.word_hidden, rng)
        self.word_bwd = GRUCell(in_dim, cfg.word_hidden, rng)
        self.word_attention = AttentionPool(2 * cfg.word_hidden, cfg.attention_dim, rng)
        self.sent_fwd = GRUCell(2 * cfg.word_hidden, cfg.sent_hidden, rng)
        self.sent_bwd = GRUCell(2 * cfg.word_hidden, cfg.sent_hidden, rng) if cfg.sent_bidirectional else None
        self.relevance_head = DenseHead(self.encode_width, 1, rng)

    @property
    def encode_width(self) -> int:
        return self.cfg.sent_hidden * (2 if self.cfg.sent_bidirectional else 1)

    def params(self, prefix: str = "summarizer"):
        out = list(self.embedding.params(f"{prefix}.embedding"))
        out += self.word_fwd.params(f"{prefix}.word_fwd")
        out += self.word_bwd.params(f"{prefix}.word_bwd")
        out += self.word_attention.params(f"{prefix}.word_attention")
        out += self.sent_fwd.params(f"{prefix}.sent_fwd")
        if self.sent_bwd is not None:
            out += self.sent_bwd.params(f"{prefix}.sent_bwd")
        out += self.relevance_head.params(f"{prefix}.relevance_head")
        return out

    def extractor_params(self):
        """Sentence-level GRU tensors (the regularized subset)."""
        out = [t for _, t in self.sent_fwd.params()]
        if self.sent_bwd is not None:
            out += [t for _, t in self.sent_bwd.params()]
        return out


class ClassifierBranch:
    """Single-sentence encoder with a K-label sigmoid head; ``shared_width``
    is the width of the summarizer encoding concatenated in front of the
    pooled sentence encoding (0 for the stand-alone baseline)."""

    def __init__(self, cfg: ModelConfig, pretrained: np.ndarray, rng: np.random.Generator, shared_width: int):
        self.cfg = cfg
        self.shared_width = shared_width
        learned = cfg.learned_dim if cfg.classifier_learned_embeddings else 0
        self.embedding = EmbeddingLayer(pretrained, learned, rng)
        in_dim = self.embedding.dim
        self.word_fwd = GRUCell(in_dim, cfg.word_hidden, rng)
        self.word_bwd = GRUCell(in_dim, cfg.word_hidden, rng)
        self.word_attention = AttentionPool(2 * cfg.word_hidden, cfg.attention_dim, rng)
        self.label_head = DenseHead(shared_width + 2 * cfg.word_hidden, cfg.n_classes, rng)

    def params(self, prefix: str = "classifier"):
        out = list(self.embedding.params(f"{prefix}.embedding"))
        out += self.word_fwd.params(f"{prefix}.word_fwd")
        out += self.word_bwd.params(f"{prefix}.word_bwd")
        out += self.word_attention.params(f"{prefix}.word_attention")
        out += self.label_head.params(f"{prefix}.label_head")
        return out


class MultiTaskModel:
    """Both branches plus shared-layer wiring; ``kind`` selects the ablation:
    "multitask" (both, shared), "classifier" or "summarizer" (one branch)."""

    def __init__(self, cfg: ModelConfig, pretrained: np.ndarray, rng: np.random.Generator,
                 kind: str = "multitask"):
        if kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {kind!r}")
        if pretrained.shape[0] != cfg.vocab_size:
            raise ValueError(f"pretrained table has {pretrained.shape[0]} rows, config says vocab_size={cfg.vocab_size}")
        if pretrained.shape[1] != cfg.pretrained_dim:
            raise ValueError(f"pretrained table width {pretrained.shape[1]} != pretrained_dim {cfg.pretrained_dim}")
        self.cfg = cfg
        self.kind = kind
        self.summarizer = SummarizerBranch(cfg, pretrained, rng) if kind in ("multitask", "summarizer") else None
        if kind in ("multitask", "classifier"):
            shared = self.summarizer.encode_width if kind == "multitask" else 0
            self.classifier = ClassifierBranch(cfg, pretrained, rng, shared_width=shared)
        else:
            self.classifier = None

    def parameters(self):
        out = []
        if self.summarizer is not None:
            out += self.summarizer.params("summarizer")
        if self.classifier is not None:
            out += self.classifier.params("classifier")
        return out

    def extractor_params(self):
        return self.summarizer.extractor_params() if self.summarizer is not None else []

    def param_count(self) -> int:
        return sum(t.size for _, t in self.parameters())

    def zero_grad(self):
        for _, t in self.parameters():
            t.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params = dict(self.parameters())
        if set(state) != set(params):
            missing = sorted(set(params) - set(state))
            extra = sorted(set(state) - set(params))
            raise ValueError(f"state dict mismatch: missing {missing}, unexpected {extra}")
        for name, t in params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ValueError(f"parameter {name}: shape {arr.shape} != expected {t.data.shape}")
            t.data = arr.copy()

    def full_state(self) -> dict[str, np.ndarray]:
        """Trainable parameters plus the frozen pretrained tables (for checkpoints)."""
        out = self.state_dict()
        if self.summarizer is not None:
            out["summarizer.embedding.pretrained"] = np.array(self.summarizer.embedding.pretrained)
        if self.classifier is not None:
            out["classifier.embedding.pretrained"] = np.array(self.classifier.embedding.pretrained)
        return out

    def load_full_state(self, state: dict[str, np.ndarray]):
        state = dict(state)
        for branch in (self.summarizer, self.classifier):
            if branch is None:
                continue
            key = ("summarizer" if branch is self.summarizer else "classifier") + ".embedding.pretrained"
            if key not in state:
                raise ValueError(f"checkpoint state missing {key}")
            pre = np.array(state.pop(key), dtype=np.float64)
            if pre.shape != branch.embedding.pretrained.shape:
                raise ValueError(f"{key}: shape {pre.shape} != expected {branch.embedding.pretrained.shape}")
            pre.setflags(write=False)
            branch.embedding.pretrained = pre
        self.load_state_dict(state)


def _sentence_steps(branch, ids: np.ndarray, mask: np.ndarray):
    """Word-level bigru over a batch of sentences, emitted per position.

    ids/mask are (B x T); returns a list of (B x 2H) tensors, one per position
    up to the longest real length in the batch. Masked steps freeze the state
    and emit exact zeros, so padding contributes nothing (and PAD embedding
    rows receive zero gradient).
    """
    batch, width = ids.shape
    lengths = mask.sum(axis=1)
    if lengths.min() == 0:
        raise ValueError("sentence batch contains a sentence with no real tokens")
    t_real = int(lengths.max())
    flat = ids.reshape(-1)
    embedded = embed_lookup(branch.embedding, flat)  # (B*T x d)
    hidden = branch.word_fwd.hidden_dim
    xs, keep, inv = [], [], []
    for t in range(t_real):
        xs.append(take_rows(embedded, np.arange(batch) * width + t))
        col = mask[:, t].astype(np.float64).reshape(batch, 1)
        keep.append(Tensor(col))
        inv.append(Tensor(1.0 - col))

    def run(cell, reverse):
        h = Tensor(np.zeros((batch, hidden)))
        rows = [None] * t_real
        order = range(t_real - 1, -1, -1) if reverse else range(t_real)
        for t in order:
            h_new = gru_step(cell, xs[t], h)
            rows[t] = h_new * keep[t]
            h = rows[t] + h * inv[t]
        return rows

    fwd = run(branch.word_fwd, reverse=False)
    bwd = run(branch.word_bwd, reverse=True)
    return [concat([f, b], axis=1) for f, b in zip(fwd, bwd)], mask[:, :t_real]


def encode_sentences(branch, ids: np.ndarray, mask: np.ndarray) -> Tensor:
    """Attention-pooled word-bigru encodings for a batch of sentences, (B x 2H)."""
    steps, step_mask = _sentence_steps(branch, ids, mask)
    return attention_pool_batch(branch.word_attention, steps, step_mask)


def summarizer_forward(model: MultiTaskModel, document: DocumentRecord):
    """Per-sentence context encodings H_e (S x W) and relevance probabilities y_d (S,)."""
    branch = model.summarizer
    if branch is None:
        raise ValueError("model has no summarizer branch")
    n_sent = document.n_sentences
    if n_sent < 1:
        raise ValueError("summarizer_forward: empty document")
    if n_sent > model.cfg.max_sentences:
        raise ValueError(f"summarizer_forward: {n_sent} sentences exceeds max_sentences={model.cfg.max_sentences}")
    pooled = encode_sentences(branch, document.sentences, document.word_mask)  # (S x 2H)
    if branch.sent_bwd is None:
        h_e = gru_sequence(branch.sent_fwd, pooled)
    else:
        h_e = bigru(branch.sent_fwd, branch.sent_bwd, pooled)
    y_d = reshape(dense_sigmoid(branch.relevance_head, h_e), (n_sent,))
    return h_e, y_d


def classifier_forward(model: MultiTaskModel, sentence_ids, shared_row) -> Tensor:
    """Label probabilities for one sentence given its shared summarizer encoding.

    The head input follows the share-slice layout: shared encoding first, then
    the pooled sentence encoding.
    """
    branch = model.classifier
    if branch is None:
        raise ValueError("model has no classifier branch")
    ids = np.asarray(sentence_ids, dtype=np.int64).reshape(1, -1)
    mask = ids != 0
    pooled = reshape(encode_sentences(branch, ids, mask), (2 * model.cfg.word_hidden,))
    shared_row = shared_row if isinstance(shared_row, Tensor) else Tensor(shared_row)
    if shared_row.ndim != 1 or shared_row.shape[0] != branch.shared_width:
        raise ValueError(f"classifier_forward: shared row width {shared_row.shape} != expected ({branch.shared_width},)")
    if branch.shared_width:
        head_in = concat([shared_row, pooled], axis=0)
    else:
        head_in = pooled
    return dense_sigmoid(branch.label_head, head_in)


def baseline_classifier_forward(model: MultiTaskModel, sentence_ids) -> Tensor:
    """Stand-alone classifier: pooled sentence encoding only, no shared row."""
    branch = model.classifier
    if branch is None:
        raise ValueError("model has no classifier branch")
    if branch.shared_width != 0:
        raise ValueError("baseline_classifier_forward: model was built with a shared layer")
    return classifier_forward(model, sentence_ids, Tensor(np.zeros(0)))


def baseline_summarizer_forward(model: MultiTaskModel, document: DocumentRecord) -> Tensor:
    """Summarizer branch alone; architecture identical to the multi-task branch."""
    _, y_d = summarizer_forward(model, document)
    return y_d


def multitask_forward(model: MultiTaskModel, sample: TrainingSample):
    """Compose summarizer, share-slice at the sample's sentence, and classifier."""
    if model.kind != "multitask":
        raise ValueError(f"multitask_forward: model kind is {model.kind!r}")
    doc = sample.doc
    if not 0 <= sample.sentence_index < doc.n_sentences:
        raise IndexError(f"sentence index {sample.sentence_index} out of range for document with {doc.n_sentences} sentences")
    h_e, y_d = summarizer_forward(model, doc)
    shared = gather_rows(h_e, sample.sentence_index)
    y_s = classifier_forward(model, doc.sentences[sample.sentence_index], shared)
    return y_s, y_d, h_e


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------


@dataclass
class LossConfig:
    """Per-class and relevance weights plus the elastic-net coefficients."""

    class_weights: np.ndarray
    relevance_weights: np.ndarray = field(default_factory=lambda: np.ones(2))
    l1: float = 1e-5
    l2: float = 1e-5

    def __post_init__(self):
        self.class_weights = np.asarray(self.class_weights, dtype=np.float64)
        self.relevance_weights = np.asarray(self.relevance_weights, dtype=np.float64)
        if np.any(self.class_weights <= 0) or np.any(self.relevance_weights <= 0):
            raise ValueError("loss weights must all be positive")
        if self.relevance_weights.shape != (2,):
            raise ValueError("relevance_weights must be [irrelevant, relevant]")


def weighted_bce(probs, golds, weights) -> Tensor:
    """Sum over outputs of w_c * BCE(gold_c, prob_c), probabilities clamped to [eps, 1-eps].

    For 2-D inputs (B x K) the result is the mean over the batch of per-sample sums.
    """
    probs = probs if isinstance(probs, Tensor) else Tensor(probs)
    gold = np.asarray(golds, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if gold.shape != probs.shape:
        raise ValueError(f"weighted_bce: gold shape {gold.shape} != prediction shape {probs.shape}")
    if w.shape != (probs.shape[-1],):
        raise ValueError(f"weighted_bce: weights shape {w.shape} != ({probs.shape[-1]},)")
    p = clip(probs, EPS, 1.0 - EPS)
    terms = Tensor(w) * (Tensor(gold) * -log(p) + Tensor(1.0 - gold) * -log(one_minus(p)))
    if probs.ndim == 1:
        return reduce("sum", terms)
    return reduce("sum", terms) * (1.0 / probs.shape[0])


def relevance_bce(y_d, gold_relevance, weights, sentence_mask=None) -> Tensor:
    """Weighted BCE over per-sentence relevance, averaged over real sentences."""
    y_d = y_d if isinstance(y_d, Tensor) else Tensor(y_d)
    gold = np.asarray(gold_relevance, dtype=np.float64).reshape(-1)
    if gold.shape != y_d.shape:
        raise ValueError(f"relevance_bce: gold shape {gold.shape} != prediction shape {y_d.shape}")
    w = np.asarray(weights, dtype=np.float64)
    per_sentence = w[1] * gold + w[0] * (1.0 - gold)
    if sentence_mask is not None:
        m = np.asarray(sentence_mask, dtype=np.float64).reshape(-1)
        if m.shape != gold.shape:
            raise ValueError("relevance_bce: sentence mask length mismatch")
        per_sentence = per_sentence * m
        n_real = m.sum()
    else:
        n_real = float(gold.size)
    if n_real < 1:
        raise ValueError("relevance_bce: no real sentences")
    p = clip(y_d, EPS, 1.0 - EPS)
    terms = Tensor(per_sentence) * (Tensor(gold) * -log(p) + Tensor(1.0 - gold) * -log(one_minus(p)))
    return reduce("sum", terms) * (1.0 / n_real)


def joint_loss(y_s, gold_labels, y_d, gold_relevance, params, cfg: LossConfig,
               sentence_mask=None) -> Tensor:
    """Weighted classification BCE + weighted relevance BCE + l1-l2 penalty on ``params``."""
    from .training import l1l2_penalty

    total = weighted_bce(y_s, gold_labels, cfg.class_weights)
    total = total + relevance_bce(y_d, gold_relevance, cfg.relevance_weights, sentence_mask)
    return total + l1l2_penalty(params, cfg.l1, cfg.l2)
