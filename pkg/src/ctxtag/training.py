"""Training loop (Adam, inverse-frequency weighting, elastic-net penalty,
best-validation checkpointing) and prediction collection for evaluation.

Each optimization step takes one batch of broadcast samples. Documents
appearing several times in a batch are encoded once and their forward graph
is shared by all of their samples, which is equivalent to (and faster than)
averaging fully independent per-sample losses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, abs_, backward, concat, gather_rows, no_grad, reduce, reshape
from .data.corpus import SplitCorpus, broadcast_samples, class_weights
from .errors import NumericError
from .layers import dense_sigmoid
from .model import (
    LossConfig,
    MultiTaskModel,
    encode_sentences,
    relevance_bce,
    summarizer_forward,
    weighted_bce,
)


@dataclass
class TrainConfig:
    learning_rate: float = 2.5e-5
    l1: float = 1e-5
    l2: float = 1e-5
    epochs: int = 50
    batch_size: int = 16
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.beta1 < 1.0 or not 0.0 < self.beta2 < 1.0:
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.learning_rate < 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("learning_rate, batch_size and epochs must be nonnegative/positive")


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params) -> "AdamState":
        return cls(m=[np.zeros_like(p.data) for p in params],
                   v=[np.zeros_like(p.data) for p in params])


def adam_step(params, grads, state: AdamState, cfg: TrainConfig):
    """Bias-corrected Adam update, in place. ``grads`` may contain None (treated as zero)."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("adam_step: params, grads and state must have matching lengths")
    state.t += 1
    c1 = 1.0 - cfg.beta1 ** state.t
    c2 = 1.0 - cfg.beta2 ** state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p.data)
        if g.shape != p.data.shape:
            raise ValueError(f"adam_step: gradient shape {g.shape} != parameter shape {p.data.shape}")
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * (g * g)
        p.data = p.data - cfg.learning_rate * (state.m[i] / c1) / (np.sqrt(state.v[i] / c2) + cfg.adam_eps)
    return params, state


def l1l2_penalty(params, l1: float, l2: float) -> Tensor:
    """l1 * sum|w| + l2 * sum(w^2) as a graph scalar; subgradient 0 at w = 0."""
    if l1 < 0 or l2 < 0:
        raise ValueError("l1 and l2 coefficients must be nonnegative")
    total = Tensor(0.0)
    for p in params:
        total = total + l1 * reduce("sum", abs_(p)) + l2 * reduce("sum", p * p)
    return total


def default_loss_config(train_docs, n_classes: int, l1: float = 1e-5, l2: float = 1e-5) -> LossConfig:
    """Inverse-frequency weights from the training split; empty classes are
    smoothed to count 1 so the weight stays finite."""
    counts = np.zeros(n_classes)
    n_rel = 0
    n_irr = 0
    for doc in train_docs:
        for labels in doc.labels:
            if labels:
                n_rel += 1
                for c in labels:
                    counts[c] += 1
            else:
                n_irr += 1
    counts = np.maximum(counts, 1.0)
    rel_counts = np.maximum(np.array([n_irr, n_rel], dtype=np.float64), 1.0)
    return LossConfig(class_weights=class_weights(counts),
                      relevance_weights=class_weights(rel_counts), l1=l1, l2=l2)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass
class Checkpoint:
    """In-memory best-parameters snapshot chosen on validation loss."""

    params: dict[str, np.ndarray]
    epoch: int
    val_loss: float


def _batch_loss(model: MultiTaskModel, batch, loss_cfg: LossConfig) -> Tensor:
    """Mean joint loss over one batch of broadcast samples plus the penalty."""
    n = len(batch)
    total = None
    doc_forward = {}
    if model.summarizer is not None:
        doc_counts = {}
        for s in batch:
            key = id(s.doc)
            if key not in doc_forward:
                doc_forward[key] = summarizer_forward(model, s.doc)
                doc_counts[key] = 0
            doc_counts[key] += 1
        rel_total = None
        for s in batch:
            key = id(s.doc)
            if doc_counts[key] == 0:
                continue
            _, y_d = doc_forward[key]
            term = relevance_bce(y_d, s.doc.relevance, loss_cfg.relevance_weights)
            if doc_counts[key] > 1:
                term = term * float(doc_counts[key])
            rel_total = term if rel_total is None else rel_total + term
            doc_counts[key] = 0
        total = rel_total * (1.0 / n)
    if model.classifier is not None:
        ids = np.stack([s.doc.sentences[s.sentence_index] for s in batch])
        mask = np.stack([s.doc.word_mask[s.sentence_index] for s in batch])
        pooled = encode_sentences(model.classifier, ids, mask)
        if model.kind == "multitask":
            width = model.summarizer.encode_width
            shared = concat(
                [reshape(gather_rows(doc_forward[id(s.doc)][0], s.sentence_index), (1, width)) for s in batch],
                axis=0,
            )
            head_in = concat([shared, pooled], axis=1)
        else:
            head_in = pooled
        probs = dense_sigmoid(model.classifier.label_head, head_in)
        gold = np.stack([s.label_vector for s in batch]).astype(np.float64)
        cls = weighted_bce(probs, gold, loss_cfg.class_weights)
        total = cls if total is None else total + cls
    return total + l1l2_penalty(model.extractor_params(), loss_cfg.l1, loss_cfg.l2)


def dataset_loss(model: MultiTaskModel, docs, loss_cfg: LossConfig) -> float:
    """Task loss (no penalty) averaged over broadcast samples; nan when no samples."""
    n_classes = model.cfg.n_classes
    total = 0.0
    n = 0
    with no_grad():
        for doc in docs:
            samples = broadcast_samples(doc, n_classes)
            if not samples:
                continue
            rel = 0.0
            h_e = None
            if model.summarizer is not None:
                h_e, y_d = summarizer_forward(model, doc)
                rel = float(relevance_bce(y_d, doc.relevance, loss_cfg.relevance_weights).data)
            if model.classifier is not None:
                ids = np.stack([s.doc.sentences[s.sentence_index] for s in samples])
                mask = np.stack([s.doc.word_mask[s.sentence_index] for s in samples])
                pooled = encode_sentences(model.classifier, ids, mask)
                if model.kind == "multitask":
                    width = model.summarizer.encode_width
                    shared = concat(
                        [reshape(gather_rows(h_e, s.sentence_index), (1, width)) for s in samples],
                        axis=0,
                    )
                    head_in = concat([shared, pooled], axis=1)
                else:
                    head_in = pooled
                probs = dense_sigmoid(model.classifier.label_head, head_in)
                gold = np.stack([s.label_vector for s in samples]).astype(np.float64)
                # weighted_bce on a batch is the per-sample mean, so scale back up
                total += float(weighted_bce(probs, gold, loss_cfg.class_weights).data) * len(samples)
            total += rel * len(samples)
            n += len(samples)
    return total / n if n else float("nan")


def eval_task_losses(model: MultiTaskModel, docs, loss_cfg: LossConfig):
    """(classification loss, relevance loss) on a document set, penalty excluded.

    Classification is averaged over broadcast samples, relevance over
    documents; absent branches give nan.
    """
    n_classes = model.cfg.n_classes
    cls_total, cls_n = 0.0, 0
    rel_total, rel_n = 0.0, 0
    with no_grad():
        for doc in docs:
            h_e = None
            if model.summarizer is not None:
                h_e, y_d = summarizer_forward(model, doc)
                rel_total += float(relevance_bce(y_d, doc.relevance, loss_cfg.relevance_weights).data)
                rel_n += 1
            if model.classifier is None:
                continue
            samples = broadcast_samples(doc, n_classes)
            if not samples:
                continue
            ids = np.stack([s.doc.sentences[s.sentence_index] for s in samples])
            mask = np.stack([s.doc.word_mask[s.sentence_index] for s in samples])
            pooled = encode_sentences(model.classifier, ids, mask)
            if model.kind == "multitask":
                width = model.summarizer.encode_width
                shared = concat(
                    [reshape(gather_rows(h_e, s.sentence_index), (1, width)) for s in samples],
                    axis=0,
                )
                head_in = concat([shared, pooled], axis=1)
            else:
                head_in = pooled
            probs = dense_sigmoid(model.classifier.label_head, head_in)
            gold = np.stack([s.label_vector for s in samples]).astype(np.float64)
            cls_total += float(weighted_bce(probs, gold, loss_cfg.class_weights).data) * len(samples)
            cls_n += len(samples)
    cls_loss = cls_total / cls_n if cls_n else float("nan")
    rel_loss = rel_total / rel_n if rel_n else float("nan")
    return cls_loss, rel_loss


def train(model: MultiTaskModel, splits: SplitCorpus, cfg: TrainConfig,
          loss_cfg: LossConfig | None = None):
    """Train on the broadcast samples of the train split.

    Returns (history, best): per-epoch train/validation losses and the
    checkpoint with the lowest validation loss. With an empty validation
    split the checkpoint tracks the latest epoch instead. Deterministic
    given the config seed.
    """
    if loss_cfg is None:
        loss_cfg = default_loss_config(splits.train, model.cfg.n_classes, cfg.l1, cfg.l2)
    rng = np.random.default_rng(cfg.seed)
    samples = [s for doc in splits.train for s in broadcast_samples(doc, model.cfg.n_classes)]
    params = [t for _, t in model.parameters()]
    state = AdamState.for_params(params)
    history: list[EpochStats] = []
    best = Checkpoint(params=model.state_dict(), epoch=0, val_loss=math.inf)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(samples))
        step_losses = []
        for step_start in range(0, len(order), cfg.batch_size):
            batch = [samples[i] for i in order[step_start : step_start + cfg.batch_size]]
            model.zero_grad()
            loss = _batch_loss(model, batch, loss_cfg)
            value = float(loss.data)
            if not math.isfinite(value):
                raise NumericError(
                    f"non-finite training loss at epoch {epoch}, step {step_start // cfg.batch_size}"
                )
            backward(loss)
            adam_step(params, [p.grad for p in params], state, cfg)
            step_losses.append(value)
        train_loss = float(np.mean(step_losses)) if step_losses else float("nan")
        val_loss = dataset_loss(model, splits.val, loss_cfg)
        history.append(EpochStats(epoch=epoch, train_loss=train_loss, val_loss=val_loss))
        if math.isnan(val_loss):
            # no validation data: keep the latest epoch as the checkpoint
            best = Checkpoint(params=model.state_dict(), epoch=epoch, val_loss=math.inf)
        elif val_loss < best.val_loss:
            best = Checkpoint(params=model.state_dict(), epoch=epoch, val_loss=val_loss)
    return history, best


# ---------------------------------------------------------------------------
# prediction collection for evaluation
# ---------------------------------------------------------------------------


@dataclass
class Predictions:
    """Raw model outputs over a document set, ready for metric computation."""

    label_probs: np.ndarray  # (N x K), one row per relevant sentence
    label_golds: list[frozenset[int]]
    relevance_probs: np.ndarray  # (M,), one per sentence
    relevance_golds: np.ndarray  # (M,) bool


def collect_predictions(model: MultiTaskModel, docs, batch_size: int = 64) -> Predictions:
    """Forward the model over whole documents without building graphs."""
    n_classes = model.cfg.n_classes
    label_rows, label_golds = [], []
    rel_probs, rel_golds = [], []
    with no_grad():
        for doc in docs:
            h_e = None
            if model.summarizer is not None:
                h_e, y_d = summarizer_forward(model, doc)
                rel_probs.extend(y_d.data.tolist())
                rel_golds.extend(doc.relevance.tolist())
            if model.classifier is None:
                continue
            samples = broadcast_samples(doc, n_classes)
            for start in range(0, len(samples), batch_size):
                chunk = samples[start : start + batch_size]
                ids = np.stack([s.doc.sentences[s.sentence_index] for s in chunk])
                mask = np.stack([s.doc.word_mask[s.sentence_index] for s in chunk])
                pooled = encode_sentences(model.classifier, ids, mask)
                if model.kind == "multitask":
                    width = model.summarizer.encode_width
                    shared = concat(
                        [reshape(gather_rows(h_e, s.sentence_index), (1, width)) for s in chunk],
                        axis=0,
                    )
                    head_in = concat([shared, pooled], axis=1)
                else:
                    head_in = pooled
                probs = dense_sigmoid(model.classifier.label_head, head_in)
                label_rows.append(probs.data)
                label_golds.extend(doc.labels[s.sentence_index] for s in chunk)
    label_probs = np.concatenate(label_rows, axis=0) if label_rows else np.zeros((0, n_classes))
    return Predictions(
        label_probs=label_probs,
        label_golds=label_golds,
        relevance_probs=np.asarray(rel_probs, dtype=np.float64),
        relevance_golds=np.asarray(rel_golds, dtype=bool),
    )
