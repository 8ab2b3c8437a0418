"""Neural building blocks: embeddings, GRU cells and sequence encoders,
attention pooling, sigmoid heads, and the encoding share-slice.

All layers are plain parameter containers; forward passes are module-level
functions building autodiff graphs. Weights are Glorot-uniform, biases zero.
"""

from __future__ import annotations

import math

import numpy as np

from .autodiff import (
    Tensor,
    concat,
    gather_rows,
    matmul,
    reduce,
    reshape,
    sigmoid,
    softmax,
    take_rows,
    tanh,
    transpose,
)

PAD_ID = 0
UNK_ID = 1


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return rng.uniform(-bound, bound, size=shape)


class EmbeddingLayer:
    """Frozen pretrained table concatenated row-wise with a trainable learned table.

    The pretrained table never receives gradient (it is not a graph tensor and
    its buffer is read-only). Row ``pad_id`` of both tables is zero and, since
    padded positions are masked out of every downstream computation, receives
    exactly zero gradient, so it stays zero through training.
    """

    def __init__(self, pretrained: np.ndarray, learned_dim: int, rng: np.random.Generator, pad_id: int = PAD_ID):
        pre = np.array(pretrained, dtype=np.float64)
        if pre.ndim != 2:
            raise ValueError(f"embedding: pretrained table must be 2-D, got shape {pre.shape}")
        pre[pad_id] = 0.0
        pre.setflags(write=False)
        self.pretrained = pre
        self.pad_id = pad_id
        vocab_size = pre.shape[0]
        if learned_dim > 0:
            table = glorot_uniform(rng, vocab_size, learned_dim)
            table[pad_id] = 0.0
            self.learned = Tensor(table, requires_grad=True)
        else:
            self.learned = None

    @property
    def vocab_size(self) -> int:
        return self.pretrained.shape[0]

    @property
    def dim(self) -> int:
        learned = self.learned.shape[1] if self.learned is not None else 0
        return self.pretrained.shape[1] + learned

    def params(self, prefix: str = "embedding"):
        if self.learned is None:
            return []
        return [(f"{prefix}.learned", self.learned)]


def embed_lookup(layer: EmbeddingLayer, token_ids) -> Tensor:
    """Rows of the concatenated embedding table; gradient reaches only the learned part."""
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim != 1:
        ids = ids.reshape(-1)
    if ids.size and (ids.min() < 0 or ids.max() >= layer.vocab_size):
        raise IndexError(f"embed_lookup: token id out of range [0, {layer.vocab_size})")
    pre = Tensor(layer.pretrained[ids])
    if layer.learned is None:
        return pre
    return concat([pre, take_rows(layer.learned, ids)], axis=1)


class GRUCell:
    """Gated recurrent cell with convention h_t = (1 - z) * h_prev + z * h_tilde."""

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim

        def w(fi, fo):
            return Tensor(glorot_uniform(rng, fi, fo), requires_grad=True)

        def b():
            return Tensor(np.zeros(hidden_dim), requires_grad=True)

        self.W_z, self.U_z, self.b_z = w(input_dim, hidden_dim), w(hidden_dim, hidden_dim), b()
        self.W_r, self.U_r, self.b_r = w(input_dim, hidden_dim), w(hidden_dim, hidden_dim), b()
        self.W_h, self.U_h, self.b_h = w(input_dim, hidden_dim), w(hidden_dim, hidden_dim), b()

    def params(self, prefix: str = "gru"):
        return [
            (f"{prefix}.W_z", self.W_z),
            (f"{prefix}.U_z", self.U_z),
            (f"{prefix}.b_z", self.b_z),
            (f"{prefix}.W_r", self.W_r),
            (f"{prefix}.U_r", self.U_r),
            (f"{prefix}.b_r", self.b_r),
            (f"{prefix}.W_h", self.W_h),
            (f"{prefix}.U_h", self.U_h),
            (f"{prefix}.b_h", self.b_h),
        ]


def gru_step(cell: GRUCell, x_t, h_prev) -> Tensor:
    """One recurrence step. Accepts 1-D vectors or 2-D (batch x dim) inputs."""
    x = x_t if isinstance(x_t, Tensor) else Tensor(x_t)
    h = h_prev if isinstance(h_prev, Tensor) else Tensor(h_prev)
    one_d = x.ndim == 1
    if one_d:
        x = reshape(x, (1, x.shape[0]))
        h = reshape(h, (1, h.shape[0]))
    if x.shape[1] != cell.input_dim:
        raise ValueError(f"gru_step: input width {x.shape[1]} != cell input_dim {cell.input_dim}")
    if h.shape[1] != cell.hidden_dim or h.shape[0] != x.shape[0]:
        raise ValueError(f"gru_step: state shape {h.shape} inconsistent with input {x.shape} and hidden_dim {cell.hidden_dim}")
    z = sigmoid(matmul(x, cell.W_z) + matmul(h, cell.U_z) + cell.b_z)
    r = sigmoid(matmul(x, cell.W_r) + matmul(h, cell.U_r) + cell.b_r)
    h_cand = tanh(matmul(x, cell.W_h) + matmul(r * h, cell.U_h) + cell.b_h)
    h_new = (1.0 - z) * h + z * h_cand
    if one_d:
        return reshape(h_new, (cell.hidden_dim,))
    return h_new


def gru_sequence(cell: GRUCell, inputs, mask=None, reverse: bool = False) -> Tensor:
    """Run the cell over a (T x d) sequence from h_0 = 0, emitting one row per position.

    Masked positions freeze the recurrent state and emit a zero row, so padding
    never alters the encoding of real tokens.
    """
    inputs = inputs if isinstance(inputs, Tensor) else Tensor(inputs)
    if inputs.ndim != 2:
        raise ValueError(f"gru_sequence: expected (T x d) inputs, got shape {inputs.shape}")
    steps = inputs.shape[0]
    if mask is None:
        mask = [True] * steps
    else:
        mask = [bool(m) for m in np.asarray(mask).reshape(-1)]
        if len(mask) != steps:
            raise ValueError(f"gru_sequence: mask length {len(mask)} != sequence length {steps}")
    h = Tensor(np.zeros((1, cell.hidden_dim)))
    zero_row = Tensor(np.zeros((1, cell.hidden_dim)))
    rows = [zero_row] * steps
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        if mask[t]:
            x = reshape(gather_rows(inputs, t), (1, inputs.shape[1]))
            h = gru_step(cell, x, h)
            rows[t] = h
    return concat(rows, axis=0)


def bigru(fwd_cell: GRUCell, bwd_cell: GRUCell, inputs, mask=None) -> Tensor:
    """Forward and reverse passes concatenated per position, width 2H."""
    if fwd_cell.input_dim != bwd_cell.input_dim or fwd_cell.hidden_dim != bwd_cell.hidden_dim:
        raise ValueError("bigru: forward and backward cells must share input_dim and hidden_dim")
    fwd = gru_sequence(fwd_cell, inputs, mask, reverse=False)
    bwd = gru_sequence(bwd_cell, inputs, mask, reverse=True)
    return concat([fwd, bwd], axis=1)


class AttentionPool:
    """Learned-context attention: project, score against a context vector, softmax, pool."""

    def __init__(self, in_dim: int, att_dim: int, rng: np.random.Generator):
        if att_dim <= 0:
            raise ValueError("attention dimension must be positive")
        self.in_dim = in_dim
        self.att_dim = att_dim
        self.W = Tensor(glorot_uniform(rng, in_dim, att_dim), requires_grad=True)
        self.b = Tensor(np.zeros(att_dim), requires_grad=True)
        self.u = Tensor(glorot_uniform(rng, att_dim, 1), requires_grad=True)

    def params(self, prefix: str = "attention"):
        return [(f"{prefix}.W", self.W), (f"{prefix}.b", self.b), (f"{prefix}.u", self.u)]


def attention_pool(att: AttentionPool, hidden, mask=None):
    """Pool (T x d) hidden states into (d,) with masked softmax weights.

    Returns (pooled, alpha); alpha is zero at masked positions and sums to 1.
    """
    hidden = hidden if isinstance(hidden, Tensor) else Tensor(hidden)
    if hidden.ndim != 2 or hidden.shape[1] != att.in_dim:
        raise ValueError(f"attention_pool: expected (T x {att.in_dim}) hidden states, got {hidden.shape}")
    steps = hidden.shape[0]
    proj = tanh(matmul(hidden, att.W) + att.b)
    scores = matmul(proj, att.u)
    m2 = None
    if mask is not None:
        m2 = np.asarray(mask, dtype=bool).reshape(steps, 1)
    alpha2 = softmax(scores, axis=0, mask=m2)
    pooled = reduce("sum", hidden * alpha2, axis=0)
    return pooled, reshape(alpha2, (steps,))


def attention_pool_batch(att: AttentionPool, hidden_steps, mask: np.ndarray) -> Tensor:
    """Batched attention over per-timestep (B x d) states; returns pooled (B x d).

    ``hidden_steps`` lists the encoder output at each position; ``mask`` is
    (B x T) booleans marking real tokens.
    """
    steps = len(hidden_steps)
    batch = hidden_steps[0].shape[0]
    stacked = concat(hidden_steps, axis=0)  # (T*B x d), position-major
    proj = tanh(matmul(stacked, att.W) + att.b)
    scores = matmul(proj, att.u)
    per_pos = transpose(reshape(scores, (steps, batch)))  # (B x T)
    alpha = softmax(per_pos, axis=1, mask=mask[:, :steps])
    alpha3 = reshape(transpose(alpha), (steps, batch, 1))
    hidden3 = reshape(stacked, (steps, batch, att.in_dim))
    return reduce("sum", hidden3 * alpha3, axis=0)


class DenseHead:
    """Affine map followed by a sigmoid; outputs lie strictly in (0, 1)."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.W = Tensor(glorot_uniform(rng, in_dim, out_dim), requires_grad=True)
        self.b = Tensor(np.zeros(out_dim), requires_grad=True)

    def params(self, prefix: str = "head"):
        return [(f"{prefix}.W", self.W), (f"{prefix}.b", self.b)]


def dense_sigmoid(head: DenseHead, x) -> Tensor:
    x = x if isinstance(x, Tensor) else Tensor(x)
    one_d = x.ndim == 1
    if one_d:
        x = reshape(x, (1, x.shape[0]))
    if x.shape[1] != head.in_dim:
        raise ValueError(f"dense_sigmoid: input width {x.shape[1]} != head input width {head.in_dim}")
    out = sigmoid(matmul(x, head.W) + head.b)
    if one_d:
        return reshape(out, (head.out_dim,))
    return out


def share_slice(h_e, i: int, h_c) -> Tensor:
    """Concatenate row ``i`` of the encoder output with a second encoding.

    Gradient reaches exactly row ``i`` of ``h_e`` and all of ``h_c``.
    """
    h_e = h_e if isinstance(h_e, Tensor) else Tensor(h_e)
    h_c = h_c if isinstance(h_c, Tensor) else Tensor(h_c)
    if h_c.ndim != 1:
        raise ValueError(f"share_slice: expected 1-D second encoding, got shape {h_c.shape}")
    return concat([gather_rows(h_e, i), h_c], axis=0)
