"""The set-attention scoring function.

A document set enters as an [N, E0] feature matrix, is projected to the
working width E (affine + ReLU), optionally augmented with learned ordinal
embeddings of its initial-ranking positions, passed through a stack of
attention blocks, and reduced to one score per document by a final affine
head.  Two block kinds are supported:

* ``msab`` -- multi-head self-attention: every document attends to every
  other document in the set.
* ``imsab`` -- induced attention: a learned [M, E] seed matrix first attends
  to the documents, producing M cluster-center rows, and the documents then
  attend to those centers.  Parameter count and per-row softmax width stay
  fixed as the set grows, which is what makes this variant robust to set
  sizes unseen in training.

Scores are permutation equivariant: permuting input documents (together
with their ordinal positions) permutes the scores identically, so the
ranking obtained by sorting is permutation invariant.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import (Tensor, add, affine, concat_cols, gather_rows, matmul,
                       matmul_nt, relu, row_softmax, scale_shift)
from .autodiff import layer_norm as _layer_norm_op
from .errors import CheckpointError, ConfigError, DataError, NumericError, ShapeError

__all__ = [
    "ModelConfig", "ModelParams", "MabParams", "MsabBlock", "ImsabBlock",
    "init_params", "attention", "multihead", "mab", "msab", "imsab",
    "encode", "represent_documents", "score", "rank",
    "save_checkpoint", "load_checkpoint",
]

BLOCK_KINDS = ("msab", "imsab")
LAYER_NORM_EPS = 1e-6


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    ``max_rank`` is the ordinal-embedding table length: the largest initial-
    ranking position (after training-time offset shifts) that can be embedded.
    """

    embed_dim: int = 256
    num_heads: int = 8
    num_blocks: int = 6
    block_kind: str = "msab"
    induced_points: int = 20
    use_ordinal: bool = False
    ranking_sources: int = 0
    max_rank: int = 0

    def __post_init__(self):
        if self.embed_dim < 1 or self.num_heads < 1:
            raise ConfigError("embed_dim and num_heads must be >= 1")
        if self.embed_dim % self.num_heads != 0:
            raise ConfigError(
                f"embed_dim {self.embed_dim} not divisible by "
                f"num_heads {self.num_heads}")
        if self.num_blocks < 0:
            raise ConfigError("num_blocks must be >= 0")
        if self.block_kind not in BLOCK_KINDS:
            raise ConfigError(f"block_kind must be one of {BLOCK_KINDS}")
        if self.block_kind == "imsab" and self.induced_points < 1:
            raise ConfigError("induced_points must be >= 1 for imsab")
        if self.use_ordinal:
            if self.ranking_sources < 1:
                raise ConfigError("use_ordinal requires ranking_sources >= 1")
            if self.max_rank < 1:
                raise ConfigError("use_ordinal requires max_rank >= 1")
        if self.ranking_sources < 0:
            raise ConfigError("ranking_sources must be >= 0")

    @property
    def head_dim(self):
        return self.embed_dim // self.num_heads

    def to_dict(self):
        return {
            "embed_dim": self.embed_dim,
            "num_heads": self.num_heads,
            "num_blocks": self.num_blocks,
            "block_kind": self.block_kind,
            "induced_points": self.induced_points,
            "use_ordinal": self.use_ordinal,
            "ranking_sources": self.ranking_sources,
            "max_rank": self.max_rank,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class MabParams:
    """One attention block's weights: per-head projections, feed-forward,
    and the two layer-norm gain/bias pairs."""

    wq: list
    wk: list
    wv: list
    rff_w: Tensor
    rff_b: Tensor
    ln1_gain: Tensor
    ln1_bias: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor

    def named(self, prefix):
        for i, t in enumerate(self.wq):
            yield f"{prefix}.q{i}", t
        for i, t in enumerate(self.wk):
            yield f"{prefix}.k{i}", t
        for i, t in enumerate(self.wv):
            yield f"{prefix}.v{i}", t
        yield f"{prefix}.rff_w", self.rff_w
        yield f"{prefix}.rff_b", self.rff_b
        yield f"{prefix}.ln1_gain", self.ln1_gain
        yield f"{prefix}.ln1_bias", self.ln1_bias
        yield f"{prefix}.ln2_gain", self.ln2_gain
        yield f"{prefix}.ln2_bias", self.ln2_bias


@dataclass
class MsabBlock:
    mab: MabParams

    def named(self, prefix):
        yield from self.mab.named(f"{prefix}.mab")


@dataclass
class ImsabBlock:
    inducing: Tensor          # [M, E] learned seed rows
    center: MabParams         # seeds attend to documents -> centers
    out: MabParams            # documents attend to centers

    def named(self, prefix):
        yield f"{prefix}.inducing", self.inducing
        yield from self.center.named(f"{prefix}.center")
        yield from self.out.named(f"{prefix}.out")


@dataclass
class ModelParams:
    """All learnable tensors, created by :func:`init_params`."""

    feature_count: int
    proj_w: Tensor                      # [E0, E]
    proj_b: Tensor                      # [1, E]
    blocks: list = field(default_factory=list)
    ordinal_tables: list = field(default_factory=list)  # each [max_rank, E]
    head_w: Tensor = None               # [E, 1]
    head_b: Tensor = None               # [1, 1]

    def named(self):
        yield "proj.w", self.proj_w
        yield "proj.b", self.proj_b
        for t, block in enumerate(self.blocks):
            yield from block.named(f"block{t}")
        for s, table in enumerate(self.ordinal_tables):
            yield f"ordinal{s}", table
        yield "head.w", self.head_w
        yield "head.b", self.head_b

    def tensors(self):
        return [t for _, t in self.named()]

    def zero_grads(self):
        for t in self.tensors():
            t.zero_grad()

    def copy(self):
        by_name = {n: t.copy() for n, t in self.named()}
        return _assemble(_config_of(self), self.feature_count,
                         lambda name, rows, cols, kind: by_name[name])

    def count(self):
        return sum(t.data.size for t in self.tensors())


def _config_of(params):
    # Reconstruct enough of the config to rebuild the parameter structure.
    e = params.proj_w.cols
    heads = len(params.blocks[0].mab.wq) if params.blocks and isinstance(
        params.blocks[0], MsabBlock) else (
        len(params.blocks[0].center.wq) if params.blocks else 1)
    kind = "msab"
    induced = 1
    if params.blocks and isinstance(params.blocks[0], ImsabBlock):
        kind = "imsab"
        induced = params.blocks[0].inducing.rows
    use_ordinal = bool(params.ordinal_tables)
    return ModelConfig(
        embed_dim=e,
        num_heads=heads,
        num_blocks=len(params.blocks),
        block_kind=kind,
        induced_points=induced,
        use_ordinal=use_ordinal,
        ranking_sources=len(params.ordinal_tables),
        max_rank=params.ordinal_tables[0].rows if use_ordinal else 0,
    )


def _glorot(rng, rows, cols):
    limit = math.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def _assemble(config, feature_count, make):
    """Build the parameter structure, delegating tensor creation to ``make``.

    ``make(name, rows, cols, kind)`` returns a Tensor; ``kind`` is one of
    weight/bias/gain/inducing/ordinal.  Both fresh initialization and
    checkpoint loading go through this single structure definition.
    """
    e = config.embed_dim
    he = config.head_dim

    def mab_params(prefix):
        return MabParams(
            wq=[make(f"{prefix}.q{i}", e, he, "weight") for i in range(config.num_heads)],
            wk=[make(f"{prefix}.k{i}", e, he, "weight") for i in range(config.num_heads)],
            wv=[make(f"{prefix}.v{i}", e, he, "weight") for i in range(config.num_heads)],
            rff_w=make(f"{prefix}.rff_w", e, e, "weight"),
            rff_b=make(f"{prefix}.rff_b", 1, e, "bias"),
            ln1_gain=make(f"{prefix}.ln1_gain", 1, e, "gain"),
            ln1_bias=make(f"{prefix}.ln1_bias", 1, e, "bias"),
            ln2_gain=make(f"{prefix}.ln2_gain", 1, e, "gain"),
            ln2_bias=make(f"{prefix}.ln2_bias", 1, e, "bias"),
        )

    blocks = []
    for t in range(config.num_blocks):
        if config.block_kind == "msab":
            blocks.append(MsabBlock(mab=mab_params(f"block{t}.mab")))
        else:
            blocks.append(ImsabBlock(
                inducing=make(f"block{t}.inducing", config.induced_points, e, "inducing"),
                center=mab_params(f"block{t}.center"),
                out=mab_params(f"block{t}.out"),
            ))
    tables = []
    if config.use_ordinal:
        tables = [make(f"ordinal{s}", config.max_rank, e, "ordinal")
                  for s in range(config.ranking_sources)]
    return ModelParams(
        feature_count=feature_count,
        proj_w=make("proj.w", feature_count, e, "weight"),
        proj_b=make("proj.b", 1, e, "bias"),
        blocks=blocks,
        ordinal_tables=tables,
        head_w=make("head.w", e, 1, "weight"),
        head_b=make("head.b", 1, 1, "bias"),
    )


def init_params(config, feature_count, rng):
    """Fresh parameters: Glorot-uniform weights, zero biases, unit layer-norm
    gains, and normal/sqrt(E) inducing rows and ordinal tables."""
    if feature_count < 1:
        raise ConfigError("feature_count must be >= 1")
    e = config.embed_dim

    def make(name, rows, cols, kind):
        if kind == "weight":
            return Tensor(_glorot(rng, rows, cols), requires_grad=True)
        if kind == "bias":
            return Tensor(np.zeros((rows, cols)), requires_grad=True)
        if kind == "gain":
            return Tensor(np.ones((rows, cols)), requires_grad=True)
        # inducing seeds and ordinal tables
        return Tensor(rng.standard_normal((rows, cols)) / math.sqrt(e),
                      requires_grad=True)

    return _assemble(config, feature_count, make)


# ---------------------------------------------------------------------------
# Forward pass
# ---------------------------------------------------------------------------

def attention(q, k, v):
    """Scaled dot-product attention: softmax(q k^T / sqrt(width)) v.

    The scaling uses the column width of the inputs to this call, so inside
    a multi-head split it is the per-head width.
    """
    if not (q.cols == k.cols == v.cols):
        raise ShapeError("attention: q/k/v column widths differ")
    if k.rows != v.rows:
        raise ShapeError("attention: k/v row counts differ")
    logits = scale_shift(matmul_nt(q, k), scale=1.0 / math.sqrt(q.cols))
    return matmul(row_softmax(logits), v)


def multihead(q, k, v, p):
    """Project q/k/v into per-head subspaces, attend, and concatenate.

    Output width equals the input width (heads * head_dim); no output
    projection is applied after the concatenation.
    """
    heads = [
        attention(matmul(q, p.wq[i]), matmul(k, p.wk[i]), matmul(v, p.wv[i]))
        for i in range(len(p.wq))
    ]
    return concat_cols(heads)


def mab(q, k, v, p):
    """Attention block: two residual sums, each followed by layer norm.

    The feed-forward half is a single affine + ReLU at the working width.
    No dropout, no positional encoding.
    """
    b = _layer_norm_op(add(q, multihead(q, k, v, p)),
                       p.ln1_gain, p.ln1_bias, LAYER_NORM_EPS)
    return _layer_norm_op(add(b, relu(affine(b, p.rff_w, p.rff_b))),
                          p.ln2_gain, p.ln2_bias, LAYER_NORM_EPS)


def msab(x, block):
    """Self-attention block: every row attends to every row."""
    return mab(x, x, x, block.mab)


def imsab(x, block):
    """Induced block: seeds summarize the set, rows attend to the summary."""
    centers = mab(block.inducing, x, x, block.center)
    return mab(x, centers, centers, block.out)


def encode(x, params, config):
    """Apply the configured block stack; [N, E] in, [N, E] out."""
    for block in params.blocks:
        x = msab(x, block) if config.block_kind == "msab" else imsab(x, block)
    return x


def represent_documents(group, params, config, offset=0):
    """Build the [N, E] input representation for one query.

    Features go through the affine+ReLU input projection; when ordinal
    embeddings are enabled, each ranking source contributes the table row at
    (position + offset - 1), all summed into the representation.  ``offset``
    is 0 at inference; training shifts it to exercise the whole table.
    """
    if group.features.shape[1] != params.feature_count:
        raise ShapeError(
            f"query {group.qid!r} has {group.features.shape[1]} features; "
            f"model expects {params.feature_count}")
    x = relu(affine(Tensor(group.features), params.proj_w, params.proj_b))
    if not config.use_ordinal:
        return x
    if len(group.initial_ranks) < config.ranking_sources:
        raise DataError(
            f"query {group.qid!r} has {len(group.initial_ranks)} initial "
            f"rankings; model expects {config.ranking_sources}")
    for s in range(config.ranking_sources):
        idx = group.initial_ranks[s] + offset - 1
        if offset < 0 or idx.max() >= config.max_rank:
            raise DataError(
                f"query {group.qid!r}: ordinal position {idx.max() + 1} "
                f"exceeds table length {config.max_rank}")
        x = add(x, gather_rows(params.ordinal_tables[s], idx))
    return x


def score(group, params, config, offset=0):
    """Score one query's documents; returns an [N, 1] tensor."""
    x = encode(represent_documents(group, params, config, offset), params, config)
    return affine(x, params.head_w, params.head_b)


def rank(scores):
    """Document ids (1-based) in descending score order, ties by input order."""
    s = scores.data if isinstance(scores, Tensor) else np.asarray(scores, dtype=np.float64)
    s = s.ravel()
    if np.any(np.isnan(s)):
        raise NumericError("rank: scores contain NaN")
    return np.argsort(-s, kind="stable") + 1


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------
#
# Layout (all little-endian):
#   magic     b"SETRANK1\n"
#   u64       header length in bytes
#   header    JSON: {"format": 1, "config": {...}, "feature_count": E0,
#                    "tensors": [{"name","rows","cols"}, ...]}
#   blocks    rows*cols float64 values per tensor, C order, header order
#
# Loading validates the magic, the config, every declared shape against the
# structure the config implies, and the exact file length, so a truncated
# file never yields a partial model.

_MAGIC = b"SETRANK1\n"


def save_checkpoint(params, config, path):
    named = list(params.named())
    header = {
        "format": 1,
        "config": config.to_dict(),
        "feature_count": params.feature_count,
        "tensors": [{"name": n, "rows": t.rows, "cols": t.cols}
                    for n, t in named],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, t in named:
            fh.write(t.data.astype("<f8").tobytes(order="C"))


def load_checkpoint(path):
    """Read a checkpoint; returns (params, config), bit-exact round trip."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(_MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file")
    pos = len(_MAGIC)
    if len(raw) < pos + 8:
        raise CheckpointError(f"{path}: truncated header")
    (hlen,) = struct.unpack_from("<Q", raw, pos)
    pos += 8
    if len(raw) < pos + hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: bad header ({exc})") from None
    pos += hlen
    if header.get("format") != 1:
        raise CheckpointError(f"{path}: unsupported format {header.get('format')!r}")
    try:
        config = ModelConfig.from_dict(header["config"])
        feature_count = int(header["feature_count"])
        declared = [(d["name"], int(d["rows"]), int(d["cols"]))
                    for d in header["tensors"]]
    except (KeyError, TypeError, ConfigError) as exc:
        raise CheckpointError(f"{path}: bad header ({exc})") from None

    arrays = {}
    for name, rows, cols in declared:
        nbytes = rows * cols * 8
        if len(raw) < pos + nbytes:
            raise CheckpointError(f"{path}: truncated at tensor {name!r}")
        arrays[name] = np.frombuffer(
            raw, dtype="<f8", count=rows * cols, offset=pos
        ).reshape(rows, cols).astype(np.float64)
        pos += nbytes
    if pos != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - pos} trailing bytes")

    def make(name, rows, cols, kind):
        if name not in arrays:
            raise CheckpointError(f"{path}: missing tensor {name!r}")
        arr = arrays.pop(name)
        if arr.shape != (rows, cols):
            raise CheckpointError(
                f"{path}: tensor {name!r} has shape {arr.shape}, "
                f"expected ({rows}, {cols})")
        return Tensor(arr, requires_grad=True)

    params = _assemble(config, feature_count, make)
    if arrays:
        raise CheckpointError(
            f"{path}: unexpected tensors {sorted(arrays)} in header")
    return params, config
