"""Token embeddings and fixed-length input sequence assembly.

One embedding table is shared by identifier tokens and code-context tokens.
It is trained with skip-gram negative sampling and carries three reserved
rows: <pad> (frozen at zero), <sep> (the separator between identifier
groups) and <oov>. Sequence layouts:

    argument:  N_arg tokens, <sep>, N_f tokens, flattened N_args tokens
    return:    N_f tokens, <sep>, flattened N_args tokens
    context:   per-statement center windows of n tokens, concatenated

padded on the right to the configured lengths.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .errors import EmptyVocabulary
from .extraction import ArgumentRecord, FunctionRecord, RECEIVER_NAMES

PAD = "<pad>"
SEP = "<sep>"
OOV = "<oov>"
RESERVED = (PAD, SEP, OOV)

DEFAULT_DIM = 100
DEFAULT_ID_LEN = 31
DEFAULT_CTX_LEN = 49
DEFAULT_WINDOW_TOKENS = 7
DEFAULT_MAX_STATEMENTS = 7

KIND_ARGUMENT = "argument"
KIND_RETURN = "return"


@dataclass
class EmbeddingTable:
    """Token -> d-dimensional vector map with reserved special rows."""

    vocab: dict[str, int]
    vectors: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        assert self.vectors.shape[0] == len(self.vocab)
        self.vectors[self.vocab[PAD]] = 0.0

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def pad_id(self) -> int:
        return self.vocab[PAD]

    @property
    def sep_id(self) -> int:
        return self.vocab[SEP]

    @property
    def oov_id(self) -> int:
        return self.vocab[OOV]

    def token_id(self, token: str) -> int:
        return self.vocab.get(token, self.vocab[OOV])

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.token_id(t) for t in tokens]

    def lookup(self, ids: Sequence[int]) -> np.ndarray:
        return self.vectors[np.asarray(ids, dtype=np.int64)]

    def save(self, bin_path: str | Path, meta_path: str | Path) -> None:
        """Little-endian float32 matrix plus a JSON sidecar."""
        self.vectors.astype("<f4").tofile(bin_path)
        tokens = [None] * len(self.vocab)
        for token, idx in self.vocab.items():
            tokens[idx] = token
        sidecar = {
            "tokens": tokens,
            "dim": self.dim,
            "dtype": "<f4",
            **self.meta,
        }
        Path(meta_path).write_text(
            json.dumps(sidecar, sort_keys=True), encoding="utf-8"
        )

    @classmethod
    def load(cls, bin_path: str | Path, meta_path: str | Path) -> "EmbeddingTable":
        meta = json.loads(Path(meta_path).read_text(encoding="utf-8"))
        tokens = meta.pop("tokens")
        dim = meta["dim"]
        vectors = np.fromfile(bin_path, dtype="<f4").astype(np.float64)
        vectors = vectors.reshape(len(tokens), dim)
        return cls(
            vocab={t: i for i, t in enumerate(tokens)}, vectors=vectors, meta=meta
        )


class SkipGramEmbedder(BaseEstimator):
    """Skip-gram with negative sampling, trained single-threaded.

    Deterministic for a fixed seed: vocabulary order is (-count, token),
    the noise distribution is unigram^0.75, and the learning rate decays
    linearly over the total number of training tokens.
    """

    def __init__(
        self,
        dim: int = DEFAULT_DIM,
        window: int = 5,
        negative: int = 5,
        min_count: int = 5,
        epochs: int = 5,
        lr: float = 0.025,
        min_lr: float = 1e-4,
        seed: int = 0,
    ):
        self.dim = dim
        self.window = window
        self.negative = negative
        self.min_count = min_count
        self.epochs = epochs
        self.lr = lr
        self.min_lr = min_lr
        self.seed = seed

    def fit(self, sentences: Sequence[Sequence[str]]) -> "SkipGramEmbedder":
        counts: dict[str, int] = {}
        for sent in sentences:
            for token in sent:
                counts[token] = counts.get(token, 0) + 1
        kept = sorted(
            ((t, c) for t, c in counts.items() if c >= self.min_count),
            key=lambda kv: (-kv[1], kv[0]),
        )
        if not kept:
            raise EmptyVocabulary(
                f"no token reached min_count={self.min_count} "
                f"over {len(sentences)} sentences"
            )
        vocab = {t: i for i, t in enumerate(RESERVED)}
        for token, _ in kept:
            if token not in vocab:
                vocab[token] = len(vocab)

        rng = np.random.default_rng(self.seed)
        n_rows = len(vocab)
        w_in = (rng.random((n_rows, self.dim)) - 0.5) / self.dim
        w_out = np.zeros((n_rows, self.dim))
        w_in[vocab[PAD]] = 0.0

        first_real = len(RESERVED)
        freqs = np.array([c for _, c in kept], dtype=np.float64)
        noise = freqs**0.75
        noise_cdf = np.cumsum(noise / noise.sum())

        streams = [
            [vocab[t] for t in sent if t in vocab and vocab[t] >= first_real]
            for sent in sentences
        ]
        total_tokens = max(1, self.epochs * sum(len(s) for s in streams))
        trained = 0

        for _epoch in range(self.epochs):
            for stream in streams:
                for pos, center in enumerate(stream):
                    alpha = self.lr - (self.lr - self.min_lr) * (
                        trained / total_tokens
                    )
                    trained += 1
                    span = int(rng.integers(1, self.window + 1))
                    lo = max(0, pos - span)
                    hi = min(len(stream), pos + span + 1)
                    for ctx_pos in range(lo, hi):
                        if ctx_pos == pos:
                            continue
                        context = stream[ctx_pos]
                        v = w_in[center]
                        accum = np.zeros(self.dim)
                        draw = np.searchsorted(noise_cdf, rng.random(self.negative))
                        negatives = first_real + np.minimum(draw, len(noise_cdf) - 1)
                        for target, label in [(context, 1.0)] + [
                            (int(n), 0.0) for n in negatives
                        ]:
                            if label == 0.0 and target == context:
                                continue
                            u = w_out[target]
                            score = 1.0 / (1.0 + np.exp(-np.dot(v, u)))
                            g = alpha * (label - score)
                            accum += g * u
                            w_out[target] += g * v
                        w_in[center] += accum

        self.table_ = EmbeddingTable(
            vocab=vocab,
            vectors=w_in,
            meta={
                "seed": self.seed,
                "window": self.window,
                "negative": self.negative,
                "min_count": self.min_count,
                "epochs": self.epochs,
                "lr": self.lr,
            },
        )
        return self


def center_window(tokens: Sequence, n: int) -> list:
    """Center window of n tokens; an even overhang drops the extra token
    from the right."""
    if len(tokens) <= n:
        return list(tokens)
    overhang = len(tokens) - n
    left = overhang // 2
    return list(tokens[left : left + n])


def _fit_length(ids: list[int], length: int, pad_id: int) -> list[int]:
    ids = ids[:length]
    return ids + [pad_id] * (length - len(ids))


def build_argument_sequence(
    arg: ArgumentRecord,
    fn: FunctionRecord,
    table: EmbeddingTable,
    length: int = DEFAULT_ID_LEN,
) -> list[int]:
    tokens = list(arg.name_tokens) + [SEP] + list(fn.name_tokens)
    for other in fn.arguments:
        tokens.extend(other.name_tokens)
    return _fit_length(table.encode(tokens), length, table.pad_id)


def build_return_sequence(
    fn: FunctionRecord, table: EmbeddingTable, length: int = DEFAULT_ID_LEN
) -> list[int]:
    tokens = list(fn.name_tokens) + [SEP]
    for arg in fn.arguments:
        tokens.extend(arg.name_tokens)
    return _fit_length(table.encode(tokens), length, table.pad_id)


def build_context_sequence(
    statements: Sequence[Sequence[str]],
    table: EmbeddingTable,
    length: int = DEFAULT_CTX_LEN,
    window_tokens: int = DEFAULT_WINDOW_TOKENS,
    max_statements: int = DEFAULT_MAX_STATEMENTS,
    window_per_statement: bool = True,
) -> list[int]:
    """Center-windowed code context, concatenated in source order.

    window_per_statement=False applies one window to the concatenation of
    all statements instead (alternative reading of the truncation rule).
    """
    if window_per_statement:
        windows: list[str] = []
        for stmt in statements[:max_statements]:
            windows.extend(center_window(stmt, window_tokens))
    else:
        merged: list[str] = []
        for stmt in statements:
            merged.extend(stmt)
        windows = center_window(merged, window_tokens)
    return _fit_length(table.encode(windows), length, table.pad_id)


@dataclass
class SequenceBundle:
    """One trainable/predictable unit: an argument or a return slot."""

    identifier_ids: list[int]
    context_ids: list[int]
    visible_mask: np.ndarray
    kind: str
    label: Optional[str] = None
    module_path: str = ""
    qualified_name: str = ""
    slot: str = ""  # argument name, or '<return>'

    def to_dict(self) -> dict:
        return {
            "identifier_ids": self.identifier_ids,
            "context_ids": self.context_ids,
            "mask_on": [int(i) for i in np.nonzero(self.visible_mask)[0]],
            "mask_len": int(self.visible_mask.shape[0]),
            "kind": self.kind,
            "label": self.label,
            "module_path": self.module_path,
            "qualified_name": self.qualified_name,
            "slot": self.slot,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SequenceBundle":
        mask = np.zeros(d["mask_len"], dtype=np.int8)
        mask[d["mask_on"]] = 1
        return cls(
            identifier_ids=list(d["identifier_ids"]),
            context_ids=list(d["context_ids"]),
            visible_mask=mask,
            kind=d["kind"],
            label=d.get("label"),
            module_path=d.get("module_path", ""),
            qualified_name=d.get("qualified_name", ""),
            slot=d.get("slot", ""),
        )


ABLATE_IDENTIFIERS = "identifiers"
ABLATE_CONTEXT = "context"
ABLATE_VISIBLE = "visible"


def apply_ablation(bundle: SequenceBundle, ablate: Optional[str], pad_id: int) -> SequenceBundle:
    """Zero out one input branch without changing any shape."""
    if ablate == ABLATE_IDENTIFIERS:
        bundle.identifier_ids = [pad_id] * len(bundle.identifier_ids)
    elif ablate == ABLATE_CONTEXT:
        bundle.context_ids = [pad_id] * len(bundle.context_ids)
    elif ablate == ABLATE_VISIBLE:
        mask = np.zeros_like(bundle.visible_mask)
        mask[-1] = 1
        bundle.visible_mask = mask
    elif ablate is not None:
        raise ValueError(f"unknown ablation {ablate!r}")
    return bundle


def assemble_bundles(
    records: Iterable[FunctionRecord],
    table: EmbeddingTable,
    module_masks: dict[str, np.ndarray],
    id_length: int = DEFAULT_ID_LEN,
    ctx_length: int = DEFAULT_CTX_LEN,
    window_tokens: int = DEFAULT_WINDOW_TOKENS,
    max_statements: int = DEFAULT_MAX_STATEMENTS,
    window_per_statement: bool = True,
    ablate: Optional[str] = None,
) -> list[SequenceBundle]:
    """Build one bundle per argument (receivers excluded) and per return slot."""
    bundles = []
    for fn in records:
        mask = module_masks[fn.module_path]
        for arg in fn.arguments:
            if arg.name in RECEIVER_NAMES:
                continue
            bundle = SequenceBundle(
                identifier_ids=build_argument_sequence(arg, fn, table, id_length),
                context_ids=build_context_sequence(
                    arg.usage_sequences,
                    table,
                    ctx_length,
                    window_tokens,
                    max_statements,
                    window_per_statement,
                ),
                visible_mask=mask.copy(),
                kind=KIND_ARGUMENT,
                label=arg.label.canonical if arg.label else None,
                module_path=fn.module_path,
                qualified_name=fn.qualified_name,
                slot=arg.name,
            )
            bundles.append(apply_ablation(bundle, ablate, table.pad_id))
        bundle = SequenceBundle(
            identifier_ids=build_return_sequence(fn, table, id_length),
            context_ids=build_context_sequence(
                fn.return_exprs,
                table,
                ctx_length,
                window_tokens,
                max_statements,
                window_per_statement,
            ),
            visible_mask=mask.copy(),
            kind=KIND_RETURN,
            label=fn.return_label.canonical if fn.return_label else None,
            module_path=fn.module_path,
            qualified_name=fn.qualified_name,
            slot="<return>",
        )
        bundles.append(apply_ablation(bundle, ablate, table.pad_id))
    return bundles


def training_sentences(records: Iterable[FunctionRecord]) -> list[list[str]]:
    """Token corpus for embedding training: identifier layouts and code
    statements, in deterministic record order.

    A statement mentioning several arguments appears in each of their usage
    lists; it contributes one sentence per function here.
    """
    sentences = []
    for fn in records:
        identifier_sentence = list(fn.name_tokens)
        for arg in fn.arguments:
            identifier_sentence.extend(arg.name_tokens)
        if identifier_sentence:
            sentences.append(identifier_sentence)
        seen: set[tuple] = set()
        for seqs in [a.usage_sequences for a in fn.arguments] + [fn.return_exprs]:
            for seq in seqs:
                key = tuple(seq)
                if key not in seen:
                    seen.add(key)
                    sentences.append(list(seq))
    return sentences


def save_bundles(bundles: list[SequenceBundle], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for bundle in bundles:
            fh.write(json.dumps(bundle.to_dict(), sort_keys=True) + "\n")


def load_bundles(path: str | Path) -> list[SequenceBundle]:
    bundles = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                bundles.append(SequenceBundle.from_dict(json.loads(line)))
    return bundles
