"""The two-branch recurrent encoder trained with triplet loss.

Identifier and context token sequences each pass through a bidirectional
LSTM; the four final hidden states are concatenated with the visible-type
mask and projected linearly into the output space, where same-type
datapoints are pulled together and different-type datapoints pushed apart:

    loss(a, p, n) = max(0, margin + ||a - p|| - ||a - n||)

with Euclidean distances. The shared embedding table is fine-tuned during
training; the <pad> row stays frozen at zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .embedding import EmbeddingTable, SequenceBundle
from .errors import UnminableTriplets
from .nn import Adam, clip_gradients, init_lstm_params, lstm_backward, lstm_forward

BRANCHES = ("id_fwd", "id_bwd", "ctx_fwd", "ctx_bwd")

DEFAULT_HIDDEN = 256
DEFAULT_OUTPUT_DIM = 4096
DEFAULT_MARGIN = 2.0


def triplet_loss(a, p, n, margin: float = DEFAULT_MARGIN):
    """max(0, margin + ||a-p|| - ||a-n||); vectors give a scalar, batches
    of row vectors give one loss per row."""
    a = np.asarray(a, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    axis = a.ndim - 1
    d_ap = np.linalg.norm(a - p, axis=axis)
    d_an = np.linalg.norm(a - n, axis=axis)
    loss = np.maximum(0.0, margin + d_ap - d_an)
    return float(loss) if loss.ndim == 0 else loss


def bundles_to_arrays(
    bundles: Sequence[SequenceBundle],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    id_ids = np.array([b.identifier_ids for b in bundles], dtype=np.int64)
    ctx_ids = np.array([b.context_ids for b in bundles], dtype=np.int64)
    masks = np.array([b.visible_mask for b in bundles], dtype=np.float64)
    return id_ids, ctx_ids, masks


@dataclass
class _ForwardCache:
    id_ids: np.ndarray
    ctx_ids: np.ndarray
    x_id: np.ndarray
    x_ctx: np.ndarray
    drop_id: Optional[np.ndarray]
    drop_ctx: Optional[np.ndarray]
    lstm_caches: dict
    z: np.ndarray


class EncoderModel:
    """Parameter container plus forward/backward passes (float64, numpy).

    Parameters live in an insertion-ordered dict: 'emb', then
    '<branch>.Wx/.Wh/.b' for the four LSTM directions, then
    'proj.W'/'proj.b'. The projection input is the concatenation
    [id_fwd, id_bwd, ctx_fwd, ctx_bwd, visible mask].
    """

    def __init__(
        self,
        embedding_matrix: np.ndarray,
        pad_id: int,
        mask_dim: int,
        id_len: int,
        ctx_len: int,
        hidden_size: int = DEFAULT_HIDDEN,
        output_dim: int = DEFAULT_OUTPUT_DIM,
        dropout: float = 0.25,
        seed: int = 0,
        _init_params: bool = True,
    ):
        self.pad_id = pad_id
        self.mask_dim = mask_dim
        self.id_len = id_len
        self.ctx_len = ctx_len
        self.hidden_size = hidden_size
        self.output_dim = output_dim
        self.dropout = dropout
        self.seed = seed
        self.emb_dim = embedding_matrix.shape[1]

        self.params: dict[str, np.ndarray] = {}
        emb = np.array(embedding_matrix, dtype=np.float64)
        emb[pad_id] = 0.0
        self.params["emb"] = emb
        if _init_params:
            rng = np.random.default_rng([seed, 0x11])
            for branch in BRANCHES:
                Wx, Wh, b = init_lstm_params(self.emb_dim, hidden_size, rng)
                self.params[f"{branch}.Wx"] = Wx
                self.params[f"{branch}.Wh"] = Wh
                self.params[f"{branch}.b"] = b
            proj_in = 4 * hidden_size + mask_dim
            k = 1.0 / np.sqrt(proj_in)
            self.params["proj.W"] = rng.uniform(-k, k, size=(proj_in, output_dim))
            self.params["proj.b"] = np.zeros(output_dim)

    # ----- shape bookkeeping --------------------------------------------------

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def _check_shapes(self, id_ids, ctx_ids, masks) -> None:
        if id_ids.shape[1] != self.id_len:
            raise ValueError(
                f"identifier length {id_ids.shape[1]} != configured {self.id_len}"
            )
        if ctx_ids.shape[1] != self.ctx_len:
            raise ValueError(
                f"context length {ctx_ids.shape[1]} != configured {self.ctx_len}"
            )
        if masks.shape[1] != self.mask_dim:
            raise ValueError(
                f"mask width {masks.shape[1]} != configured {self.mask_dim}"
            )

    # ----- forward / backward -------------------------------------------------

    def forward(
        self,
        id_ids: np.ndarray,
        ctx_ids: np.ndarray,
        masks: np.ndarray,
        train: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> tuple[np.ndarray, _ForwardCache]:
        self._check_shapes(id_ids, ctx_ids, masks)
        emb = self.params["emb"]
        x_id = emb[id_ids]
        x_ctx = emb[ctx_ids]
        drop_id = drop_ctx = None
        if train and self.dropout > 0.0:
            if rng is None:
                raise ValueError("training-mode forward needs an RNG for dropout")
            keep = 1.0 - self.dropout
            drop_id = (rng.random(x_id.shape) < keep) / keep
            drop_ctx = (rng.random(x_ctx.shape) < keep) / keep
            x_id = x_id * drop_id
            x_ctx = x_ctx * drop_ctx

        caches = {}
        h_id_f, caches["id_fwd"] = self._run(x_id, "id_fwd")
        h_id_b, caches["id_bwd"] = self._run(x_id[:, ::-1], "id_bwd")
        h_ctx_f, caches["ctx_fwd"] = self._run(x_ctx, "ctx_fwd")
        h_ctx_b, caches["ctx_bwd"] = self._run(x_ctx[:, ::-1], "ctx_bwd")

        z = np.concatenate(
            [h_id_f, h_id_b, h_ctx_f, h_ctx_b, masks.astype(np.float64)], axis=1
        )
        out = z @ self.params["proj.W"] + self.params["proj.b"]
        cache = _ForwardCache(
            id_ids, ctx_ids, x_id, x_ctx, drop_id, drop_ctx, caches, z
        )
        return out, cache

    def _run(self, x, branch):
        return lstm_forward(
            x,
            self.params[f"{branch}.Wx"],
            self.params[f"{branch}.Wh"],
            self.params[f"{branch}.b"],
        )

    def backward(self, dout: np.ndarray, cache: _ForwardCache) -> dict[str, np.ndarray]:
        H = self.hidden_size
        grads = {name: np.zeros_like(p) for name, p in self.params.items()}
        grads["proj.W"] = cache.z.T @ dout
        grads["proj.b"] = dout.sum(axis=0)
        dz = dout @ self.params["proj.W"].T

        dx_id = self._branch_backward(dz[:, :H], "id_fwd", cache, grads, False)
        dx_id += self._branch_backward(dz[:, H : 2 * H], "id_bwd", cache, grads, True)
        dx_ctx = self._branch_backward(dz[:, 2 * H : 3 * H], "ctx_fwd", cache, grads, False)
        dx_ctx += self._branch_backward(dz[:, 3 * H : 4 * H], "ctx_bwd", cache, grads, True)
        # Gradient w.r.t. the mask input is discarded (the mask is data).

        if cache.drop_id is not None:
            dx_id = dx_id * cache.drop_id
            dx_ctx = dx_ctx * cache.drop_ctx
        demb = grads["emb"]
        np.add.at(demb, cache.id_ids.ravel(), dx_id.reshape(-1, self.emb_dim))
        np.add.at(demb, cache.ctx_ids.ravel(), dx_ctx.reshape(-1, self.emb_dim))
        demb[self.pad_id] = 0.0
        return grads

    def _branch_backward(self, dh, branch, cache, grads, reverse):
        dX, dWx, dWh, db = lstm_backward(
            dh,
            cache.lstm_caches[branch],
            self.params[f"{branch}.Wx"],
            self.params[f"{branch}.Wh"],
        )
        grads[f"{branch}.Wx"] += dWx
        grads[f"{branch}.Wh"] += dWh
        grads[f"{branch}.b"] += db
        return dX[:, ::-1] if reverse else dX

    # ----- triplet objective ----------------------------------------------

    def triplet_step(
        self,
        batches: tuple,
        margin: float,
        train: bool = False,
        rng: Optional[np.random.Generator] = None,
    ) -> tuple[np.ndarray, Optional[dict[str, np.ndarray]]]:
        """Per-triplet losses; with train=True also the gradients of the
        mean batch loss w.r.t. every parameter."""
        (a_in, p_in, n_in) = batches
        a_out, a_cache = self.forward(*a_in, train=train, rng=rng)
        p_out, p_cache = self.forward(*p_in, train=train, rng=rng)
        n_out, n_cache = self.forward(*n_in, train=train, rng=rng)

        diff_ap = a_out - p_out
        diff_an = a_out - n_out
        d_ap = np.linalg.norm(diff_ap, axis=1)
        d_an = np.linalg.norm(diff_an, axis=1)
        losses = np.maximum(0.0, margin + d_ap - d_an)
        if not train:
            return losses, None

        B = a_out.shape[0]
        active = (losses > 0.0).astype(np.float64)[:, None] / B
        unit_ap = diff_ap / np.maximum(d_ap, 1e-12)[:, None]
        unit_an = diff_an / np.maximum(d_an, 1e-12)[:, None]
        da = active * (unit_ap - unit_an)
        dp = -active * unit_ap
        dn = active * unit_an

        grads = self.backward(da, a_cache)
        for name, g in self.backward(dp, p_cache).items():
            grads[name] += g
        for name, g in self.backward(dn, n_cache).items():
            grads[name] += g
        grads["emb"][self.pad_id] = 0.0
        return losses, grads

    # ----- inference --------------------------------------------------------

    def encode(self, bundles: Sequence[SequenceBundle], batch_size: int = 512) -> np.ndarray:
        out = np.empty((len(bundles), self.output_dim))
        for start in range(0, len(bundles), batch_size):
            chunk = bundles[start : start + batch_size]
            arrays = bundles_to_arrays(chunk)
            out[start : start + len(chunk)] = self.forward(*arrays)[0]
        return out

    # ----- persistence -------------------------------------------------------

    def save(self, blob_path: str | Path, manifest_path: str | Path, extra: Optional[dict] = None) -> None:
        blob = np.concatenate([self.params[k].ravel() for k in self.params])
        blob.astype("<f4").tofile(blob_path)
        manifest = {
            "parameters": [
                {"name": k, "shape": list(self.params[k].shape)} for k in self.params
            ],
            "parameter_count": self.parameter_count(),
            "pad_id": self.pad_id,
            "mask_dim": self.mask_dim,
            "id_len": self.id_len,
            "ctx_len": self.ctx_len,
            "hidden_size": self.hidden_size,
            "output_dim": self.output_dim,
            "dropout": self.dropout,
            "seed": self.seed,
            "dtype": "<f4",
        }
        if extra:
            manifest.update(extra)
        Path(manifest_path).write_text(
            json.dumps(manifest, sort_keys=True, indent=1), encoding="utf-8"
        )

    @classmethod
    def load(cls, blob_path: str | Path, manifest_path: str | Path) -> "EncoderModel":
        manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
        flat = np.fromfile(blob_path, dtype="<f4").astype(np.float64)
        shapes = [(p["name"], tuple(p["shape"])) for p in manifest["parameters"]]
        emb_shape = dict(shapes)["emb"]
        model = cls(
            embedding_matrix=np.zeros(emb_shape),
            pad_id=manifest["pad_id"],
            mask_dim=manifest["mask_dim"],
            id_len=manifest["id_len"],
            ctx_len=manifest["ctx_len"],
            hidden_size=manifest["hidden_size"],
            output_dim=manifest["output_dim"],
            dropout=manifest["dropout"],
            seed=manifest["seed"],
            _init_params=False,
        )
        offset = 0
        for name, shape in shapes:
            size = int(np.prod(shape))
            model.params[name] = flat[offset : offset + size].reshape(shape)
            offset += size
        model.params["emb"][model.pad_id] = 0.0
        return model


# ----- triplet mining and training -----------------------------------------


def mine_triplets(
    labels: Sequence[str], rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One triplet per eligible anchor: positive uniform over same-label
    datapoints, negative uniform over different-label datapoints."""
    groups: dict[str, list[int]] = {}
    for i, label in enumerate(labels):
        groups.setdefault(label, []).append(i)
    if len(groups) < 2 or not any(len(g) >= 2 for g in groups.values()):
        raise UnminableTriplets(
            f"{len(labels)} datapoints over {len(groups)} type(s) admit no triplet"
        )
    index = np.arange(len(labels))
    label_arr = np.array(labels, dtype=object)
    others = {lab: index[label_arr != lab] for lab in sorted(groups)}
    anchors = [i for lab in sorted(groups) for i in groups[lab] if len(groups[lab]) >= 2]
    anchors = np.array(anchors, dtype=np.int64)
    rng.shuffle(anchors)
    positives = np.empty_like(anchors)
    negatives = np.empty_like(anchors)
    for row, anchor in enumerate(anchors):
        group = groups[labels[anchor]]
        pos = anchor
        while pos == anchor:
            pos = group[rng.integers(len(group))]
        pool = others[labels[anchor]]
        positives[row] = pos
        negatives[row] = pool[rng.integers(len(pool))]
    return anchors, positives, negatives


@dataclass
class TrainingResult:
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_valid_loss: float = float("inf")

    def to_dict(self) -> dict:
        return {
            "history": self.history,
            "best_epoch": self.best_epoch,
            "best_valid_loss": self.best_valid_loss,
        }


def _subset(arrays, idx):
    id_ids, ctx_ids, masks = arrays
    return id_ids[idx], ctx_ids[idx], masks[idx]


def train_encoder(
    model: EncoderModel,
    train_bundles: Sequence[SequenceBundle],
    valid_bundles: Sequence[SequenceBundle] = (),
    margin: float = DEFAULT_MARGIN,
    lr: float = 0.002,
    epochs: int = 15,
    batch_size: int = 2536,
    clip_norm: float = 10.0,
    seed: int = 0,
) -> TrainingResult:
    """Adam on the mean triplet loss; triplets are re-mined every epoch with
    an epoch-seeded RNG and the best-validation parameters are kept.

    Single-threaded and bit-reproducible for a fixed seed. Falls back to the
    training loss for checkpoint selection when the validation set admits no
    triplets.
    """
    train_labeled = [b for b in train_bundles if b.label is not None]
    if not train_labeled:
        raise UnminableTriplets("no labeled training datapoints")
    train_arrays = bundles_to_arrays(train_labeled)
    train_labels = [b.label for b in train_labeled]
    # Raise UnminableTriplets for impossible distributions before training.
    mine_triplets(train_labels, np.random.default_rng([seed, 0]))

    valid_labeled = [b for b in valid_bundles if b.label is not None]
    valid_triplet_arrays = None
    if valid_labeled:
        try:
            va, vp, vn = mine_triplets(
                [b.label for b in valid_labeled], np.random.default_rng([seed, 0xA])
            )
            arrays = bundles_to_arrays(valid_labeled)
            valid_triplet_arrays = (
                _subset(arrays, va),
                _subset(arrays, vp),
                _subset(arrays, vn),
            )
        except UnminableTriplets:
            valid_triplet_arrays = None

    optimizer = Adam(model.params, lr=lr)
    result = TrainingResult()
    best_params = None

    for epoch in range(epochs):
        rng = np.random.default_rng([seed, 1 + epoch])
        anchors, positives, negatives = mine_triplets(train_labels, rng)
        total_loss = 0.0
        for start in range(0, len(anchors), batch_size):
            sl = slice(start, start + batch_size)
            batch = (
                _subset(train_arrays, anchors[sl]),
                _subset(train_arrays, positives[sl]),
                _subset(train_arrays, negatives[sl]),
            )
            losses, grads = model.triplet_step(batch, margin, train=True, rng=rng)
            total_loss += float(losses.sum())
            clip_gradients(grads, clip_norm)
            optimizer.step(grads)
            model.params["emb"][model.pad_id] = 0.0
        train_loss = total_loss / len(anchors)

        if valid_triplet_arrays is not None:
            valid_losses, _ = model.triplet_step(valid_triplet_arrays, margin)
            valid_loss = float(valid_losses.mean())
        else:
            valid_loss = train_loss
        result.history.append(
            {"epoch": epoch, "train_loss": train_loss, "valid_loss": valid_loss}
        )
        if valid_loss < result.best_valid_loss:
            result.best_valid_loss = valid_loss
            result.best_epoch = epoch
            best_params = {k: v.copy() for k, v in model.params.items()}

    if best_params is not None:
        for name in model.params:
            model.params[name][...] = best_params[name]
    return result


# ----- gradient checking -----------------------------------------------------


def gradient_check(
    model: EncoderModel,
    triplets: tuple,
    margin: float = DEFAULT_MARGIN,
    step: float = 1e-4,
) -> dict:
    """Compare analytic gradients against central finite differences.

    `triplets` is an (anchor, positive, negative) tuple of input-array
    triples covering B triplets. Every parameter coordinate is perturbed
    except the frozen <pad> embedding row; both sides run without dropout.
    Relative error is |ga - gn| / (|ga| + |gn| + 1e-4), reported per
    parameter and overall.
    """
    a_in, p_in, n_in = triplets
    B = a_in[0].shape[0]

    def batch_losses() -> np.ndarray:
        losses, _ = model.triplet_step((a_in, p_in, n_in), margin, train=False)
        return losses

    def single(idx: int):
        return tuple(
            tuple(arr[idx : idx + 1] for arr in side) for side in (a_in, p_in, n_in)
        )

    analytic: dict[str, np.ndarray] = {
        name: np.zeros((B,) + p.shape) for name, p in model.params.items()
    }
    saved_dropout = model.dropout
    model.dropout = 0.0
    try:
        for b in range(B):
            sa, sp, sn = single(b)
            _, grads = model.triplet_step((sa, sp, sn), margin, train=True)
            for name, g in grads.items():
                analytic[name][b] = g  # batch of size 1: mean == the triplet

        report_per_param = {}
        max_rel = 0.0
        for name, param in model.params.items():
            flat = param.ravel()
            numeric = np.zeros((B, flat.size))
            coords = np.arange(flat.size)
            if name == "emb":
                width = param.shape[1]
                pad_row = model.pad_id
                keep = (coords // width) != pad_row
                coords = coords[keep]
            for c in coords:
                original = flat[c]
                flat[c] = original + step
                plus = batch_losses()
                flat[c] = original - step
                minus = batch_losses()
                flat[c] = original
                numeric[:, c] = (plus - minus) / (2.0 * step)
            ga = analytic[name].reshape(B, flat.size)
            if name == "emb":
                width = param.shape[1]
                sel = (np.arange(flat.size) // width) != model.pad_id
                ga = ga[:, sel]
                gn = numeric[:, sel]
            else:
                gn = numeric
            rel = np.abs(ga - gn) / (np.abs(ga) + np.abs(gn) + 1e-4)
            block_max = float(rel.max()) if rel.size else 0.0
            report_per_param[name] = block_max
            max_rel = max(max_rel, block_max)
    finally:
        model.dropout = saved_dropout

    return {
        "max_relative_error": max_rel,
        "per_parameter": report_per_param,
        "triplets": B,
        "step": step,
    }


# ----- sklearn-style wrapper --------------------------------------------------


class TypeClusterEncoder(BaseEstimator):
    """Estimator facade: fit on labeled bundles, transform bundles to vectors."""

    def __init__(
        self,
        hidden_size: int = DEFAULT_HIDDEN,
        output_dim: int = DEFAULT_OUTPUT_DIM,
        dropout: float = 0.25,
        lr: float = 0.002,
        epochs: int = 15,
        batch_size: int = 2536,
        margin: float = DEFAULT_MARGIN,
        clip_norm: float = 10.0,
        seed: int = 0,
    ):
        self.hidden_size = hidden_size
        self.output_dim = output_dim
        self.dropout = dropout
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.margin = margin
        self.clip_norm = clip_norm
        self.seed = seed

    def fit(
        self,
        bundles: Sequence[SequenceBundle],
        valid_bundles: Sequence[SequenceBundle] = (),
        embedding: Optional[EmbeddingTable] = None,
    ) -> "TypeClusterEncoder":
        if embedding is None:
            raise ValueError("fit() needs the trained EmbeddingTable")
        labeled = [b for b in bundles if b.label is not None]
        if not labeled:
            raise UnminableTriplets("no labeled training datapoints")
        sample = labeled[0]
        self.model_ = EncoderModel(
            embedding_matrix=embedding.vectors,
            pad_id=embedding.pad_id,
            mask_dim=int(sample.visible_mask.shape[0]),
            id_len=len(sample.identifier_ids),
            ctx_len=len(sample.context_ids),
            hidden_size=self.hidden_size,
            output_dim=self.output_dim,
            dropout=self.dropout,
            seed=self.seed,
        )
        self.training_ = train_encoder(
            self.model_,
            labeled,
            valid_bundles,
            margin=self.margin,
            lr=self.lr,
            epochs=self.epochs,
            batch_size=self.batch_size,
            clip_norm=self.clip_norm,
            seed=self.seed,
        )
        return self

    def transform(self, bundles: Sequence[SequenceBundle]) -> np.ndarray:
        return self.model_.encode(bundles)

    def fit_transform(
        self, bundles, valid_bundles=(), embedding=None
    ) -> np.ndarray:
        return self.fit(bundles, valid_bundles, embedding).transform(bundles)
