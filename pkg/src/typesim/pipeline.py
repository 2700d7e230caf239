"""Staged pipeline: extract, dedup, split, embed, train, index, eval.

Every stage persists its outputs plus a manifest carrying the config hash,
the stage seed and the hashes of its input artifacts; a rerun with an
unchanged configuration verifies the manifest and skips the stage. All
randomness derives from the root seed keyed by stage name, so two
single-threaded runs with the same config produce byte-identical artifacts.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import dedup as dedup_mod
from . import extraction, visible
from .cluster import TypeClusterIndex, build_index
from .config import PipelineConfig, config_hash, derive_seed, save_config
from .embedding import (
    EmbeddingTable,
    SequenceBundle,
    SkipGramEmbedder,
    apply_ablation,
    assemble_bundles,
    build_argument_sequence,
    build_context_sequence,
    build_return_sequence,
    load_bundles,
    save_bundles,
    training_sentences,
)
from .encoder import EncoderModel, train_encoder
from .errors import SplitError, StageError
from .evaluation import EvalReport, evaluate, type_frequency_report
from .extraction import FunctionRecord, load_records, save_records
from .visible import ImportGraph, VisibleTypeVocab

log = logging.getLogger("typesim.pipeline")

ABLATION_LABELS = {
    None: "full",
    "identifiers": "w/o identifiers",
    "context": "w/o code context",
    "visible": "w/o visible type hints",
}

STAGES = ("extract", "dedup", "split", "embed", "train", "index", "eval")


def split_dataset(
    files: list[str], ratios: tuple[float, float, float] = (0.7, 0.1, 0.2), seed: int = 0
) -> dict[str, list[str]]:
    """Partition files into train/valid/test with a seeded shuffle.

    Datapoints follow their file, so nothing straddles splits. Every split
    receives at least one file; fewer than 3 files cannot be partitioned.
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise SplitError(f"ratios must sum to 1.0, got {ratios}")
    files = sorted(str(f) for f in files)
    if len(files) < 3:
        raise SplitError(f"need at least 3 files to split, got {len(files)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(files))
    shuffled = [files[i] for i in order]
    n = len(files)
    n_valid = max(1, int(ratios[1] * n))
    n_test = max(1, int(ratios[2] * n))
    n_train = n - n_valid - n_test
    return {
        "train": sorted(shuffled[:n_train]),
        "valid": sorted(shuffled[n_train : n_train + n_valid]),
        "test": sorted(shuffled[n_train + n_valid :]),
    }


# ----- artifact bookkeeping ----------------------------------------------------


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class StagePaths:
    out: Path

    # extract
    @property
    def records(self): return self.out / "functions.jsonl"
    @property
    def extraction_report(self): return self.out / "extraction_report.json"
    @property
    def import_graph(self): return self.out / "import_graph.json"
    # dedup
    @property
    def dedup_report(self): return self.out / "dedup_report.json"
    # split
    @property
    def split(self): return self.out / "split.json"
    # embed
    @property
    def embeddings_bin(self): return self.out / "embeddings.bin"
    @property
    def embeddings_meta(self): return self.out / "embeddings.json"
    @property
    def visible_vocab(self): return self.out / "visible_vocab.json"
    def bundles(self, split: str) -> Path:
        return self.out / f"datapoints_{split}.jsonl"
    # train
    @property
    def model_bin(self): return self.out / "model.bin"
    @property
    def model_manifest(self): return self.out / "model.json"
    # index
    @property
    def index_bin(self): return self.out / "index.bin"
    @property
    def index_labels(self): return self.out / "index_labels.jsonl"
    @property
    def index_manifest(self): return self.out / "index.json"
    # eval
    @property
    def eval_report(self): return self.out / "eval_report.json"
    @property
    def eval_table(self): return self.out / "eval_table.txt"
    @property
    def type_frequency(self): return self.out / "type_frequency.json"

    def manifest(self, stage: str) -> Path:
        return self.out / f"{stage}.manifest.json"


class PipelineRunner:
    """Executes stages in order with manifest-based caching."""

    def __init__(self, cfg: PipelineConfig):
        cfg.validate()
        self.cfg = cfg
        self.paths = StagePaths(Path(cfg.output_dir))
        self.hash = config_hash(cfg)
        self._stages: dict[str, Callable] = {
            "extract": self.stage_extract,
            "dedup": self.stage_dedup,
            "split": self.stage_split,
            "embed": self.stage_embed,
            "train": self.stage_train,
            "index": self.stage_index,
            "eval": self.stage_eval,
        }
        self._inputs: dict[str, Callable[[], list[Path]]] = {
            "extract": lambda: [],
            "dedup": lambda: [self.paths.records],
            "split": lambda: [self.paths.dedup_report],
            "embed": lambda: [
                self.paths.records,
                self.paths.import_graph,
                self.paths.split,
            ],
            "train": lambda: [
                self.paths.embeddings_bin,
                self.paths.embeddings_meta,
                self.paths.bundles("train"),
                self.paths.bundles("valid"),
            ],
            "index": lambda: [
                self.paths.model_bin,
                self.paths.model_manifest,
                self.paths.bundles("train"),
            ],
            "eval": lambda: [
                self.paths.model_bin,
                self.paths.index_bin,
                self.paths.index_labels,
                self.paths.bundles("test"),
                self.paths.bundles("train"),
            ],
        }

    # ----- caching ------------------------------------------------------------

    def _corpus_digest(self) -> str:
        h = hashlib.sha256()
        root = Path(self.cfg.corpus_root)
        for path in extraction.iter_corpus_files(root):
            h.update(str(path.relative_to(root)).encode("utf-8"))
            h.update(path.read_bytes())
        return h.hexdigest()

    def _input_hashes(self, stage: str) -> dict[str, str]:
        hashes = {
            str(p.name): _sha256(p) for p in self._inputs[stage]() if p.exists()
        }
        if stage in ("extract", "dedup"):
            hashes["<corpus>"] = self._corpus_digest()
        return hashes

    def _record_manifest(self, stage: str, outputs: list[Path]) -> None:
        manifest = {
            "stage": stage,
            "config_hash": self.hash,
            "stage_seed": derive_seed(self.cfg.seed, stage),
            "inputs": self._input_hashes(stage),
            "outputs": {str(p.name): _sha256(p) for p in outputs},
        }
        self.paths.manifest(stage).write_text(
            json.dumps(manifest, sort_keys=True, indent=1), encoding="utf-8"
        )

    def _cached(self, stage: str) -> bool:
        mpath = self.paths.manifest(stage)
        if not mpath.exists():
            return False
        try:
            manifest = json.loads(mpath.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            return False
        if manifest.get("config_hash") != self.hash:
            return False
        if manifest.get("inputs") != self._input_hashes(stage):
            return False
        for name, digest in manifest.get("outputs", {}).items():
            path = self.paths.out / name
            if not path.exists() or _sha256(path) != digest:
                return False
        return True

    # ----- stages ---------------------------------------------------------

    def stage_extract(self) -> list[Path]:
        cfg = self.cfg
        records, report = extraction.extract_corpus(
            cfg.corpus_root, lemmatize=cfg.lemmatize
        )
        save_records(records, self.paths.records)
        self.paths.extraction_report.write_text(
            json.dumps(report.to_dict(), sort_keys=True, indent=1), encoding="utf-8"
        )
        graph = visible.build_import_graph_from_files(cfg.corpus_root)
        graph.save(self.paths.import_graph)
        return [self.paths.records, self.paths.extraction_report, self.paths.import_graph]

    def stage_dedup(self) -> list[Path]:
        cfg = self.cfg
        detector = dedup_mod.NearDuplicateDetector(
            dim=cfg.dedup_dim,
            k=cfg.dedup_k,
            threshold=cfg.dedup_threshold,
            backend=cfg.dedup_backend,
            seed=derive_seed(cfg.seed, "dedup"),
        )
        files = extraction.iter_corpus_files(cfg.corpus_root)
        _, report = dedup_mod.dedup_files(cfg.corpus_root, files, detector)
        dedup_mod.save_report(report, self.paths.dedup_report)
        return [self.paths.dedup_report]

    def stage_split(self) -> list[Path]:
        report = json.loads(self.paths.dedup_report.read_text(encoding="utf-8"))
        kept = sorted(set(report["kept"]) | set(report["excluded_empty"]))
        splits = split_dataset(
            kept,
            (self.cfg.train_ratio, self.cfg.valid_ratio, self.cfg.test_ratio),
            seed=derive_seed(self.cfg.seed, "split"),
        )
        self.paths.split.write_text(
            json.dumps(splits, sort_keys=True, indent=1), encoding="utf-8"
        )
        return [self.paths.split]

    def _records_by_split(self) -> dict[str, list[FunctionRecord]]:
        records = load_records(self.paths.records)
        splits = json.loads(self.paths.split.read_text(encoding="utf-8"))
        by_split: dict[str, list[FunctionRecord]] = {s: [] for s in splits}
        membership = {path: s for s, paths in splits.items() for path in paths}
        for record in records:
            split = membership.get(record.module_path)
            if split is not None:
                by_split[split].append(record)
        return by_split

    def _module_masks(self, vocab: VisibleTypeVocab, graph: ImportGraph, module_paths) -> dict:
        masks = {}
        for path in module_paths:
            name = visible.module_name_for(path)
            masks[path] = vocab.mask_vector(graph.visible_types_for(name))
        return masks

    def stage_embed(self) -> list[Path]:
        cfg = self.cfg
        by_split = self._records_by_split()
        sentences = training_sentences(by_split["train"])
        embedder = SkipGramEmbedder(
            dim=cfg.embedding_dim,
            window=cfg.w2v_window,
            negative=cfg.w2v_negative,
            min_count=cfg.w2v_min_count,
            epochs=cfg.w2v_epochs,
            lr=cfg.w2v_lr,
            seed=derive_seed(cfg.seed, "embed"),
        )
        table = embedder.fit(sentences).table_
        table.save(self.paths.embeddings_bin, self.paths.embeddings_meta)

        graph = ImportGraph.load(self.paths.import_graph)
        kept_modules = sorted(
            {r.module_path for split in by_split.values() for r in split}
        )
        visible_sets = {
            visible.module_name_for(p): graph.visible_types_for(
                visible.module_name_for(p)
            )
            for p in kept_modules
        }
        vocab, _ = visible.build_vocab(
            graph, size=cfg.visible_vocab_size, visible_sets=visible_sets
        )
        vocab.save(self.paths.visible_vocab)

        outputs = [
            self.paths.embeddings_bin,
            self.paths.embeddings_meta,
            self.paths.visible_vocab,
        ]
        for split, records in by_split.items():
            masks = self._module_masks(vocab, graph, {r.module_path for r in records})
            bundles = assemble_bundles(
                records,
                table,
                masks,
                id_length=cfg.id_length,
                ctx_length=cfg.ctx_length,
                window_tokens=cfg.window_tokens,
                max_statements=cfg.max_statements,
                window_per_statement=cfg.window_per_statement,
                ablate=cfg.ablate,
            )
            supervised = [b for b in bundles if b.label is not None]
            save_bundles(supervised, self.paths.bundles(split))
            outputs.append(self.paths.bundles(split))
        return outputs

    def stage_train(self) -> list[Path]:
        cfg = self.cfg
        table = EmbeddingTable.load(self.paths.embeddings_bin, self.paths.embeddings_meta)
        train_bundles = load_bundles(self.paths.bundles("train"))
        valid_bundles = load_bundles(self.paths.bundles("valid"))
        if not train_bundles:
            raise StageError("train", "no supervised training datapoints")
        sample = train_bundles[0]
        seed = derive_seed(cfg.seed, "train")
        model = EncoderModel(
            embedding_matrix=table.vectors,
            pad_id=table.pad_id,
            mask_dim=int(sample.visible_mask.shape[0]),
            id_len=cfg.id_length,
            ctx_len=cfg.ctx_length,
            hidden_size=cfg.hidden_size,
            output_dim=cfg.output_dim,
            dropout=cfg.dropout,
            seed=seed,
        )
        result = train_encoder(
            model,
            train_bundles,
            valid_bundles,
            margin=cfg.margin,
            lr=cfg.lr,
            epochs=cfg.epochs,
            batch_size=cfg.batch_size,
            clip_norm=cfg.clip_norm,
            seed=seed,
        )
        model.save(
            self.paths.model_bin,
            self.paths.model_manifest,
            extra={"config_hash": self.hash, "training": result.to_dict()},
        )
        return [self.paths.model_bin, self.paths.model_manifest]

    def stage_index(self) -> list[Path]:
        cfg = self.cfg
        model = EncoderModel.load(self.paths.model_bin, self.paths.model_manifest)
        train_bundles = load_bundles(self.paths.bundles("train"))
        vectors = model.encode(train_bundles)
        index = build_index(
            vectors,
            [b.label for b in train_bundles],
            backend=cfg.index_backend,
            n_trees=cfg.index_trees,
            leaf_size=cfg.index_leaf_size,
            seed=derive_seed(cfg.seed, "index"),
        )
        index.save(self.paths.index_bin, self.paths.index_labels, self.paths.index_manifest)
        return [self.paths.index_bin, self.paths.index_labels, self.paths.index_manifest]

    def stage_eval(self) -> list[Path]:
        cfg = self.cfg
        model = EncoderModel.load(self.paths.model_bin, self.paths.model_manifest)
        index = TypeClusterIndex.load(
            self.paths.index_bin, self.paths.index_labels, self.paths.index_manifest
        )
        test_bundles = load_bundles(self.paths.bundles("test"))
        if not test_bundles:
            raise StageError("eval", "no supervised test datapoints")
        train_bundles = load_bundles(self.paths.bundles("train"))
        train_counts: dict[str, int] = {}
        for b in train_bundles:
            train_counts[b.label] = train_counts.get(b.label, 0) + 1

        vectors = model.encode(test_bundles)
        predictions = index.predict_batch(
            vectors, k=cfg.knn_k, kinds=[b.kind for b in test_bundles]
        )
        report = evaluate(
            list(zip(predictions, [b.label for b in test_bundles])),
            n=cfg.top_n,
            train_counts=train_counts,
        )
        report.notes["configuration"] = ABLATION_LABELS[cfg.ablate]
        report.notes["config_hash"] = self.hash
        report.save(self.paths.eval_report)
        self.paths.eval_table.write_text(
            report.render_table() + "\n", encoding="utf-8"
        )
        self.paths.type_frequency.write_text(
            json.dumps(
                type_frequency_report([b.label for b in train_bundles]),
                sort_keys=True,
                indent=1,
            ),
            encoding="utf-8",
        )
        return [self.paths.eval_report, self.paths.eval_table, self.paths.type_frequency]

    # ----- driver ---------------------------------------------------------

    def run(self, stages: Optional[list[str]] = None, force: bool = False) -> dict:
        self.paths.out.mkdir(parents=True, exist_ok=True)
        save_config(self.cfg, self.paths.out / "config.yaml")
        executed, skipped = [], []
        for stage in stages or STAGES:
            if stage not in self._stages:
                raise StageError(stage, "unknown stage")
            if not force and self._cached(stage):
                log.info("stage %s: cached, skipping", stage)
                skipped.append(stage)
                continue
            log.info("stage %s: running", stage)
            try:
                outputs = self._stages[stage]()
            except StageError:
                raise
            except Exception as exc:
                raise StageError(stage, str(exc)) from exc
            self._record_manifest(stage, outputs)
            executed.append(stage)
        return {"executed": executed, "skipped": skipped}


def run_pipeline(cfg: PipelineConfig, stages: Optional[list[str]] = None, force: bool = False) -> dict:
    return PipelineRunner(cfg).run(stages=stages, force=force)


# ----- single-datapoint prediction ---------------------------------------------


def predict_for_source(
    cfg: PipelineConfig,
    source_path: str | Path,
    function: str,
    argument: Optional[str] = None,
    top: int = 3,
) -> dict:
    """Predict types for one argument (or the return) of one function.

    Loads the persisted artifacts, extracts the requested slot from the
    file, assembles its bundle exactly as the pipeline would, and queries
    the type-cluster index.
    """
    paths = StagePaths(Path(cfg.output_dir))
    table = EmbeddingTable.load(paths.embeddings_bin, paths.embeddings_meta)
    model = EncoderModel.load(paths.model_bin, paths.model_manifest)
    index = TypeClusterIndex.load(
        paths.index_bin, paths.index_labels, paths.index_manifest
    )
    vocab = VisibleTypeVocab.load(paths.visible_vocab)
    graph = ImportGraph.load(paths.import_graph)

    source_path = Path(source_path)
    source = source_path.read_text(encoding="utf-8")
    try:
        rel = source_path.relative_to(Path(cfg.corpus_root))
    except ValueError:
        rel = Path(source_path.name)
    records = extraction.parse_module(source, str(rel), lemmatize=cfg.lemmatize)
    matches = [
        r for r in records if r.qualified_name == function or r.name == function
    ]
    if not matches:
        raise ValueError(f"function {function!r} not found in {source_path}")
    if len(matches) > 1:
        names = sorted(r.qualified_name for r in matches)
        raise ValueError(f"function name {function!r} is ambiguous: {names}")
    record = matches[0]

    info = visible.scan_module_imports(source, str(rel))
    graph.modules[info.name] = info
    mask = vocab.mask_vector(graph.visible_types_for(info.name))

    if argument is None:
        identifier_ids = build_return_sequence(record, table, cfg.id_length)
        statements = record.return_exprs
        kind, slot = "return", "<return>"
    else:
        candidates = [a for a in record.arguments if a.name == argument]
        if not candidates:
            raise ValueError(
                f"argument {argument!r} not found on {record.qualified_name}"
            )
        arg = candidates[0]
        identifier_ids = build_argument_sequence(arg, record, table, cfg.id_length)
        statements = arg.usage_sequences
        kind, slot = "argument", argument

    bundle = SequenceBundle(
        identifier_ids=identifier_ids,
        context_ids=build_context_sequence(
            statements,
            table,
            cfg.ctx_length,
            cfg.window_tokens,
            cfg.max_statements,
            cfg.window_per_statement,
        ),
        visible_mask=mask,
        kind=kind,
        module_path=str(rel),
        qualified_name=record.qualified_name,
        slot=slot,
    )
    apply_ablation(bundle, cfg.ablate, table.pad_id)
    vector = model.encode([bundle])[0]
    prediction = index.predict(vector, k=cfg.knn_k, kind=kind)
    return {
        "function": record.qualified_name,
        "slot": slot,
        "kind": kind,
        "predictions": [
            {"type": t, "probability": p} for t, p in prediction.top_n(top)
        ],
    }
