"""Command-line surface: prepare, synth, train, evaluate, ablate, predict.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Every command is deterministic given its config and seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointFile, load_checkpoint, save_checkpoint
from .config import RunConfig, SynthConfig
from .data.align import MatchReport, align_phrases, write_match_report
from .data.corpus import (
    Corpus,
    DocumentRecord,
    RawDocument,
    build_corpus,
    corpus_from_dict,
    load_prepared_corpus,
    read_raw_corpus,
    save_prepared_corpus,
    split_corpus,
    write_raw_corpus,
)
from .data.embeddings import load_embeddings, random_pretrained
from .data.synth import synth_corpus
from .data.text import Vocab, encode_pad, tokenize
from .errors import DataError, NumericError
from .metrics import (
    build_report,
    evaluate_classification,
    evaluate_summarization,
    label_count_confusion,
    write_confusion_csv,
    write_history_csv,
    write_per_class_csv,
    write_scalar_metrics_csv,
)
from .model import ModelConfig, MultiTaskModel, summarizer_forward, classifier_forward
from .autodiff import gather_rows, no_grad
from .training import collect_predictions, dataset_loss, default_loss_config, eval_task_losses, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """argparse with exit code 1 on usage errors (argparse defaults to 2)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------


def _load_run_config(args) -> RunConfig:
    run = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "corpus", None):
        run.data.corpus = args.corpus
    if getattr(args, "embeddings", None):
        run.data.embeddings = args.embeddings
    if getattr(args, "out", None):
        run.data.out_dir = args.out
    if getattr(args, "seed", None) is not None:
        run.seed = args.seed
        run.train.seed = args.seed
    if getattr(args, "synth", None):
        _apply_synth_overrides(run.synth, args.synth)
    return run


def _apply_synth_overrides(cfg: SynthConfig, spec: str):
    for item in spec.split(","):
        if not item.strip():
            continue
        if "=" not in item:
            raise DataError(f"--synth: expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        key = key.strip()
        if not hasattr(cfg, key):
            raise DataError(f"--synth: unknown generator parameter {key!r}")
        current = getattr(cfg, key)
        if key == "class_priors":
            setattr(cfg, key, [float(v) for v in value.split("/")])
        elif isinstance(current, int):
            setattr(cfg, key, int(value))
        else:
            setattr(cfg, key, float(value))


def _detect_corpus_kind(path) -> str:
    """prepared | raw | raw_phrases, by the shape of the first JSON object."""
    with open(path, "r", encoding="utf-8") as fh:
        head = fh.read(1 << 20)
    stripped = head.lstrip()
    if not stripped:
        raise DataError(f"{path}: empty corpus file")
    first_line = stripped.splitlines()[0]
    try:
        obj = json.loads(first_line)
    except json.JSONDecodeError:
        try:
            obj = json.loads(head)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not JSON ({exc})")
    if isinstance(obj, dict) and obj.get("format"):
        return "prepared"
    if isinstance(obj, dict) and "phrases" in obj:
        return "raw_phrases"
    if isinstance(obj, dict) and "sentences" in obj:
        return "raw"
    raise DataError(f"{path}: unrecognized corpus schema")


def _get_corpus(run: RunConfig) -> Corpus:
    """Load the configured corpus, or generate and prepare the synthetic default."""
    if run.data.corpus:
        kind = _detect_corpus_kind(run.data.corpus)
        if kind == "prepared":
            return load_prepared_corpus(run.data.corpus)
        if kind == "raw":
            return build_corpus(read_raw_corpus(run.data.corpus),
                                max_sentences=run.model.max_sentences,
                                max_words=run.model.max_words)
        raise DataError(f"{run.data.corpus}: run `ctxtag prepare` first (corpus has unaligned phrases)")
    s = run.synth
    raw = synth_corpus(run.seed, s.n_docs, s.sents_per_doc, s.n_classes, s.relevance_rate,
                       s.context_strength, s.multi_label_rate, s.class_priors)
    return build_corpus(raw, max_sentences=run.model.max_sentences, max_words=run.model.max_words)


def _pretrained_table(run: RunConfig, vocab: Vocab) -> np.ndarray:
    if run.data.embeddings:
        table = load_embeddings(run.data.embeddings, vocab)
        if table.shape[1] != run.model.pretrained_dim:
            run.model.pretrained_dim = table.shape[1]
        return table
    return random_pretrained(len(vocab), run.model.pretrained_dim, run.seed)


def _build_model(run: RunConfig, corpus: Corpus, kind: str) -> MultiTaskModel:
    pretrained = _pretrained_table(run, corpus.vocab)
    cfg_kwargs = {**run.model.__dict__}
    cfg_kwargs["vocab_size"] = len(corpus.vocab)
    cfg_kwargs["n_classes"] = corpus.n_classes
    cfg = ModelConfig(**cfg_kwargs)
    rng = np.random.default_rng(run.seed)
    return MultiTaskModel(cfg, pretrained, rng, kind=kind)


def _checkpoint_config(run: RunConfig, corpus: Corpus, kind: str) -> dict:
    return {"run": run.to_dict(), "kind": kind, "classes": list(corpus.classes)}


def _model_from_checkpoint(ckpt: CheckpointFile) -> tuple[MultiTaskModel, RunConfig, list[str]]:
    run = RunConfig.from_dict(ckpt.config["run"], source="checkpoint config")
    kind = ckpt.config["kind"]
    classes = list(ckpt.config["classes"])
    cfg_kwargs = {**run.model.__dict__}
    cfg_kwargs["vocab_size"] = len(ckpt.vocab)
    cfg_kwargs["n_classes"] = len(classes)
    cfg = ModelConfig(**cfg_kwargs)
    placeholder = np.zeros((len(ckpt.vocab), cfg.pretrained_dim))
    model = MultiTaskModel(cfg, placeholder, np.random.default_rng(0), kind=kind)
    model.load_full_state(ckpt.params)
    return model, run, classes


def _train_one(run: RunConfig, corpus: Corpus, splits, kind: str, out_dir: Path):
    model = _build_model(run, corpus, kind)
    loss_cfg = default_loss_config(splits.train, corpus.n_classes, run.train.l1, run.train.l2)
    history, best = train(model, splits, run.train, loss_cfg)
    model.load_state_dict(best.params)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = CheckpointFile(
        config=_checkpoint_config(run, corpus, kind),
        vocab=list(corpus.vocab.tokens),
        params=model.full_state(),
        best_val_loss=best.val_loss,
        epoch=best.epoch,
    )
    save_checkpoint(out_dir / "checkpoint.ckpt", ckpt)
    write_history_csv(out_dir / "history.csv", history)
    return model, loss_cfg, history, best


def _eval_rows(model: MultiTaskModel, docs, loss_cfg) -> dict:
    """Table-style metrics for one model on one document set."""
    preds = collect_predictions(model, docs)
    row = {
        "cls_loss": None,
        "top1": None,
        "top3": None,
        "sum_loss": None,
        "precision": None,
        "recall": None,
        "false_negative_rate": None,
    }
    if model.classifier is not None and len(preds.label_golds):
        cls = evaluate_classification(preds.label_probs, preds.label_golds)
        _, fnr = label_count_confusion(preds.label_probs, preds.label_golds)
        row.update(top1=cls.top1, top3=cls.top3, false_negative_rate=fnr)
    if model.summarizer is not None and preds.relevance_probs.size:
        precision, recall = evaluate_summarization(preds.relevance_probs, preds.relevance_golds)
        row.update(precision=precision, recall=recall)
    cls_loss, rel_loss = eval_task_losses(model, docs, loss_cfg)
    if model.classifier is not None:
        row["cls_loss"] = cls_loss
    if model.summarizer is not None:
        row["sum_loss"] = rel_loss
    return row


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    run = _load_run_config(args)
    s = run.synth
    raw = synth_corpus(run.seed, s.n_docs, s.sents_per_doc, s.n_classes, s.relevance_rate,
                       s.context_strength, s.multi_label_rate, s.class_priors)
    write_raw_corpus(args.out, raw)
    print(f"wrote {len(raw)} synthetic documents to {args.out}")
    return EXIT_OK


def _align_one(doc_obj) -> tuple[RawDocument, "DocumentAlignmentLike"]:
    phrases = [(p["text"], set(p.get("labels", []))) for p in doc_obj["phrases"]]
    alignment = align_phrases(doc_obj["text"], phrases, doc_id=str(doc_obj["doc_id"]))
    raw = RawDocument(
        doc_id=str(doc_obj["doc_id"]),
        sentences=[tokenize(s) for s in alignment.sentences],
        label_names=[set(labels) for labels in alignment.sentence_labels],
    )
    return raw, alignment


def cmd_prepare(args) -> int:
    kind = _detect_corpus_kind(args.corpus)
    report = MatchReport()
    if kind == "prepared":
        corpus = load_prepared_corpus(args.corpus)
    elif kind == "raw":
        corpus = build_corpus(read_raw_corpus(args.corpus))
    else:
        with open(args.corpus, "r", encoding="utf-8") as fh:
            docs = [json.loads(line) for line in fh if line.strip()]
        threads = max(1, int(os.environ.get("CTXTAG_THREADS", "1")))
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(_align_one, docs))
        else:
            results = [_align_one(d) for d in docs]
        kept = []
        for raw, alignment in results:
            report.add(alignment)
            if not alignment.excluded:
                kept.append(raw)
        if not kept:
            raise DataError(f"{args.corpus}: every document had unmatched phrases")
        corpus = build_corpus(kept)
    save_prepared_corpus(args.out, corpus)
    report_path = args.report or str(Path(args.out).with_suffix(".match_report.csv"))
    write_match_report(report_path, report)
    n_unmatched = sum(not o.matched for o in report.outcomes)
    print(f"prepared {len(corpus.documents)} documents "
          f"({len(report.outcomes)} phrases, {n_unmatched} unmatched, "
          f"{len(report.excluded_documents)} documents excluded) -> {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    run = _load_run_config(args)
    corpus = _get_corpus(run)
    splits = split_corpus(corpus.documents, run.data.split_ratio, run.data.val_fraction, run.seed)
    out_dir = Path(run.data.out_dir)
    _, _, history, best = _train_one(run, corpus, splits, args.kind, out_dir)
    run.save(out_dir / "config.json")
    best_val = "n/a" if math.isinf(best.val_loss) else f"{best.val_loss:.6f}"
    print(f"trained {args.kind} model for {len(history)} epochs; "
          f"best val loss {best_val} at epoch {best.epoch}; outputs in {out_dir}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    model, run, classes = _model_from_checkpoint(ckpt)
    corpus = load_prepared_corpus(args.corpus)
    corpus_hash = corpus.vocab.sha256()
    ckpt_hash = ckpt.vocab_sha256()
    if corpus_hash != ckpt_hash:
        raise DataError(
            f"vocab hash mismatch: checkpoint {ckpt_hash} vs corpus {corpus_hash}"
        )
    splits = split_corpus(corpus.documents, run.data.split_ratio, run.data.val_fraction, run.seed)
    docs = {"train": splits.train, "val": splits.val, "test": splits.test}[args.split]
    loss_cfg = default_loss_config(splits.train, corpus.n_classes, run.train.l1, run.train.l2)
    out_dir = Path(args.out or Path(run.data.out_dir) / f"eval_{args.split}")
    out_dir.mkdir(parents=True, exist_ok=True)
    preds = collect_predictions(model, docs)
    loss = dataset_loss(model, docs, loss_cfg)
    scalars = {"loss": loss, "split": args.split, "n_documents": len(docs)}
    if model.classifier is not None and len(preds.label_golds):
        report = build_report(loss, preds.label_probs, preds.label_golds,
                              preds.relevance_probs if preds.relevance_probs.size else np.zeros(0),
                              preds.relevance_golds if preds.relevance_probs.size else np.zeros(0, dtype=bool))
        scalars.update(top1=report.top1, top3=report.top3,
                       false_negative_rate=report.false_negative_rate)
        if model.summarizer is not None:
            scalars.update(precision=report.precision, recall=report.recall)
        write_per_class_csv(out_dir / "per_class.csv", classes, report.per_class_accuracy)
        write_confusion_csv(out_dir / "confusion.csv", report.label_count_confusion)
    elif model.summarizer is not None and preds.relevance_probs.size:
        precision, recall = evaluate_summarization(preds.relevance_probs, preds.relevance_golds)
        scalars.update(precision=precision, recall=recall)
    write_scalar_metrics_csv(out_dir / "metrics.csv", scalars)
    print(f"evaluated {args.split} split ({len(docs)} documents); metrics in {out_dir}")
    return EXIT_OK


ABLATION_KINDS = ("multitask", "classifier", "summarizer")
COMPARISON_COLUMNS = ("model", "cls_loss", "top1", "top3", "sum_loss", "precision", "recall", "false_negative_rate")


def cmd_ablate(args) -> int:
    run = _load_run_config(args)
    corpus = _get_corpus(run)
    splits = split_corpus(corpus.documents, run.data.split_ratio, run.data.val_fraction, run.seed)
    out_dir = Path(run.data.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for kind in ABLATION_KINDS:
        model, loss_cfg, _, _ = _train_one(run, corpus, splits, kind, out_dir / kind)
        row = _eval_rows(model, splits.test, loss_cfg)
        row["model"] = kind
        rows.append(row)
    with open(out_dir / "comparison.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COMPARISON_COLUMNS)
        for row in rows:
            writer.writerow(["" if row.get(c) is None else
                             (repr(float(row[c])) if isinstance(row[c], float) else row[c])
                             for c in COMPARISON_COLUMNS])
    run.save(out_dir / "config.json")
    print(f"ablation complete; comparison in {out_dir / 'comparison.csv'}")
    return EXIT_OK


def _predict_documents(path, ckpt: CheckpointFile) -> list[DocumentRecord]:
    kind = _detect_corpus_kind(path)
    if kind == "prepared":
        corpus = load_prepared_corpus(path)
        corpus_hash = corpus.vocab.sha256()
        ckpt_hash = ckpt.vocab_sha256()
        if corpus_hash != ckpt_hash:
            raise DataError(f"vocab hash mismatch: checkpoint {ckpt_hash} vs corpus {corpus_hash}")
        return corpus.documents
    if kind != "raw":
        raise DataError(f"{path}: predict expects a raw or prepared corpus")
    vocab = Vocab.from_tokens(ckpt.vocab)
    run = RunConfig.from_dict(ckpt.config["run"], source="checkpoint config")
    docs = []
    for raw in read_raw_corpus(path):
        rows, masks = [], []
        for tokens in raw.sentences:
            if not tokens:
                continue
            ids, mask = encode_pad(vocab, tokens, run.model.max_words)
            rows.append(ids)
            masks.append(mask)
        if not rows:
            raise DataError(f"document {raw.doc_id}: no non-empty sentences")
        rows = rows[: run.model.max_sentences]
        masks = masks[: run.model.max_sentences]
        docs.append(DocumentRecord(doc_id=raw.doc_id, sentences=np.stack(rows),
                                   word_mask=np.stack(masks),
                                   labels=[frozenset()] * len(rows)))
    return docs


def cmd_predict(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    model, _, classes = _model_from_checkpoint(ckpt)
    if model.summarizer is None:
        raise DataError("predict needs a checkpoint with a summarizer branch")
    docs = _predict_documents(args.corpus, ckpt)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        with no_grad():
            for doc in docs:
                h_e, y_d = summarizer_forward(model, doc)
                for i in range(doc.n_sentences):
                    relevance = float(y_d.data[i])
                    labels = []
                    if relevance >= 0.5 and model.classifier is not None:
                        shared = gather_rows(h_e, i)
                        probs = classifier_forward(model, doc.sentences[i], shared).data
                        order = sorted(range(len(classes)), key=lambda c: (-probs[c], c))
                        labels = [{"class": classes[c], "prob": float(probs[c])} for c in order]
                    out.write(json.dumps({
                        "doc_id": doc.doc_id,
                        "sentence_index": i,
                        "relevance": relevance,
                        "labels": labels,
                    }, sort_keys=True))
                    out.write("\n")
    finally:
        if args.out:
            out.close()
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="ctxtag", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_common(p, corpus_required=False, checkpoint=False, split=False):
        p.add_argument("--config", help="JSON run config (all fields have defaults)")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--corpus", required=corpus_required, help="corpus file")
        p.add_argument("--embeddings", help="pretrained embedding text file")
        p.add_argument("--out", help="output directory or file")
        if checkpoint:
            p.add_argument("--checkpoint", required=True, help="checkpoint file")
        if split:
            p.add_argument("--split", choices=("train", "val", "test"), default="test")

    p = sub.add_parser("synth", help="generate a synthetic raw corpus")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--synth", help="generator overrides, e.g. n_docs=200,context_strength=1.0")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="tokenize/align a raw corpus into prepared form")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="match report CSV path")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train one model")
    add_common(p)
    p.add_argument("--synth", help="generator overrides when no corpus is given")
    p.add_argument("--kind", choices=("multitask", "classifier", "summarizer"), default="multitask")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a corpus split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True, help="prepared corpus")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="train multitask + both baselines on shared splits")
    add_common(p)
    p.add_argument("--synth", help="generator overrides when no corpus is given")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("predict", help="rank sentences and labels for documents")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True, help="raw or prepared corpus")
    p.add_argument("--out", help="output JSONL path (default stdout)")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"ctxtag: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"ctxtag: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"ctxtag: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
