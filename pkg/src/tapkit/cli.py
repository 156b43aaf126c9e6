"""Command-line entrypoint covering the whole pipeline.

Subcommands: ``synth`` (generate a planted-rule corpus), ``train``, ``eval``
(cross-validation plus the clickable baseline), ``predict`` (per-element
table for one screen), ``analyze`` (all signifier analytics), ``agreement``
(rater consistency), ``serve`` (HTTP service), and ``plot`` (render the
analytics to PNGs).

Exit codes: 0 on success, 1 on usage errors, 2 on data errors. The
``TAPKIT_LOG`` environment variable sets log verbosity (DEBUG, INFO,
WARNING, ...).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

log = logging.getLogger("tapkit.cli")

USAGE_ERROR = 1
DATA_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _data_errors():
    from .corpus import CorpusError
    from .features import EncodingError
    from .hierarchy import HierarchyParseError
    from .model import CheckpointError
    from .consistency import ConsistencyError
    from .evaluation import EvaluationError
    from .signifiers import SignifierError

    return (
        CorpusError, EncodingError, HierarchyParseError, CheckpointError,
        ConsistencyError, EvaluationError, SignifierError, FileNotFoundError,
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="tapkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a seeded synthetic corpus")
    synth.add_argument("--out", required=True, help="output corpus directory")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--screens", type=int, default=10)
    synth.add_argument("--elements-per-screen", type=int, default=10)
    synth.add_argument("--disagreement", type=float, default=0.2,
                       help="fraction of elements whose clickable attribute contradicts the label")
    synth.add_argument("--raters", type=int, default=5,
                       help="ratings per element for the consistency analyses (0 to skip)")

    train = sub.add_parser("train", help="train a model and write a checkpoint")
    train.add_argument("--corpus", required=True)
    train.add_argument("--embeddings", default=None,
                       help="embedding table file (default: <corpus>/embeddings.txt)")
    train.add_argument("--vocab", default=None, help="type vocabulary file (default: built in)")
    train.add_argument("--checkpoint", required=True, help="output checkpoint path")
    train.add_argument("--seed", type=int, default=0)
    train.add_argument("--steps", type=int, default=2000)
    train.add_argument("--batch", type=int, default=64)
    train.add_argument("--lr", type=float, default=0.01)

    evl = sub.add_parser("eval", help="k-fold cross-validation and the clickable baseline")
    evl.add_argument("--corpus", required=True)
    evl.add_argument("--embeddings", default=None)
    evl.add_argument("--k-folds", type=int, default=10)
    evl.add_argument("--seed", type=int, default=0)
    evl.add_argument("--steps", type=int, default=2000)
    evl.add_argument("--batch", type=int, default=64)
    evl.add_argument("--lr", type=float, default=0.01)
    evl.add_argument("--workers", type=int, default=1, help="fold worker processes")
    evl.add_argument("--out", default=None, help="write the full report here")

    predict = sub.add_parser("predict", help="per-element probabilities for one screen")
    predict.add_argument("--corpus", required=True)
    predict.add_argument("--checkpoint", required=True)
    predict.add_argument("--screen", required=True, help="screen id inside the corpus")
    predict.add_argument("--embeddings", default=None)
    predict.add_argument("--seed", type=int, default=0, help="element-selection seed")
    predict.add_argument("--threshold", type=float, default=None)

    analyze = sub.add_parser("analyze", help="run every signifier analysis")
    analyze.add_argument("--corpus", required=True)
    analyze.add_argument("--out", required=True, help="output directory for the reports")
    analyze.add_argument("--seed", type=int, default=0)

    agreement = sub.add_parser("agreement", help="rater agreement and consistency bins")
    agreement.add_argument("--corpus", required=True)
    agreement.add_argument("--checkpoint", default=None,
                           help="add the model-probability bin table")
    agreement.add_argument("--embeddings", default=None)
    agreement.add_argument("--out", default=None)

    serve = sub.add_parser("serve", help="start the analysis HTTP service")
    serve.add_argument("--checkpoint", required=True)
    serve.add_argument("--embeddings", required=True)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8422)

    plot = sub.add_parser("plot", help="render analytics to PNG images")
    plot.add_argument("--corpus", required=True)
    plot.add_argument("--out", required=True)
    plot.add_argument("--checkpoint", default=None,
                      help="also render the consistency scatter (needs ratings)")
    plot.add_argument("--embeddings", default=None)
    plot.add_argument("--seed", type=int, default=0)
    return parser


def _load_corpus(path):
    from .corpus import load_corpus

    return load_corpus(path)


def _load_table(args):
    from .features import load_embedding_table

    path = args.embeddings or str(Path(args.corpus) / "embeddings.txt")
    return load_embedding_table(path)


def _cmd_synth(args) -> int:
    from .corpus import save_corpus
    from .features import write_embedding_table
    from .rng import RngStream
    from .synthetic import generate_synthetic, wordlist

    corpus = generate_synthetic(
        seed=args.seed,
        n_screens=args.screens,
        elements_per_screen=args.elements_per_screen,
        clickable_disagreement=args.disagreement,
        raters=args.raters,
    )
    save_corpus(corpus, args.out)
    write_embedding_table(
        Path(args.out) / "embeddings.txt", wordlist(), RngStream(args.seed).child("embeddings")
    )
    labels = sum(ex.human_label for ex in corpus.examples)
    print(
        f"wrote {len(corpus)} examples over {args.screens} screens to {args.out} "
        f"({labels} tappable, {len(corpus) - labels} not)"
    )
    return 0


def _model_config(args):
    from .model import ModelConfig

    return ModelConfig(seed=args.seed, steps=args.steps, batch_size=args.batch,
                       learning_rate=args.lr)


def _cmd_train(args) -> int:
    from .features import load_type_vocab
    from .model import TappabilityModel, save_checkpoint, train

    corpus = _load_corpus(args.corpus)
    table = _load_table(args)
    vocab = load_type_vocab(args.vocab) if args.vocab else None
    config = _model_config(args)
    net = TappabilityModel.build(config, type_vocab=vocab, embedding_fingerprint=table.fingerprint)
    result = train(net, corpus, table, config=config)
    save_checkpoint(result.checkpoint, args.checkpoint)
    print(
        f"trained {config.steps} steps on {len(corpus)} examples; "
        f"final loss {result.step_losses[-1]:.4f}, "
        f"threshold {result.checkpoint.threshold:.4f} ({result.threshold_source}), "
        f"checkpoint {args.checkpoint}"
    )
    return 0


def _cmd_eval(args) -> int:
    from .evaluation import cross_validate

    corpus = _load_corpus(args.corpus)
    table = _load_table(args)
    result = cross_validate(
        corpus, table, config=_model_config(args), k=args.k_folds, workers=args.workers
    )
    text = result.to_text()
    if args.out:
        Path(args.out).write_text(text, "utf-8")
        print(f"report written to {args.out}")
    print(
        f"mean precision {result.mean_precision:.4f} (sd {result.sd_precision:.4f}), "
        f"mean recall {result.mean_recall:.4f} (sd {result.sd_recall:.4f}); "
        f"clickable baseline precision {result.baseline.precision:.4f} "
        f"recall {result.baseline.recall:.4f}"
    )
    return 0


def _cmd_predict(args) -> int:
    from .corpus import CorpusError
    from .features import encode_element, resize_screen
    from .hierarchy import select_elements
    from .model import dataset_from_bundles, load_checkpoint, predict_probabilities
    from .rng import RngStream

    corpus = _load_corpus(args.corpus)
    table = _load_table(args)
    ckpt = load_checkpoint(args.checkpoint, table)
    if args.screen not in corpus.screens:
        raise CorpusError(f"screen {args.screen!r} not in corpus")
    screen = corpus.screens[args.screen]
    elements = select_elements(screen, RngStream(args.seed))
    threshold = args.threshold if args.threshold is not None else ckpt.threshold
    screen_image = resize_screen(screen.pixels)
    bundles = [
        encode_element(screen, el, table, ckpt.model.type_vocab, screen_image=screen_image)
        for el in elements
    ]
    probs = predict_probabilities(ckpt.model, dataset_from_bundles(bundles)) if bundles else []
    print("element_id\tclass\tclickable\tprobability\tperceived\tmismatch")
    for el, p in zip(elements, probs):
        perceived = p >= threshold
        print(
            f"{el.id}\t{el.class_name}\t{int(el.clickable)}\t{p:.4f}"
            f"\t{int(perceived)}\t{int(perceived != el.clickable)}"
        )
    return 0


def _cmd_analyze(args) -> int:
    from . import signifiers as sig

    corpus = _load_corpus(args.corpus)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    by_type = sig.accuracy_by_type(corpus)
    lines = ["type\ttappable_accuracy\tn_tappable\tnot_tappable_accuracy\tn_not_tappable"]
    for name in sorted(by_type):
        t = by_type[name]
        fmt = lambda v: "-" if v is None else f"{v:.4f}"
        lines.append(
            f"{name}\t{fmt(t.tappable_accuracy)}\t{t.n_tappable}"
            f"\t{fmt(t.not_tappable_accuracy)}\t{t.n_not_tappable}"
        )
    (out / "accuracy_by_type.tsv").write_text("\n".join(lines) + "\n", "utf-8")

    for cls in (sig.TAPPABLE, sig.NOT_TAPPABLE):
        grid = sig.location_heatmap(corpus, cls)
        (out / f"heatmap_{cls}.txt").write_text(grid.to_text(), "utf-8")
        palette = sig.dominant_colors(corpus, cls, seed=args.seed)
        (out / f"palette_{cls}.txt").write_text(palette.to_text(), "utf-8")

    stats = sig.size_stats(corpus)
    wc = sig.word_count_stats(corpus)
    tap_doc, non_doc = _class_documents(corpus)
    summary = ["tapkit-signifier-summary v1"]
    ratio = stats.mislabeled_tappable_area_ratio
    summary.append(f"mislabeled_tappable_area_ratio: {'-' if ratio is None else f'{ratio:.4f}'}")
    for name, (mean_r, median_r) in sorted(stats.per_type_ratio.items()):
        summary.append(f"size_ratio[{name}]: mean {mean_r:.4f} median {median_r:.4f}")
    if wc.mean_ratio is not None:
        summary.append(f"log_word_count_ratio: {wc.mean_ratio:.4f}")
    if tap_doc and non_doc:
        tap_kw, non_kw = sig.tfidf_keywords(tap_doc, non_doc)
        summary.append("keywords[tappable]: " + " ".join(k.term for k in tap_kw))
        summary.append("keywords[not-tappable]: " + " ".join(k.term for k in non_kw))
    (out / "summary.txt").write_text("\n".join(summary) + "\n", "utf-8")
    print(f"analyses written to {out}")
    return 0


def _class_documents(corpus):
    tap, non = [], []
    for ex in corpus.examples:
        text = corpus.element(ex.screen_id, ex.element_id).text
        if text:
            (tap if ex.human_label else non).append(text)
    return " ".join(tap), " ".join(non)


def _cmd_agreement(args) -> int:
    from .consistency import agreement_result, consistency_bins, fleiss_kappa, rating_matrix
    from .model import load_checkpoint

    corpus = _load_corpus(args.corpus)
    if not corpus.ratings:
        from .corpus import CorpusError

        raise CorpusError("corpus has no ratings.jsonl; agreement needs multi-rater data")
    lines = [agreement_result(corpus).to_text().rstrip()]
    kappa = fleiss_kappa(rating_matrix(corpus.ratings))
    lines.append(kappa.to_text().rstrip())
    if args.checkpoint:
        table = _load_table(args)
        ckpt = load_checkpoint(args.checkpoint, table)
        bins = consistency_bins(corpus, ckpt, table)
        lines.append(bins.to_text().rstrip())
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, "utf-8")
    print(text, end="")
    return 0


def _cmd_serve(args) -> int:
    from .server import serve

    serve(args.checkpoint, args.embeddings, host=args.host, port=args.port)
    return 0


def _cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import numpy as np

    from . import signifiers as sig

    corpus = _load_corpus(args.corpus)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    fig, axes = plt.subplots(1, 2, figsize=(7, 6))
    for ax, cls in zip(axes, (sig.TAPPABLE, sig.NOT_TAPPABLE)):
        grid = sig.location_heatmap(corpus, cls)
        ax.imshow(grid.accuracy(), cmap="coolwarm_r", vmin=0, vmax=1)
        ax.set_title(f"{cls} accuracy")
        ax.axis("off")
    fig.savefig(out / "heatmaps.png", dpi=120, bbox_inches="tight")
    plt.close(fig)

    fig, axes = plt.subplots(2, 1, figsize=(8, 3))
    for ax, cls in zip(axes, (sig.TAPPABLE, sig.NOT_TAPPABLE)):
        palette = sig.dominant_colors(corpus, cls, seed=args.seed)
        left = 0.0
        for color, share in zip(palette.centroids, palette.proportions):
            ax.barh(0, share, left=left, color=color)
            left += share
        ax.set_xlim(0, 1)
        ax.set_yticks([])
        ax.set_title(f"{cls} dominant colors")
    fig.savefig(out / "palettes.png", dpi=120, bbox_inches="tight")
    plt.close(fig)

    if args.checkpoint and corpus.ratings:
        from .consistency import consistency_bins
        from .model import load_checkpoint

        table = _load_table(args)
        ckpt = load_checkpoint(args.checkpoint, table)
        bins = consistency_bins(corpus, ckpt, table)
        fig, ax = plt.subplots(figsize=(8, 4))
        for b in bins.bins:
            xs = np.full(len(b.probabilities), b.tappable_votes)
            ax.scatter(xs, b.probabilities, s=12, alpha=0.5, color="tab:blue")
        ax.set_xticks(range(6))
        ax.set_xticklabels([b.label for b in bins.bins], rotation=20, ha="right", fontsize=7)
        ax.set_ylabel("model probability")
        fig.savefig(out / "consistency_scatter.png", dpi=120, bbox_inches="tight")
        plt.close(fig)
    print(f"plots written to {out}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "predict": _cmd_predict,
    "analyze": _cmd_analyze,
    "agreement": _cmd_agreement,
    "serve": _cmd_serve,
    "plot": _cmd_plot,
}


def run(argv=None) -> int:
    level = os.environ.get("TAPKIT_LOG", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_ERROR
    try:
        return _COMMANDS[args.command](args)
    except _data_errors() as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
